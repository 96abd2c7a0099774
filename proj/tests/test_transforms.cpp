#include <gtest/gtest.h>

#include <cmath>

#include "surrogate/common.hpp"
#include "surrogate/error.hpp"
#include "surrogate/transforms.hpp"

namespace surrogate {
namespace {

TEST(Standardize, HandComputed) {
    Matrix X(2, 1);
    X << 0.0, 2.0;
    const auto p = fit_standardize(X);
    EXPECT_DOUBLE_EQ(p.mean(0), 1.0);
    EXPECT_DOUBLE_EQ(p.std(0), std::sqrt(2.0));
}

TEST(Standardize, ConstantColumnNamed) {
    Matrix X(3, 2);
    X << 1, 4, 2, 4, 3, 4;
    try {
        fit_standardize(X, {"a", "flat"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateColumn);
        EXPECT_NE(e.message().find("flat"), std::string::npos);
    }
}

TEST(Standardize, RefitIsIdempotent) {
    Rng rng(1);
    Matrix X(50, 3);
    for (Index i = 0; i < X.size(); ++i) X.data()[i] = 5.0 + 3.0 * rng.normal();
    const Matrix Z = apply_standardize(fit_standardize(X), X);
    const auto p = fit_standardize(Z);
    EXPECT_LT(p.mean.cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p.std.array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_LT((invert_standardize(fit_standardize(X), Z) - X).cwiseAbs().maxCoeff(), 1e-12 * X.cwiseAbs().maxCoeff());
}

TEST(Standardize, ArithmeticAndMismatch) {
    StandardizeParams p{Vector::Constant(1, 1.0), Vector::Constant(1, 2.0)};
    EXPECT_DOUBLE_EQ(apply_standardize(p, Matrix::Constant(1, 1, 3.0))(0, 0), 1.0);
    StandardizeParams id{Vector::Zero(2), Vector::Ones(2)};
    const Matrix x = Matrix::Random(3, 2);
    EXPECT_EQ(apply_standardize(id, x), x);
    EXPECT_THROW(apply_standardize(p, Matrix::Zero(2, 2)), Error);
}

double grid_best(const Vector& positive, double step) {
    double best = -INFINITY, arg = 0;
    for (double l = kLambdaMin; l <= kLambdaMax + 1e-12; l += step) {
        const double v = boxcox_log_likelihood(positive, l);
        if (v > best) {
            best = v;
            arg = l;
        }
    }
    return arg;
}

TEST(BoxCox, LognormalGivesLogTransform) {
    Rng rng(2);
    Matrix Y(1000, 1);
    for (Index i = 0; i < Y.rows(); ++i) Y(i, 0) = std::exp(rng.normal());
    const auto p = fit_boxcox(Y);
    EXPECT_GE(p.lambda(0), -0.2);
    EXPECT_LE(p.lambda(0), 0.2);
    EXPECT_NEAR(p.lambda(0), grid_best(Y.col(0).array() + p.shift(0), 1e-3), 2e-3);
}

TEST(BoxCox, NormalGivesAffineTransform) {
    Rng rng(3);
    Matrix Y(1000, 1);
    for (Index i = 0; i < Y.rows(); ++i) Y(i, 0) = 50.0 + 5.0 * rng.normal();
    const auto p = fit_boxcox(Y);
    EXPECT_GE(p.lambda(0), 0.7);
    EXPECT_LE(p.lambda(0), 1.3);
}

TEST(BoxCox, ChosenLambdaBeatsFineGrid) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        Matrix Y(200, 1);
        const double power = 0.3 + 0.4 * static_cast<double>(seed);
        for (Index i = 0; i < Y.rows(); ++i) Y(i, 0) = std::pow(1.0 + rng.uniform() * 4.0, power) - 1.5;
        const auto p = fit_boxcox(Y);
        const Vector pos = Y.col(0).array() + p.shift(0);
        EXPECT_GT(pos.minCoeff(), 0.0);
        const double grid = boxcox_log_likelihood(pos, grid_best(pos, 1e-3));
        EXPECT_GE(boxcox_log_likelihood(pos, p.lambda(0)), grid - 1e-6);
    }
}

TEST(BoxCox, PointMassAtMinimumIsIgnoredForLambda) {
    Rng rng(6);
    Matrix Y(600, 1);
    Vector above(300);
    for (Index i = 0; i < 600; ++i) {
        Y(i, 0) = i % 2 == 0 ? 0.0 : std::exp(1.0 + 0.3 * rng.normal());
        if (i % 2 == 1) above(i / 2) = Y(i, 0);
    }
    const auto p = fit_boxcox(Y);
    const Vector pos = above.array() + p.shift(0);
    EXPECT_GE(boxcox_log_likelihood(pos, p.lambda(0)), boxcox_log_likelihood(pos, grid_best(pos, 1e-3)) - 1e-6);
    EXPECT_LT(p.lambda(0), 0.5);
    EXPECT_GT(p.lambda(0), -0.5);
    const Matrix back = invert_boxcox(p, apply_boxcox(p, Y));
    EXPECT_LE((back - Y).cwiseAbs().maxCoeff(), 1e-9 * Y.maxCoeff());
}

TEST(BoxCox, RoundTripAndMonotone) {
    Rng rng(4);
    Matrix Y(300, 3);
    for (Index i = 0; i < Y.rows(); ++i) {
        Y(i, 0) = std::exp(2.0 * rng.normal());
        Y(i, 1) = rng.normal() - 3.0;
        Y(i, 2) = std::max(0.0, rng.normal());
    }
    const auto p = fit_boxcox(Y);
    const Matrix Z = apply_boxcox(p, Y);
    const Matrix back = invert_boxcox(p, Z);
    for (Index j = 0; j < 3; ++j) {
        EXPECT_LE((back.col(j) - Y.col(j)).cwiseAbs().maxCoeff(), 1e-9 * Y.col(j).cwiseAbs().maxCoeff());
        for (Index a = 0; a < Y.rows(); ++a) {
            const Index b = (a + 1) % Y.rows();
            if (Y(a, j) < Y(b, j)) EXPECT_LT(Z(a, j), Z(b, j));
        }
    }
}

TEST(BoxCox, FormulaSpotValues) {
    EXPECT_DOUBLE_EQ(boxcox(std::exp(1.0), 0.0), 1.0);
    EXPECT_DOUBLE_EQ(boxcox(3.0, 1.0), 2.0);
    EXPECT_NEAR(inv_boxcox(boxcox(2.5, -0.7), -0.7), 2.5, 1e-14);
    EXPECT_THROW(inv_boxcox(1.0, -1.0), Error);
}

TEST(BoxCox, ValidatesInput) {
    EXPECT_THROW(fit_boxcox(Matrix::Ones(2, 1)), Error);
    EXPECT_THROW(fit_boxcox(Matrix::Ones(5, 1)), Error);
}

BoxCoxParams single(double lambda) {
    BoxCoxParams p;
    p.lambda = Vector::Constant(1, lambda);
    p.shift = Vector::Zero(1);
    p.post_standardize = {Vector::Zero(1), Vector::Ones(1)};
    return p;
}

TEST(Pushforward, DegenerateGaussian) {
    const auto p = single(0.5);
    const auto r = pushforward_gaussian(p, Vector::Constant(1, 0.8), Vector::Zero(1));
    EXPECT_DOUBLE_EQ(r.mean(0), inv_boxcox(0.8, 0.5));
    EXPECT_EQ(r.variance(0), 0.0);
}

TEST(Pushforward, AffineCase) {
    const auto r = pushforward_gaussian(single(1.0), Vector::Constant(1, 2.0), Vector::Constant(1, 0.04));
    EXPECT_NEAR(r.mean(0), 3.0, 1e-12);
    EXPECT_NEAR(r.variance(0), 0.04, 1e-12);
    EXPECT_FALSE(r.range_clipped[0]);
}

TEST(Pushforward, LognormalClosedForm) {
    const auto r = pushforward_gaussian(single(0.0), Vector::Zero(1), Vector::Constant(1, 0.25));
    const double mean = std::exp(0.125);
    const double var = (std::exp(0.25) - 1.0) * std::exp(0.25);
    EXPECT_LE(std::abs(r.mean(0) - mean) / mean, 1e-6);
    EXPECT_LE(std::abs(r.variance(0) - var) / var, 1e-6);
}

TEST(Pushforward, ClipsOutsideDomain) {
    // lambda = 1 has domain t > -1; a wide latent reaches beyond it.
    const auto r = pushforward_gaussian(single(1.0), Vector::Constant(1, -0.5), Vector::Constant(1, 4.0));
    EXPECT_TRUE(r.range_clipped[0]);
    EXPECT_TRUE(std::isfinite(r.mean(0)));
}

}  // namespace
}  // namespace surrogate
