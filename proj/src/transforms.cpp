#include "surrogate/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/tools/minima.hpp>

#include "surrogate/design_space.hpp"
#include "surrogate/error.hpp"
#include "surrogate/stats.hpp"

namespace surrogate {

namespace {

std::string column_label(Index j, const std::vector<std::string>& names) {
    if (static_cast<std::size_t>(j) < names.size()) return "'" + names[static_cast<std::size_t>(j)] + "'";
    return "column " + std::to_string(j);
}

void check_columns(Index expected, Index got, const char* what) {
    if (expected != got) {
        fail(ErrorCode::DimensionMismatch, std::string(what) + ": expected " + std::to_string(expected) +
                                               " columns, got " + std::to_string(got));
    }
}

}  // namespace

nlohmann::json StandardizeParams::to_json() const {
    return {{"mean", vector_to_json(mean)}, {"std", vector_to_json(std)}};
}

StandardizeParams StandardizeParams::from_json(const nlohmann::json& j) {
    StandardizeParams p{vector_from_json(j.at("mean")), vector_from_json(j.at("std"))};
    if (p.mean.size() != p.std.size()) fail(ErrorCode::Format, "standardize params length mismatch");
    return p;
}

StandardizeParams fit_standardize(const Matrix& X, const std::vector<std::string>& names) {
    if (X.rows() < 2) fail(ErrorCode::InsufficientData, "standardization needs at least 2 rows");
    StandardizeParams p{Vector(X.cols()), Vector(X.cols())};
    for (Index j = 0; j < X.cols(); ++j) {
        const double m = X.col(j).mean();
        const double ss = (X.col(j).array() - m).square().sum();
        const double sd = std::sqrt(ss / static_cast<double>(X.rows() - 1));
        if (!(sd > 0.0) || !std::isfinite(sd)) {
            fail(ErrorCode::DegenerateColumn, column_label(j, names) + " has zero variance");
        }
        p.mean(j) = m;
        p.std(j) = sd;
    }
    return p;
}

Matrix apply_standardize(const StandardizeParams& params, const Matrix& X) {
    check_columns(params.size(), X.cols(), "apply_standardize");
    Matrix out(X.rows(), X.cols());
    for (Index j = 0; j < X.cols(); ++j) {
        out.col(j) = (X.col(j).array() - params.mean(j)) / params.std(j);
    }
    return out;
}

Matrix invert_standardize(const StandardizeParams& params, const Matrix& Z) {
    check_columns(params.size(), Z.cols(), "invert_standardize");
    Matrix out(Z.rows(), Z.cols());
    for (Index j = 0; j < Z.cols(); ++j) {
        out.col(j) = Z.col(j).array() * params.std(j) + params.mean(j);
    }
    return out;
}

double boxcox(double x, double lambda) {
    if (!(x > 0.0)) fail(ErrorCode::DomainError, "Box-Cox needs a positive argument");
    const double lx = std::log(x);
    if (lambda == 0.0) return lx;
    return std::expm1(lambda * lx) / lambda;
}

double inv_boxcox(double t, double lambda) {
    if (lambda == 0.0) return std::exp(t);
    const double base = lambda * t + 1.0;
    if (!(base > 0.0)) fail(ErrorCode::DomainError, "value outside the image of the Box-Cox transform");
    return std::exp(std::log1p(lambda * t) / lambda);
}

double boxcox_log_likelihood(const Vector& positive, double lambda) {
    const auto n = static_cast<double>(positive.size());
    Vector t(positive.size());
    double log_sum = 0.0;
    for (Index i = 0; i < positive.size(); ++i) {
        t(i) = boxcox(positive(i), lambda);
        log_sum += std::log(positive(i));
    }
    const double m = t.mean();
    const double var = (t.array() - m).square().sum() / n;
    if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
    return -0.5 * n * std::log(var) + (lambda - 1.0) * log_sum;
}

namespace {

double fit_lambda(const Vector& positive) {
    // Coarse scan brackets the maximum, Brent refines inside the bracket.
    constexpr int kGrid = 200;
    const double step = (kLambdaMax - kLambdaMin) / kGrid;
    int best = 0;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= kGrid; ++k) {
        const double ll = boxcox_log_likelihood(positive, kLambdaMin + k * step);
        if (ll > best_ll) {
            best_ll = ll;
            best = k;
        }
    }
    const double lo = kLambdaMin + std::max(0, best - 1) * step;
    const double hi = kLambdaMin + std::min(kGrid, best + 1) * step;
    auto neg = [&](double lambda) { return -boxcox_log_likelihood(positive, lambda); };
    const auto [lambda, value] = boost::math::tools::brent_find_minima(neg, lo, hi, 40);
    const double grid_lambda = kLambdaMin + best * step;
    return -value >= best_ll ? lambda : grid_lambda;
}

}  // namespace

double BoxCoxParams::to_latent(Index o, double y) const {
    const double x = y + shift(o);
    if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
    return (boxcox(x, lambda(o)) - post_standardize.mean(o)) / post_standardize.std(o);
}

bool BoxCoxParams::latent_in_domain(Index o, double z) const {
    const double t = z * post_standardize.std(o) + post_standardize.mean(o);
    return lambda(o) == 0.0 || lambda(o) * t + 1.0 > 0.0;
}

double BoxCoxParams::from_latent(Index o, double z) const {
    const double t = z * post_standardize.std(o) + post_standardize.mean(o);
    return inv_boxcox(t, lambda(o)) - shift(o);
}

nlohmann::json BoxCoxParams::to_json() const {
    return {{"lambda", vector_to_json(lambda)},
            {"shift", vector_to_json(shift)},
            {"post_standardize", post_standardize.to_json()}};
}

BoxCoxParams BoxCoxParams::from_json(const nlohmann::json& j) {
    BoxCoxParams p{vector_from_json(j.at("lambda")), vector_from_json(j.at("shift")),
                   StandardizeParams::from_json(j.at("post_standardize"))};
    if (p.shift.size() != p.lambda.size() || p.post_standardize.size() != p.lambda.size()) {
        fail(ErrorCode::Format, "Box-Cox params length mismatch");
    }
    return p;
}

namespace {

// A repeated minimum is a point mass at the lower bound (outputs that are exactly
// zero over part of the design space). It carries no shape information, so lambda
// is fitted on the rows above it.
Vector lambda_sample(const Eigen::Ref<const Vector>& y, const Vector& positive, double lo) {
    const Index at_min = (y.array() == lo).count();
    if (at_min < 2 || y.size() - at_min < 3) return positive;
    Vector above(y.size() - at_min);
    Index k = 0;
    for (Index i = 0; i < y.size(); ++i) {
        if (y(i) != lo) above(k++) = positive(i);
    }
    return above;
}

}  // namespace

BoxCoxParams fit_boxcox(const Matrix& Y, const std::vector<std::string>& names) {
    if (Y.rows() < 3) fail(ErrorCode::InsufficientData, "Box-Cox fitting needs at least 3 rows");
    const Index k = Y.cols();
    BoxCoxParams p{Vector(k), Vector(k), {}};
    Matrix transformed(Y.rows(), k);
    for (Index j = 0; j < k; ++j) {
        const double lo = Y.col(j).minCoeff();
        const double range = Y.col(j).maxCoeff() - lo;
        if (!std::isfinite(range)) fail(ErrorCode::DomainError, column_label(j, names) + " has non-finite values");
        const double eps = 1e-6 * (range > 0.0 ? range : 1.0);
        p.shift(j) = std::max(0.0, eps - lo);
        const Vector positive = Y.col(j).array() + p.shift(j);
        if (range == 0.0) fail(ErrorCode::DegenerateColumn, column_label(j, names) + " is constant");
        p.lambda(j) = fit_lambda(lambda_sample(Y.col(j), positive, lo));
        for (Index i = 0; i < Y.rows(); ++i) transformed(i, j) = boxcox(positive(i), p.lambda(j));
    }
    p.post_standardize = fit_standardize(transformed, names);
    return p;
}

Matrix apply_boxcox(const BoxCoxParams& params, const Matrix& Y) {
    check_columns(params.size(), Y.cols(), "apply_boxcox");
    Matrix out(Y.rows(), Y.cols());
    for (Index j = 0; j < Y.cols(); ++j) {
        for (Index i = 0; i < Y.rows(); ++i) {
            const double x = Y(i, j) + params.shift(j);
            if (!(x > 0.0)) {
                fail(ErrorCode::DomainError, "apply_boxcox: row " + std::to_string(i) + " column " +
                                                 std::to_string(j) + " is below -shift");
            }
            out(i, j) = (boxcox(x, params.lambda(j)) - params.post_standardize.mean(j)) / params.post_standardize.std(j);
        }
    }
    return out;
}

Matrix invert_boxcox(const BoxCoxParams& params, const Matrix& Z) {
    check_columns(params.size(), Z.cols(), "invert_boxcox");
    Matrix out(Z.rows(), Z.cols());
    for (Index j = 0; j < Z.cols(); ++j) {
        for (Index i = 0; i < Z.rows(); ++i) out(i, j) = params.from_latent(j, Z(i, j));
    }
    return out;
}

namespace {

// Value at the edge of the invertible domain, used when the latent point lies outside it.
double clamped_from_latent(const BoxCoxParams& params, Index o) {
    constexpr double kEdge = 1e-6;
    return std::exp(std::log(kEdge) / params.lambda(o)) - params.shift(o);
}

}  // namespace

PushforwardResult pushforward_gaussian(const BoxCoxParams& params, const Vector& latent_mean,
                                       const Vector& latent_variance, int nodes) {
    if (latent_mean.size() != params.size() || latent_variance.size() != params.size()) {
        fail(ErrorCode::DimensionMismatch, "pushforward_gaussian: latent size does not match the transform");
    }
    const auto& rule = stats::gauss_hermite(nodes);
    const Index k = params.size();
    PushforwardResult out{Vector(k), Vector(k), std::vector<bool>(static_cast<std::size_t>(k), false)};
    for (Index o = 0; o < k; ++o) {
        const double var = latent_variance(o);
        if (!(var >= 0.0)) fail(ErrorCode::InvalidArgument, "latent variance must be non-negative");
        const double mu = latent_mean(o);
        if (var == 0.0) {
            if (params.latent_in_domain(o, mu)) {
                out.mean(o) = params.from_latent(o, mu);
            } else {
                out.mean(o) = clamped_from_latent(params, o);
                out.range_clipped[static_cast<std::size_t>(o)] = true;
            }
            out.variance(o) = 0.0;
            continue;
        }
        const double sd = std::sqrt(var);
        double w_sum = 0.0, m1 = 0.0;
        std::vector<double> values;
        std::vector<double> weights;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double z = mu + sd * rule.nodes[i];
            if (!params.latent_in_domain(o, z)) {
                out.range_clipped[static_cast<std::size_t>(o)] = true;
                continue;
            }
            const double y = params.from_latent(o, z);
            if (!std::isfinite(y)) {
                out.range_clipped[static_cast<std::size_t>(o)] = true;
                continue;
            }
            values.push_back(y);
            weights.push_back(rule.weights[i]);
            w_sum += rule.weights[i];
            m1 += rule.weights[i] * y;
        }
        if (values.empty()) {
            out.mean(o) = clamped_from_latent(params, o);
            out.variance(o) = 0.0;
            continue;
        }
        m1 /= w_sum;
        double m2 = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) m2 += weights[i] * (values[i] - m1) * (values[i] - m1);
        out.mean(o) = m1;
        out.variance(o) = std::max(0.0, m2 / w_sum);
    }
    return out;
}

nlohmann::json TransformPipeline::to_json() const {
    return {{"input", input.to_json()}, {"output", output.to_json()}};
}

TransformPipeline TransformPipeline::from_json(const nlohmann::json& j) {
    return {StandardizeParams::from_json(j.at("input")), BoxCoxParams::from_json(j.at("output"))};
}

TransformPipeline fit_pipeline(const Dataset& ds) {
    ds.validate();
    return {fit_standardize(ds.X, ds.input_names), fit_boxcox(ds.Y, ds.output_names)};
}

}  // namespace surrogate
