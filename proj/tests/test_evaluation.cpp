#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "surrogate/error.hpp"
#include "surrogate/evaluation.hpp"
#include "surrogate/simulator.hpp"
#include "surrogate/stats.hpp"
#include "surrogate/transforms.hpp"
#include "test_support.hpp"

namespace surrogate::eval {
namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

TEST(Accuracy, PerfectPrediction) {
    const Vector y = vec({1.0, 2.0, 5.0, 3.0});
    EXPECT_DOUBLE_EQ(r2(y, y), 1.0);
    EXPECT_DOUBLE_EQ(mape(y, y).value, 0.0);
    EXPECT_DOUBLE_EQ(ape_percentile(y, y).value, 0.0);
}

TEST(Accuracy, MeanPredictorHasZeroR2) {
    const Vector y = vec({1.0, 2.0, 5.0, 3.0});
    EXPECT_NEAR(r2(y, Vector::Constant(4, y.mean())), 0.0, 1e-15);
}

TEST(Accuracy, HandComputedMape) {
    const auto m = mape(vec({1, 2, 4}), vec({1.1, 1.8, 4.4}));
    EXPECT_NEAR(m.value, 10.0, 1e-12);
    EXPECT_EQ(m.used, 3);
    EXPECT_EQ(m.excluded, 0);
}

TEST(Accuracy, ApePercentileInterpolates) {
    // APEs 0..10 percent in steps of 1: the 90th percentile sits exactly on 9.
    Vector y = Vector::Ones(11), yh(11);
    for (Index i = 0; i < 11; ++i) yh(i) = 1.0 + i / 100.0;
    EXPECT_NEAR(ape_percentile(y, yh).value, 9.0, 1e-12);
    EXPECT_NEAR(ape_percentile(y, yh, 95.0).value, 9.5, 1e-12);
}

TEST(Accuracy, ZeroTargetsAreExcludedAndCounted) {
    const auto m = mape(vec({0.0, 2.0, 4.0, 0.0}), vec({0.5, 2.2, 4.4, 0.0}));
    EXPECT_EQ(m.excluded, 2);
    EXPECT_EQ(m.used, 2);
    EXPECT_NEAR(m.value, 10.0, 1e-12);
    EXPECT_THROW(mape(vec({0.0, 0.0}), vec({1.0, 1.0})), Error);
}

TEST(Accuracy, Invariances) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Vector y(30), yh(30);
        for (Index i = 0; i < 30; ++i) {
            y(i) = 1.0 + rng.uniform();
            yh(i) = y(i) + 0.1 * rng.normal();
        }
        const double a = 0.1 + 5.0 * rng.uniform(), b = rng.normal();
        EXPECT_NEAR(r2(y, yh), r2((a * y).array() + b, (a * yh).array() + b), 1e-10);
        EXPECT_NEAR(mape(y, yh).value, mape(a * y, a * yh).value, 1e-10);
        EXPECT_LE(r2(y, yh), 1.0);
    }
}

TEST(Accuracy, ValidatesLengths) {
    EXPECT_THROW(r2(vec({1.0}), vec({1.0})), Error);
    EXPECT_THROW(r2(vec({1.0, 2.0}), vec({1.0})), Error);
    EXPECT_THROW(r2(vec({1.0, 1.0}), vec({1.0, 2.0})), Error);
}

TEST(Calibration, ExactGaussianDrawsAreCalibrated) {
    Rng rng(11);
    const Index n = 10000;
    Vector mu(n), sd(n), y(n);
    for (Index i = 0; i < n; ++i) {
        mu(i) = 3.0 * rng.normal();
        sd(i) = 0.1 + 2.0 * rng.uniform();
        y(i) = mu(i) + sd(i) * rng.normal();
    }
    const auto c = calibration_curve(mu, sd, y, default_levels(), &sd);
    for (std::size_t k = 0; k < c.levels.size(); ++k) {
        EXPECT_NEAR(c.observed[k], c.levels[k], 0.02);
        EXPECT_NEAR(c.centered[k], c.levels[k], 0.02);
    }
    EXPECT_LE(c.auc_error, 0.01);
    EXPECT_GT(*c.sharpness, 0.0);
}

TEST(Calibration, DegenerateStepConvention) {
    const Vector mu = vec({1.0, 2.0, 3.0});
    const auto c = calibration_curve(mu, Vector::Zero(3), mu);
    for (double o : c.observed) EXPECT_EQ(o, 1.0);
    const auto above = calibration_curve(mu, Vector::Zero(3), mu.array() + 1.0);
    for (double o : above.observed) EXPECT_EQ(o, 0.0);
}

TEST(Calibration, ConstantSigmaHasZeroSharpness) {
    const Vector sd = Vector::Constant(4, 0.7);
    const auto c = calibration_curve(vec({0, 1, 2, 3}), sd, vec({0.5, 1, 1, 4}), default_levels(), &sd);
    EXPECT_EQ(*c.sharpness, 0.0);
    EXPECT_EQ(*c.sigma_cv, 0.0);
}

TEST(Calibration, ObservedIsMonotoneInLevel) {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Vector mu(50), sd(50), y(50);
        for (Index i = 0; i < 50; ++i) {
            mu(i) = rng.normal();
            sd(i) = trial % 3 == 0 ? 0.0 : rng.uniform();
            y(i) = rng.normal() * 2.0;
        }
        const auto c = calibration_curve(mu, sd, y);
        for (std::size_t k = 1; k < c.observed.size(); ++k) EXPECT_GE(c.observed[k], c.observed[k - 1]);
        for (double o : c.observed) {
            EXPECT_GE(o, 0.0);
            EXPECT_LE(o, 1.0);
        }
    }
}

TEST(Calibration, RejectsBadLevels) {
    const Vector v = vec({1.0, 2.0});
    EXPECT_THROW(calibration_curve(v, v, v, {0.5, 0.4}), Error);
    EXPECT_THROW(calibration_curve(v, v, v, {0.0}), Error);
    EXPECT_THROW(calibration_curve(v, -v, v), Error);
}

TEST(Calibration, PoolWeightsByCount) {
    CalibrationCurve a, b;
    a.levels = b.levels = {0.5};
    a.observed = {1.0};
    b.observed = {0.0};
    a.centered = b.centered = {0.5};
    a.n = 3;
    b.n = 1;
    const auto p = pool({a, b});
    EXPECT_DOUBLE_EQ(p.observed[0], 0.75);
    EXPECT_DOUBLE_EQ(p.auc_error, 0.25);
    EXPECT_FALSE(p.sharpness);
}

TEST(Discard, RetainedCounts) {
    EXPECT_EQ(retained_count(0.9, 1000), 900);
    EXPECT_EQ(retained_count(0.7, 10), 7);
    EXPECT_EQ(retained_count(0.55, 101), 55);
    EXPECT_EQ(default_fractions().size(), 11u);
    EXPECT_DOUBLE_EQ(default_fractions().back(), 0.5);
}

std::vector<double> random_errors(Rng& rng, std::size_t n) {
    std::vector<double> e(n);
    for (auto& x : e) x = std::abs(rng.normal()) * 10.0;
    return e;
}

TEST(Discard, IdenticalRankingMatchesOracle) {
    Rng rng(1);
    const auto e = random_errors(rng, 200);
    for (auto metric : {DiscardMetric::Mape, DiscardMetric::Ape90}) {
        const auto c = discard_curve(e, e, metric, 3);
        EXPECT_EQ(c.by_uncertainty, c.by_oracle);
    }
}

TEST(Discard, FullFractionEqualsFullMetric) {
    Rng rng(2);
    const auto e = random_errors(rng, 100);
    const auto u = random_errors(rng, 100);
    const auto c = discard_curve(e, u, DiscardMetric::Ape90, 1);
    const double full = stats::percentile(e, 90.0);
    EXPECT_DOUBLE_EQ(c.by_uncertainty[0], full);
    EXPECT_DOUBLE_EQ(c.by_oracle[0], full);
    EXPECT_DOUBLE_EQ(c.random_mean[0], full);
}

TEST(Discard, OracleDominates) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto e = random_errors(rng, 57);
        const auto u = random_errors(rng, 57);
        for (auto metric : {DiscardMetric::Mape, DiscardMetric::Ape90}) {
            const auto c = discard_curve(e, u, metric, trial);
            for (std::size_t k = 0; k < c.fractions.size(); ++k) {
                EXPECT_LE(c.by_oracle[k], c.by_uncertainty[k] + 1e-12);
                EXPECT_LE(c.random_lower[k], c.random_upper[k]);
            }
        }
    }
}

TEST(Discard, IndependentRankingStaysInRandomBand) {
    Rng rng(8);
    const auto e = random_errors(rng, 2000);
    std::vector<double> u = random_errors(rng, 2000);
    int outside = 0;
    const auto c = discard_curve(e, u, DiscardMetric::Mape, 9);
    for (std::size_t k = 1; k < c.fractions.size(); ++k) {
        if (c.by_uncertainty[k] < c.random_lower[k] || c.by_uncertainty[k] > c.random_upper[k]) ++outside;
    }
    // Each point leaves the 90% band with probability 0.1.
    EXPECT_LE(outside, 3);
}

TEST(Discard, TiesKeepOriginalOrder) {
    const std::vector<double> e{5.0, 1.0, 3.0, 2.0};
    const std::vector<double> u{1.0, 1.0, 1.0, 1.0};
    const auto c = discard_curve(e, u, DiscardMetric::Mape, 0, {0.5});
    EXPECT_DOUBLE_EQ(c.by_uncertainty[0], 3.0);
}

TEST(Discard, EmptyRetainedSetThrows) {
    EXPECT_THROW(discard_curve({1.0}, {1.0}, DiscardMetric::Mape, 0, {0.5}), Error);
    EXPECT_THROW(discard_curve({1.0, 2.0}, {1.0}, DiscardMetric::Mape, 0), Error);
}

TEST(Evaluate, SimulatorAsModelIsPerfect) {
    const Dataset train = sim::generate_dataset(sim::default_space(), 200, 1);
    const Dataset test = sim::generate_dataset(sim::default_space(), 150, 2);
    const testing_support::SimulatorSurrogate model(train);
    const auto report = evaluate(model, test);
    ASSERT_EQ(report.outputs.size(), 6u);
    EXPECT_EQ(report.n_test, 150);
    for (Index o = 0; o < 6; ++o) {
        const auto& e = report.outputs[static_cast<std::size_t>(o)];
        EXPECT_DOUBLE_EQ(e.r2, 1.0);
        EXPECT_DOUBLE_EQ(e.ape90.value, 0.0);
        EXPECT_EQ(e.mape.used + e.mape.excluded, 150);
        EXPECT_EQ(e.mape.excluded, (test.Y.col(o).array() == 0.0).count());
        for (double v : e.calibration.observed) EXPECT_EQ(v, 1.0);
    }
    const auto dir = std::filesystem::temp_directory_path() / "surrogate_eval_report";
    std::filesystem::remove_all(dir);
    const auto files = report.write(dir / "report.json");
    EXPECT_EQ(files.size(), 3u + 3u * 6u);
    for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(f));
    std::ifstream in(dir / "report.json");
    const auto j = nlohmann::json::parse(in);
    EXPECT_EQ(j["outputs"].size(), 6u);
    std::filesystem::remove_all(dir);
}

TEST(Evaluate, DimensionMismatchIsReported) {
    const Dataset train = sim::generate_dataset(sim::default_space(), 50, 1);
    const testing_support::SimulatorSurrogate model(train);
    Dataset bad = train;
    bad.X = bad.X.leftCols(9).eval();
    bad.input_names.pop_back();
    try {
        evaluate(model, bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
}

TEST(Uncertainty, Measures) {
    PredictiveDistribution p;
    p.mean = vec({-2.0, 0.0, 0.0});
    p.variance = vec({0.25, 0.0, 1.0});
    EXPECT_DOUBLE_EQ(uncertainty(p, 0, UncertaintyMeasure::StdDev), 0.5);
    EXPECT_DOUBLE_EQ(uncertainty(p, 0, UncertaintyMeasure::RelativeStdDev), 0.25);
    EXPECT_DOUBLE_EQ(uncertainty(p, 1, UncertaintyMeasure::RelativeStdDev), 0.0);
    EXPECT_TRUE(std::isinf(uncertainty(p, 2, UncertaintyMeasure::RelativeStdDev)));
    EXPECT_EQ(uncertainty_measure_from_string("std"), UncertaintyMeasure::StdDev);
    EXPECT_THROW(uncertainty_measure_from_string("var"), Error);
}

}  // namespace
}  // namespace surrogate::eval
