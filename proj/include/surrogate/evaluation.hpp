#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "surrogate/common.hpp"
#include "surrogate/design_space.hpp"
#include "surrogate/predictive.hpp"

namespace surrogate::eval {

/// Coefficient of determination. Needs equal lengths >= 2 and non-constant y.
double r2(const Vector& y, const Vector& y_hat);

/// Percentage metric over the rows with y != 0; `excluded` counts the rest.
struct PercentMetric {
    double value = 0.0;
    Index used = 0;
    Index excluded = 0;
};

/// Absolute percentage errors |y - y_hat| / |y| * 100, skipping y == 0.
std::vector<double> ape_values(const Vector& y, const Vector& y_hat, Index* excluded = nullptr);

PercentMetric mape(const Vector& y, const Vector& y_hat);
PercentMetric ape_percentile(const Vector& y, const Vector& y_hat, double q = 90.0);

/// Levels 0.05, 0.10, ..., 0.95.
std::vector<double> default_levels();

struct CalibrationCurve {
    std::vector<double> levels;
    /// Fraction of y_i <= F_i^-1(p) (one-sided quantile form).
    std::vector<double> observed;
    /// Fraction of y_i inside the central interval of mass p (plot view).
    std::vector<double> centered;
    double auc_error = 0.0;
    /// Population variance of the predicted standard deviations in original units.
    std::optional<double> sharpness;
    /// Standard deviation of the predicted sigma over its mean.
    std::optional<double> sigma_cv;
    Index n = 0;

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Gaussian calibration of N(mean_i, sd_i^2) against y. A zero sd counts y_i <= mean_i.
/// `sigma` (original-unit standard deviations) fills sharpness when given.
CalibrationCurve calibration_curve(const Vector& mean, const Vector& sd, const Vector& y,
                                   const std::vector<double>& levels = default_levels(),
                                   const Vector* sigma = nullptr);

/// Calibration of one output, counted in the latent space of the model's output transform.
CalibrationCurve calibration_for_output(const std::vector<PredictiveDistribution>& preds, const Vector& y,
                                        Index output, const BoxCoxParams& transform,
                                        const std::vector<double>& levels = default_levels());

/// Count-weighted average of per-output curves; sharpness is left empty.
CalibrationCurve pool(const std::vector<CalibrationCurve>& curves);

enum class DiscardMetric { Mape, Ape90 };
std::string to_string(DiscardMetric m);

/// Retained fractions 1.0, 0.95, ..., 0.5.
std::vector<double> default_fractions();

/// Number of rows kept at retained fraction f: floor(f * n).
Index retained_count(double fraction, Index n);

struct DiscardCurve {
    DiscardMetric metric = DiscardMetric::Ape90;
    std::vector<double> fractions;
    std::vector<double> by_uncertainty;
    std::vector<double> by_oracle;
    std::vector<double> random_mean;
    std::vector<double> random_lower;  // 5th percentile over resamples
    std::vector<double> random_upper;  // 95th percentile over resamples

    [[nodiscard]] nlohmann::json to_json() const;
};

/// `errors` are per-sample absolute percentage errors. Rows are kept in order of
/// increasing uncertainty (resp. error), ties broken by index.
DiscardCurve discard_curve(const std::vector<double>& errors, const std::vector<double>& uncertainties,
                           DiscardMetric metric, std::uint64_t seed,
                           const std::vector<double>& fractions = default_fractions(), int resamples = 200);

/// Metric value of a set of absolute percentage errors.
double discard_metric(DiscardMetric metric, std::vector<double> errors);

/// Per-prediction scalar used to rank and threshold uncertainty.
enum class UncertaintyMeasure {
    StdDev,          // sigma in original units
    RelativeStdDev,  // sigma / |mean|
};
std::string to_string(UncertaintyMeasure m);
UncertaintyMeasure uncertainty_measure_from_string(const std::string& s);

double uncertainty(const PredictiveDistribution& p, Index output, UncertaintyMeasure m);

struct OutputEvaluation {
    std::string name;
    double r2 = 0.0;
    PercentMetric mape;
    PercentMetric ape90;
    CalibrationCurve calibration;
    DiscardCurve discard_ape90;
    DiscardCurve discard_mape;
    Index range_clipped = 0;

    [[nodiscard]] nlohmann::json to_json() const;
};

struct EvalOptions {
    int mc_samples = 30;
    std::uint64_t seed = 0;
    UncertaintyMeasure measure = UncertaintyMeasure::RelativeStdDev;
    std::vector<double> levels = default_levels();
    std::vector<double> fractions = default_fractions();
};

struct EvaluationReport {
    std::string model_kind;
    Index n_test = 0;
    EvalOptions options;
    std::vector<OutputEvaluation> outputs;
    CalibrationCurve pooled_calibration;

    /// Index of the output with the largest full-set APE90.
    [[nodiscard]] Index hardest_output() const;
    [[nodiscard]] nlohmann::json to_json() const;
    /// Writes <stem>.json plus one CSV per curve next to it; returns every path written.
    std::vector<std::filesystem::path> write(const std::filesystem::path& json_path) const;
};

/// Predictions of `model` on the test rows.
std::vector<PredictiveDistribution> predict_dataset(const Surrogate& model, const Dataset& test, int mc_samples,
                                                    std::uint64_t seed);

EvaluationReport evaluate(const Surrogate& model, const Dataset& test, const EvalOptions& opts = {});
EvaluationReport evaluate_predictions(const std::string& model_kind, const TransformPipeline& transforms,
                                      const std::vector<PredictiveDistribution>& preds, const Dataset& test,
                                      const EvalOptions& opts);

/// Column o of the predictive means / standard deviations.
Vector column_mean(const std::vector<PredictiveDistribution>& preds, Index o);
Vector column_std(const std::vector<PredictiveDistribution>& preds, Index o);

}  // namespace surrogate::eval
