#include "surrogate/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "surrogate/error.hpp"
#include "surrogate/stats.hpp"

namespace surrogate::eval {

namespace {

void check_pair(const Vector& y, const Vector& y_hat, const char* what) {
    if (y.size() != y_hat.size()) fail(ErrorCode::DimensionMismatch, std::string(what) + ": length mismatch");
    if (y.size() < 2) fail(ErrorCode::InsufficientData, std::string(what) + ": needs at least 2 values");
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

double r2(const Vector& y, const Vector& y_hat) {
    check_pair(y, y_hat, "r2");
    const double mu = y.mean();
    const double ss_tot = (y.array() - mu).square().sum();
    if (!(ss_tot > 0.0)) fail(ErrorCode::DegenerateColumn, "r2: observed values are constant");
    return 1.0 - (y - y_hat).squaredNorm() / ss_tot;
}

std::vector<double> ape_values(const Vector& y, const Vector& y_hat, Index* excluded) {
    if (y.size() != y_hat.size()) fail(ErrorCode::DimensionMismatch, "ape: length mismatch");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(y.size()));
    Index skipped = 0;
    for (Index i = 0; i < y.size(); ++i) {
        if (y(i) == 0.0) {
            ++skipped;
            continue;
        }
        out.push_back(std::abs(y(i) - y_hat(i)) / std::abs(y(i)) * 100.0);
    }
    if (excluded) *excluded = skipped;
    return out;
}

PercentMetric mape(const Vector& y, const Vector& y_hat) {
    check_pair(y, y_hat, "mape");
    PercentMetric m;
    const auto ape = ape_values(y, y_hat, &m.excluded);
    if (ape.empty()) fail(ErrorCode::InsufficientData, "mape: every observed value is zero");
    m.used = static_cast<Index>(ape.size());
    m.value = stats::mean(ape);
    return m;
}

PercentMetric ape_percentile(const Vector& y, const Vector& y_hat, double q) {
    check_pair(y, y_hat, "ape_percentile");
    PercentMetric m;
    const auto ape = ape_values(y, y_hat, &m.excluded);
    if (ape.empty()) fail(ErrorCode::InsufficientData, "ape_percentile: every observed value is zero");
    m.used = static_cast<Index>(ape.size());
    m.value = stats::percentile(ape, q);
    return m;
}

std::vector<double> default_levels() {
    std::vector<double> v;
    for (int k = 1; k <= 19; ++k) v.push_back(k / 20.0);
    return v;
}

CalibrationCurve calibration_curve(const Vector& mean, const Vector& sd, const Vector& y,
                                   const std::vector<double>& levels, const Vector* sigma) {
    if (mean.size() != sd.size() || mean.size() != y.size()) {
        fail(ErrorCode::DimensionMismatch, "calibration: mean, sd and y lengths differ");
    }
    if (y.size() == 0) fail(ErrorCode::InsufficientData, "calibration: no predictions");
    for (std::size_t k = 0; k < levels.size(); ++k) {
        if (!(levels[k] > 0.0 && levels[k] < 1.0)) fail(ErrorCode::InvalidArgument, "calibration levels must lie in (0, 1)");
        if (k > 0 && !(levels[k] > levels[k - 1])) fail(ErrorCode::InvalidArgument, "calibration levels must increase");
    }
    if ((sd.array() < 0.0).any()) fail(ErrorCode::InvalidArgument, "calibration: negative standard deviation");
    CalibrationCurve c;
    c.levels = levels;
    c.n = y.size();
    const double n = static_cast<double>(y.size());
    for (double p : levels) {
        const double z = stats::normal_quantile(p);
        const double half = stats::normal_quantile(0.5 + p / 2.0);
        Index below = 0, inside = 0;
        for (Index i = 0; i < y.size(); ++i) {
            // sd == 0 degenerates to the step at the mean for both views.
            const double d = y(i) - mean(i);
            if (sd(i) > 0.0 ? d <= z * sd(i) : d <= 0.0) ++below;
            if (sd(i) > 0.0 ? std::abs(d) <= half * sd(i) : d == 0.0) ++inside;
        }
        c.observed.push_back(static_cast<double>(below) / n);
        c.centered.push_back(static_cast<double>(inside) / n);
    }
    double err = 0.0;
    for (std::size_t k = 0; k < levels.size(); ++k) err += std::abs(c.observed[k] - levels[k]);
    c.auc_error = levels.empty() ? 0.0 : err / static_cast<double>(levels.size());
    if (sigma) {
        const auto s = to_std(*sigma);
        c.sharpness = stats::population_variance(s);
        const double m = stats::mean(s);
        c.sigma_cv = m > 0.0 ? std::sqrt(*c.sharpness) / m : 0.0;
    }
    return c;
}

CalibrationCurve calibration_for_output(const std::vector<PredictiveDistribution>& preds, const Vector& y,
                                        Index output, const BoxCoxParams& transform,
                                        const std::vector<double>& levels) {
    const Index n = static_cast<Index>(preds.size());
    if (y.size() != n) fail(ErrorCode::DimensionMismatch, "calibration: prediction and target counts differ");
    Vector mean(n), sd(n), latent_y(n), sigma(n);
    for (Index i = 0; i < n; ++i) {
        const auto& p = preds[static_cast<std::size_t>(i)];
        mean(i) = p.latent_mean(output);
        sd(i) = std::sqrt(std::max(0.0, p.latent_variance(output)));
        latent_y(i) = transform.to_latent(output, y(i));
        sigma(i) = std::sqrt(std::max(0.0, p.variance(output)));
    }
    return calibration_curve(mean, sd, latent_y, levels, &sigma);
}

CalibrationCurve pool(const std::vector<CalibrationCurve>& curves) {
    if (curves.empty()) fail(ErrorCode::InsufficientData, "pool: no curves");
    CalibrationCurve out;
    out.levels = curves.front().levels;
    out.observed.assign(out.levels.size(), 0.0);
    out.centered.assign(out.levels.size(), 0.0);
    for (const auto& c : curves) {
        if (c.levels != out.levels) fail(ErrorCode::InvalidArgument, "pool: curves use different levels");
        out.n += c.n;
    }
    for (const auto& c : curves) {
        const double w = static_cast<double>(c.n) / static_cast<double>(out.n);
        for (std::size_t k = 0; k < out.levels.size(); ++k) {
            out.observed[k] += w * c.observed[k];
            out.centered[k] += w * c.centered[k];
        }
    }
    double err = 0.0;
    for (std::size_t k = 0; k < out.levels.size(); ++k) err += std::abs(out.observed[k] - out.levels[k]);
    out.auc_error = out.levels.empty() ? 0.0 : err / static_cast<double>(out.levels.size());
    return out;
}

nlohmann::json CalibrationCurve::to_json() const {
    return {{"levels", levels},       {"observed", observed},          {"centered", centered},
            {"auc_error", auc_error}, {"sharpness", optional_json(sharpness)}, {"sigma_cv", optional_json(sigma_cv)},
            {"n", n}};
}

std::string to_string(DiscardMetric m) { return m == DiscardMetric::Mape ? "mape" : "ape90"; }

std::vector<double> default_fractions() {
    std::vector<double> v;
    for (int k = 20; k >= 10; --k) v.push_back(k / 20.0);
    return v;
}

Index retained_count(double fraction, Index n) {
    if (!(fraction > 0.0 && fraction <= 1.0)) fail(ErrorCode::InvalidArgument, "retained fraction must lie in (0, 1]");
    return static_cast<Index>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

double discard_metric(DiscardMetric metric, std::vector<double> errors) {
    if (errors.empty()) fail(ErrorCode::InsufficientData, "discard: retained set is empty");
    return metric == DiscardMetric::Mape ? stats::mean(errors) : stats::percentile(errors, 90.0);
}

namespace {

double metric_of_prefix(DiscardMetric metric, const std::vector<double>& errors, const std::vector<std::size_t>& order,
                        Index keep) {
    std::vector<double> kept;
    kept.reserve(static_cast<std::size_t>(keep));
    for (Index k = 0; k < keep; ++k) kept.push_back(errors[order[static_cast<std::size_t>(k)]]);
    return discard_metric(metric, std::move(kept));
}

std::vector<std::size_t> ascending(const std::vector<double>& key) {
    std::vector<std::size_t> order(key.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
    return order;
}

}  // namespace

DiscardCurve discard_curve(const std::vector<double>& errors, const std::vector<double>& uncertainties,
                           DiscardMetric metric, std::uint64_t seed, const std::vector<double>& fractions,
                           int resamples) {
    if (errors.size() != uncertainties.size()) fail(ErrorCode::DimensionMismatch, "discard: length mismatch");
    if (resamples < 1) fail(ErrorCode::InvalidArgument, "discard: resamples must be positive");
    for (double e : errors) {
        if (!(e >= 0.0)) fail(ErrorCode::InvalidArgument, "discard: errors must be non-negative");
    }
    for (double u : uncertainties) {
        if (std::isnan(u)) fail(ErrorCode::InvalidArgument, "discard: uncertainty is NaN");
    }
    const Index n = static_cast<Index>(errors.size());
    DiscardCurve c;
    c.metric = metric;
    c.fractions = fractions;
    const auto by_u = ascending(uncertainties);
    const auto by_e = ascending(errors);
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> shuffles(static_cast<std::size_t>(resamples));
    for (auto& s : shuffles) {
        const auto perm = rng.permutation(n);
        s.assign(perm.begin(), perm.end());
    }
    for (double f : fractions) {
        const Index keep = retained_count(f, n);
        c.by_uncertainty.push_back(metric_of_prefix(metric, errors, by_u, keep));
        c.by_oracle.push_back(metric_of_prefix(metric, errors, by_e, keep));
        if (keep == n) {
            // Every subset is the full set.
            const double full = c.by_oracle.back();
            c.random_mean.push_back(full);
            c.random_lower.push_back(full);
            c.random_upper.push_back(full);
            continue;
        }
        std::vector<double> draws;
        draws.reserve(shuffles.size());
        for (const auto& s : shuffles) draws.push_back(metric_of_prefix(metric, errors, s, keep));
        c.random_mean.push_back(stats::mean(draws));
        c.random_lower.push_back(stats::percentile(draws, 5.0));
        c.random_upper.push_back(stats::percentile(draws, 95.0));
    }
    return c;
}

nlohmann::json DiscardCurve::to_json() const {
    return {{"metric", to_string(metric)},   {"retained_fractions", fractions}, {"error_by_uncertainty", by_uncertainty},
            {"error_by_oracle", by_oracle},   {"error_random", random_mean},     {"error_random_p05", random_lower},
            {"error_random_p95", random_upper}};
}

std::string to_string(UncertaintyMeasure m) { return m == UncertaintyMeasure::StdDev ? "std" : "relative-std"; }

UncertaintyMeasure uncertainty_measure_from_string(const std::string& s) {
    if (s == "std") return UncertaintyMeasure::StdDev;
    if (s == "relative-std") return UncertaintyMeasure::RelativeStdDev;
    fail(ErrorCode::InvalidArgument, "unknown uncertainty measure '" + s + "' (expected std or relative-std)");
}

double uncertainty(const PredictiveDistribution& p, Index output, UncertaintyMeasure m) {
    const double sd = std::sqrt(std::max(0.0, p.variance(output)));
    if (m == UncertaintyMeasure::StdDev) return sd;
    const double mu = std::abs(p.mean(output));
    if (mu > 0.0) return sd / mu;
    return sd > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

Vector column_mean(const std::vector<PredictiveDistribution>& preds, Index o) {
    Vector v(static_cast<Index>(preds.size()));
    for (std::size_t i = 0; i < preds.size(); ++i) v(static_cast<Index>(i)) = preds[i].mean(o);
    return v;
}

Vector column_std(const std::vector<PredictiveDistribution>& preds, Index o) {
    Vector v(static_cast<Index>(preds.size()));
    for (std::size_t i = 0; i < preds.size(); ++i) v(static_cast<Index>(i)) = std::sqrt(std::max(0.0, preds[i].variance(o)));
    return v;
}

nlohmann::json OutputEvaluation::to_json() const {
    return {{"name", name},
            {"r2", r2},
            {"mape", mape.value},
            {"ape90", ape90.value},
            {"n_used", mape.used},
            {"n_excluded_zero", mape.excluded},
            {"range_clipped", range_clipped},
            {"calibration", calibration.to_json()},
            {"discard_ape90", discard_ape90.to_json()},
            {"discard_mape", discard_mape.to_json()}};
}

Index EvaluationReport::hardest_output() const {
    if (outputs.empty()) fail(ErrorCode::InsufficientData, "report has no outputs");
    Index best = 0;
    for (Index o = 1; o < static_cast<Index>(outputs.size()); ++o) {
        if (outputs[static_cast<std::size_t>(o)].ape90.value > outputs[static_cast<std::size_t>(best)].ape90.value) best = o;
    }
    return best;
}

nlohmann::json EvaluationReport::to_json() const {
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& o : outputs) outs.push_back(o.to_json());
    return {{"model", model_kind},
            {"n_test", n_test},
            {"mc_samples", options.mc_samples},
            {"seed", options.seed},
            {"uncertainty_measure", to_string(options.measure)},
            {"units", "original"},
            {"calibration_space", "latent (Box-Cox transformed, one-sided quantiles)"},
            {"sharpness_definition", "population variance of predicted standard deviations, original units"},
            {"percentile_method", "linear interpolation between closest ranks"},
            {"hardest_output", outputs.empty() ? nlohmann::json(nullptr) : nlohmann::json(outputs[static_cast<std::size_t>(hardest_output())].name)},
            {"outputs", outs},
            {"pooled_calibration", pooled_calibration.to_json()}};
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

std::string calibration_csv(const CalibrationCurve& c) {
    std::ostringstream s;
    s << std::setprecision(17) << "level,observed,centered\n";
    for (std::size_t k = 0; k < c.levels.size(); ++k) s << c.levels[k] << ',' << c.observed[k] << ',' << c.centered[k] << '\n';
    return s.str();
}

std::string discard_csv(const DiscardCurve& c) {
    std::ostringstream s;
    s << std::setprecision(17) << "retained_fraction,by_uncertainty,by_oracle,random_mean,random_p05,random_p95\n";
    for (std::size_t k = 0; k < c.fractions.size(); ++k) {
        s << c.fractions[k] << ',' << c.by_uncertainty[k] << ',' << c.by_oracle[k] << ',' << c.random_mean[k] << ','
          << c.random_lower[k] << ',' << c.random_upper[k] << '\n';
    }
    return s.str();
}

}  // namespace

std::vector<std::filesystem::path> EvaluationReport::write(const std::filesystem::path& json_path) const {
    if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
    std::vector<std::filesystem::path> written;
    write_text(json_path, to_json().dump(2) + "\n");
    written.push_back(json_path);
    const auto dir = json_path.parent_path();
    const auto stem = json_path.stem().string();
    auto emit = [&](const std::string& suffix, const std::string& text) {
        const auto p = dir / (stem + "_" + suffix + ".csv");
        write_text(p, text);
        written.push_back(p);
    };
    {
        std::ostringstream s;
        s << std::setprecision(17) << "output,r2,mape,ape90,n_used,n_excluded_zero,auc_error,sharpness\n";
        for (const auto& o : outputs) {
            s << o.name << ',' << o.r2 << ',' << o.mape.value << ',' << o.ape90.value << ',' << o.mape.used << ','
              << o.mape.excluded << ',' << o.calibration.auc_error << ',' << o.calibration.sharpness.value_or(0.0) << '\n';
        }
        emit("accuracy", s.str());
    }
    emit("calibration_pooled", calibration_csv(pooled_calibration));
    for (const auto& o : outputs) {
        emit("calibration_" + o.name, calibration_csv(o.calibration));
        emit("discard_ape90_" + o.name, discard_csv(o.discard_ape90));
        emit("discard_mape_" + o.name, discard_csv(o.discard_mape));
    }
    return written;
}

std::vector<PredictiveDistribution> predict_dataset(const Surrogate& model, const Dataset& test, int mc_samples,
                                                    std::uint64_t seed) {
    if (test.n_inputs() != model.n_inputs()) {
        fail(ErrorCode::DimensionMismatch, "test set has " + std::to_string(test.n_inputs()) + " inputs, model expects " +
                                               std::to_string(model.n_inputs()));
    }
    if (test.n_outputs() != 0 && test.n_outputs() != model.n_outputs()) {
        fail(ErrorCode::DimensionMismatch, "test set has " + std::to_string(test.n_outputs()) +
                                               " outputs, model predicts " + std::to_string(model.n_outputs()));
    }
    if (!test.input_names.empty() && test.input_names != model.input_names()) {
        fail(ErrorCode::DimensionMismatch, "test set input columns do not match the model's inputs");
    }
    PredictOptions opts;
    opts.mc_samples = mc_samples;
    opts.seed = seed;
    return model.predict_batch(test.X, opts);
}

EvaluationReport evaluate_predictions(const std::string& model_kind, const TransformPipeline& transforms,
                                      const std::vector<PredictiveDistribution>& preds, const Dataset& test,
                                      const EvalOptions& opts) {
    if (static_cast<Index>(preds.size()) != test.size()) {
        fail(ErrorCode::DimensionMismatch, "prediction count does not match the test set");
    }
    EvaluationReport report;
    report.model_kind = model_kind;
    report.n_test = test.size();
    report.options = opts;
    std::vector<CalibrationCurve> curves;
    for (Index o = 0; o < test.n_outputs(); ++o) {
        const Vector y = test.Y.col(o);
        const Vector mu = column_mean(preds, o);
        OutputEvaluation e;
        e.name = o < static_cast<Index>(test.output_names.size()) ? test.output_names[static_cast<std::size_t>(o)]
                                                                  : "output" + std::to_string(o);
        e.r2 = r2(y, mu);
        e.mape = mape(y, mu);
        e.ape90 = ape_percentile(y, mu, 90.0);
        e.calibration = calibration_for_output(preds, y, o, transforms.output, opts.levels);
        curves.push_back(e.calibration);
        std::vector<double> errors, unc;
        for (Index i = 0; i < y.size(); ++i) {
            const auto& p = preds[static_cast<std::size_t>(i)];
            if (p.range_clipped.size() > static_cast<std::size_t>(o) && p.range_clipped[static_cast<std::size_t>(o)]) {
                ++e.range_clipped;
            }
            if (y(i) == 0.0) continue;
            errors.push_back(std::abs(y(i) - mu(i)) / std::abs(y(i)) * 100.0);
            unc.push_back(uncertainty(p, o, opts.measure));
        }
        const std::uint64_t s = derive_seed(opts.seed, static_cast<std::uint64_t>(o) + 0x100);
        e.discard_ape90 = discard_curve(errors, unc, DiscardMetric::Ape90, s, opts.fractions);
        e.discard_mape = discard_curve(errors, unc, DiscardMetric::Mape, s, opts.fractions);
        report.outputs.push_back(std::move(e));
    }
    report.pooled_calibration = pool(curves);
    return report;
}

EvaluationReport evaluate(const Surrogate& model, const Dataset& test, const EvalOptions& opts) {
    const auto preds = predict_dataset(model, test, opts.mc_samples, opts.seed);
    return evaluate_predictions(model.kind(), model.transforms(), preds, test, opts);
}

}  // namespace surrogate::eval
