#include "surrogate/router.hpp"

#include <cmath>
#include <limits>

#include "surrogate/error.hpp"
#include "surrogate/json_io.hpp"
#include "surrogate/stats.hpp"

namespace surrogate::route {

std::string to_string(Aggregation a) { return a == Aggregation::AnyOutput ? "any-output" : "specific-output"; }

Aggregation aggregation_from_string(const std::string& s) {
    if (s == "any-output" || s == "any") return Aggregation::AnyOutput;
    if (s == "specific-output" || s == "specific") return Aggregation::SpecificOutput;
    fail(ErrorCode::InvalidArgument, "unknown aggregation '" + s + "' (expected any-output or specific-output)");
}

void ThresholdPolicy::validate() const {
    if (!(percentile > 0.0 && percentile <= 100.0)) fail(ErrorCode::InvalidArgument, "percentile must lie in (0, 100]");
    if (thresholds.size() == 0) fail(ErrorCode::InvalidArgument, "policy has no thresholds");
    for (Index o = 0; o < thresholds.size(); ++o) {
        if (!(thresholds(o) >= 0.0)) fail(ErrorCode::InvalidArgument, "thresholds must be non-negative");
    }
    if (aggregation == Aggregation::SpecificOutput && (output < 0 || output >= thresholds.size())) {
        fail(ErrorCode::InvalidArgument, "monitored output is out of range");
    }
}

nlohmann::json ThresholdPolicy::to_json() const {
    return {{"thresholds", vector_to_json(thresholds)},
            {"percentile", percentile},
            {"aggregation", to_string(aggregation)},
            {"output", output},
            {"measure", eval::to_string(measure)},
            {"output_names", output_names}};
}

ThresholdPolicy ThresholdPolicy::from_json(const nlohmann::json& j) {
    try {
        ThresholdPolicy p;
        p.thresholds = vector_from_json(j.at("thresholds"));
        p.percentile = j.at("percentile").get<double>();
        p.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
        p.output = j.value("output", Index{0});
        p.measure = eval::uncertainty_measure_from_string(j.value("measure", std::string("relative-std")));
        p.output_names = j.value("output_names", std::vector<std::string>{});
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, std::string("threshold policy: ") + e.what());
    }
}

ThresholdPolicy fit_threshold(const Matrix& uncertainties, double percentile, Aggregation aggregation, Index output,
                              eval::UncertaintyMeasure measure, std::vector<std::string> output_names) {
    if (uncertainties.rows() == 0 || uncertainties.cols() == 0) {
        fail(ErrorCode::InsufficientData, "fit_threshold: empty reference set");
    }
    if (!(percentile > 0.0 && percentile <= 100.0)) fail(ErrorCode::InvalidArgument, "percentile must lie in (0, 100]");
    ThresholdPolicy p;
    p.thresholds.resize(uncertainties.cols());
    for (Index o = 0; o < uncertainties.cols(); ++o) {
        std::vector<double> col;
        for (Index i = 0; i < uncertainties.rows(); ++i) {
            if (std::isfinite(uncertainties(i, o))) col.push_back(uncertainties(i, o));
        }
        p.thresholds(o) = col.empty() ? std::numeric_limits<double>::infinity() : stats::percentile(col, percentile);
    }
    p.percentile = percentile;
    p.aggregation = aggregation;
    p.output = output;
    p.measure = measure;
    p.output_names = std::move(output_names);
    p.validate();
    return p;
}

Matrix uncertainty_matrix(const std::vector<PredictiveDistribution>& preds, eval::UncertaintyMeasure measure) {
    if (preds.empty()) return {};
    Matrix u(static_cast<Index>(preds.size()), preds.front().size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (Index o = 0; o < u.cols(); ++o) u(static_cast<Index>(i), o) = eval::uncertainty(preds[i], o, measure);
    }
    return u;
}

std::vector<Index> triggering_outputs(const ThresholdPolicy& policy, const PredictiveDistribution& p) {
    if (p.size() != policy.thresholds.size()) fail(ErrorCode::DimensionMismatch, "policy and prediction sizes differ");
    std::vector<Index> out;
    for (Index o = 0; o < p.size(); ++o) {
        if (policy.aggregation == Aggregation::SpecificOutput && o != policy.output) continue;
        if (eval::uncertainty(p, o, policy.measure) > policy.thresholds(o)) out.push_back(o);
    }
    return out;
}

std::string to_string(SimulationStatus s) {
    switch (s) {
        case SimulationStatus::NotRequested: return "not-requested";
        case SimulationStatus::Done: return "done";
        case SimulationStatus::Pending: return "pending";
        case SimulationStatus::Degraded: return "degraded";
    }
    return "unknown";
}

nlohmann::json RoutingDecision::to_json(const std::vector<std::string>& output_names) const {
    auto name = [&](Index o) {
        return o < static_cast<Index>(output_names.size()) ? output_names[static_cast<std::size_t>(o)]
                                                           : "output" + std::to_string(o);
    };
    nlohmann::json est = nlohmann::json::object();
    const Vector sd = estimate.std_dev();
    for (Index o = 0; o < estimate.size(); ++o) est[name(o)] = {{"mean", estimate.mean(o)}, {"std", sd(o)}};
    nlohmann::json trig = nlohmann::json::array();
    for (Index o : triggering) trig.push_back(name(o));
    nlohmann::json sim = {{"status", to_string(status)}};
    if (authoritative) {
        nlohmann::json outs = nlohmann::json::object();
        for (Index o = 0; o < authoritative->size(); ++o) outs[name(o)] = (*authoritative)(o);
        sim["outputs"] = outs;
    }
    if (!error.empty()) sim["error"] = error;
    return {{"estimate", est}, {"routed", routed}, {"triggering_outputs", trig}, {"simulation", sim}};
}

RoutingDecision decide(const ThresholdPolicy& policy, const PredictiveDistribution& estimate) {
    RoutingDecision d;
    d.estimate = estimate;
    d.triggering = triggering_outputs(policy, estimate);
    d.routed = !d.triggering.empty();
    d.status = d.routed ? SimulationStatus::Pending : SimulationStatus::NotRequested;
    return d;
}

RoutingDecision route(const ThresholdPolicy& policy, const Surrogate& model, const Vector& x,
                      const PredictOptions& opts, const SimulatorFn* simulator) {
    RoutingDecision d = decide(policy, model.predict(x, opts));
    if (!d.routed || !simulator || !*simulator) return d;
    try {
        d.authoritative = (*simulator)(x);
        d.status = SimulationStatus::Done;
    } catch (const std::exception& e) {
        d.status = SimulationStatus::Degraded;
        d.error = e.what();
    }
    return d;
}

namespace {

std::optional<double> reduction(double full, double after) {
    if (full == 0.0) return std::nullopt;
    return (full - after) / full;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json("n/a"); }

}  // namespace

RoutingReport routing_report(const ThresholdPolicy& policy, const std::vector<PredictiveDistribution>& preds,
                             const Dataset& test, double seconds_per_run) {
    if (static_cast<Index>(preds.size()) != test.size()) {
        fail(ErrorCode::DimensionMismatch, "prediction count does not match the test set");
    }
    if (test.size() == 0) fail(ErrorCode::InsufficientData, "routing report needs test rows");
    RoutingReport r;
    r.policy = policy;
    r.n = test.size();
    r.simulation_seconds_per_run = seconds_per_run;
    std::vector<Index> kept;
    for (Index i = 0; i < r.n; ++i) {
        if (triggering_outputs(policy, preds[static_cast<std::size_t>(i)]).empty()) {
            kept.push_back(i);
        } else {
            ++r.routed;
        }
    }
    r.fraction_routed = static_cast<double>(r.routed) / static_cast<double>(r.n);
    r.simulated_time_cost = static_cast<double>(r.routed) * seconds_per_run;
    for (Index o = 0; o < test.n_outputs(); ++o) {
        OutputRouting out;
        out.name = o < static_cast<Index>(test.output_names.size()) ? test.output_names[static_cast<std::size_t>(o)]
                                                                    : "output" + std::to_string(o);
        const Vector y = test.Y.col(o);
        const Vector mu = eval::column_mean(preds, o);
        const auto full = eval::ape_values(y, mu, &out.excluded_zero_full);
        Vector yk(static_cast<Index>(kept.size())), mk(static_cast<Index>(kept.size()));
        for (std::size_t k = 0; k < kept.size(); ++k) {
            yk(static_cast<Index>(k)) = y(kept[k]);
            mk(static_cast<Index>(k)) = mu(kept[k]);
        }
        const auto after = eval::ape_values(yk, mk, &out.excluded_zero_after);
        out.retained = static_cast<Index>(after.size());
        if (!full.empty()) {
            out.mape_full = eval::discard_metric(eval::DiscardMetric::Mape, full);
            out.ape90_full = eval::discard_metric(eval::DiscardMetric::Ape90, full);
        }
        if (!after.empty()) {
            out.mape_after = eval::discard_metric(eval::DiscardMetric::Mape, after);
            out.ape90_after = eval::discard_metric(eval::DiscardMetric::Ape90, after);
            out.mape_reduction = reduction(out.mape_full, out.mape_after);
            out.ape90_reduction = reduction(out.ape90_full, out.ape90_after);
        }
        r.outputs.push_back(std::move(out));
    }
    return r;
}

nlohmann::json RoutingReport::to_json() const {
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& o : outputs) {
        outs.push_back({{"name", o.name},
                        {"mape_full", o.mape_full},
                        {"mape_after_routing", o.mape_after},
                        {"mape_relative_reduction", optional_json(o.mape_reduction)},
                        {"ape90_full", o.ape90_full},
                        {"ape90_after_routing", o.ape90_after},
                        {"ape90_relative_reduction", optional_json(o.ape90_reduction)},
                        {"retained", o.retained},
                        {"excluded_zero_full", o.excluded_zero_full},
                        {"excluded_zero_after", o.excluded_zero_after}});
    }
    nlohmann::json j = {{"policy", policy.to_json()},
                        {"n", n},
                        {"routed", routed},
                        {"fraction_routed", fraction_routed},
                        {"simulation_seconds_per_run", simulation_seconds_per_run},
                        {"simulated_time_cost_seconds", simulated_time_cost},
                        {"outputs", outs}};
    if (threshold_fit_on_evaluation_set) {
        j["warning"] = "thresholds were fit on the evaluation set itself; reductions are optimistic";
    }
    return j;
}

Index hardest_output(const std::vector<PredictiveDistribution>& preds, const Dataset& test) {
    Index best = 0;
    double worst = -1.0;
    for (Index o = 0; o < test.n_outputs(); ++o) {
        const auto ape = eval::ape_values(test.Y.col(o), eval::column_mean(preds, o));
        if (ape.empty()) continue;
        const double v = stats::percentile(ape, 90.0);
        if (v > worst) {
            worst = v;
            best = o;
        }
    }
    return best;
}

std::vector<RoutingReport> evaluate_routing(const std::vector<PredictiveDistribution>& preds, const Dataset& test,
                                            const RoutingOptions& opts) {
    if (opts.percentiles.empty()) fail(ErrorCode::InvalidArgument, "no routing percentiles given");
    const Index output = opts.output.value_or(hardest_output(preds, test));
    if (output < 0 || output >= test.n_outputs()) fail(ErrorCode::InvalidArgument, "monitored output is out of range");
    const Matrix u = uncertainty_matrix(preds, opts.measure);
    std::vector<RoutingReport> out;
    for (double q : opts.percentiles) {
        const auto policy = fit_threshold(u, q, opts.aggregation, output, opts.measure, test.output_names);
        out.push_back(routing_report(policy, preds, test, opts.seconds_per_run));
    }
    return out;
}

std::vector<RoutingReport> evaluate_routing(const Surrogate& model, const Dataset& test, const RoutingOptions& opts,
                                            int mc_samples, std::uint64_t seed) {
    return evaluate_routing(eval::predict_dataset(model, test, mc_samples, seed), test, opts);
}

}  // namespace surrogate::route
