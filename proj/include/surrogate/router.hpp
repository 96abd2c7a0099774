#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "surrogate/common.hpp"
#include "surrogate/design_space.hpp"
#include "surrogate/evaluation.hpp"
#include "surrogate/predictive.hpp"

namespace surrogate::route {

enum class Aggregation { AnyOutput, SpecificOutput };
std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

struct ThresholdPolicy {
    Vector thresholds;
    double percentile = 90.0;
    Aggregation aggregation = Aggregation::AnyOutput;
    /// Monitored output under SpecificOutput.
    Index output = 0;
    eval::UncertaintyMeasure measure = eval::UncertaintyMeasure::RelativeStdDev;
    std::vector<std::string> output_names;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static ThresholdPolicy from_json(const nlohmann::json& j);
};

/// Thresholds at the given percentile of each column of `uncertainties` (rows are predictions).
ThresholdPolicy fit_threshold(const Matrix& uncertainties, double percentile,
                              Aggregation aggregation = Aggregation::AnyOutput, Index output = 0,
                              eval::UncertaintyMeasure measure = eval::UncertaintyMeasure::RelativeStdDev,
                              std::vector<std::string> output_names = {});

/// Uncertainty matrix (n x outputs) of predictions under a measure.
Matrix uncertainty_matrix(const std::vector<PredictiveDistribution>& preds, eval::UncertaintyMeasure measure);

/// Outputs whose uncertainty strictly exceeds the threshold (restricted to the
/// monitored output under SpecificOutput). Non-empty means route.
std::vector<Index> triggering_outputs(const ThresholdPolicy& policy, const PredictiveDistribution& p);

/// Authoritative evaluation of one design point (original units).
using SimulatorFn = std::function<Vector(const Vector&)>;

enum class SimulationStatus { NotRequested, Done, Pending, Degraded };
std::string to_string(SimulationStatus s);

struct RoutingDecision {
    PredictiveDistribution estimate;
    bool routed = false;
    std::vector<Index> triggering;
    SimulationStatus status = SimulationStatus::NotRequested;
    std::optional<Vector> authoritative;
    std::string error;

    [[nodiscard]] nlohmann::json to_json(const std::vector<std::string>& output_names) const;
};

/// Routes one design point. With a simulator the routed point is simulated and
/// the result attached; without one the decision is left pending. A throwing
/// simulator leaves the estimate in place and marks the decision degraded.
RoutingDecision route(const ThresholdPolicy& policy, const Surrogate& model, const Vector& x,
                      const PredictOptions& opts, const SimulatorFn* simulator = nullptr);

/// Decision for an existing prediction.
RoutingDecision decide(const ThresholdPolicy& policy, const PredictiveDistribution& estimate);

struct OutputRouting {
    std::string name;
    double mape_full = 0.0;
    double mape_after = 0.0;
    double ape90_full = 0.0;
    double ape90_after = 0.0;
    /// (full - after) / full; empty when full is zero.
    std::optional<double> mape_reduction;
    std::optional<double> ape90_reduction;
    Index retained = 0;
    Index excluded_zero_full = 0;
    Index excluded_zero_after = 0;
};

struct RoutingReport {
    ThresholdPolicy policy;
    Index n = 0;
    Index routed = 0;
    double fraction_routed = 0.0;
    double simulation_seconds_per_run = 0.0;
    double simulated_time_cost = 0.0;
    bool threshold_fit_on_evaluation_set = true;
    std::vector<OutputRouting> outputs;

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Routes every prediction with `policy` and scores the retained rows.
RoutingReport routing_report(const ThresholdPolicy& policy, const std::vector<PredictiveDistribution>& preds,
                             const Dataset& test, double seconds_per_run);

struct RoutingOptions {
    std::vector<double> percentiles{90.0, 80.0};
    Aggregation aggregation = Aggregation::AnyOutput;
    /// Monitored output under SpecificOutput; the hardest output when empty.
    std::optional<Index> output;
    eval::UncertaintyMeasure measure = eval::UncertaintyMeasure::RelativeStdDev;
    double seconds_per_run = 130.0;
};

/// Fits a policy per percentile on the test predictions themselves and scores it.
std::vector<RoutingReport> evaluate_routing(const std::vector<PredictiveDistribution>& preds, const Dataset& test,
                                            const RoutingOptions& opts);
std::vector<RoutingReport> evaluate_routing(const Surrogate& model, const Dataset& test, const RoutingOptions& opts,
                                            int mc_samples, std::uint64_t seed);

/// Output with the largest full-set APE90 of the predictive means.
Index hardest_output(const std::vector<PredictiveDistribution>& preds, const Dataset& test);

}  // namespace surrogate::route
