#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "surrogate/common.hpp"
#include "surrogate/design_space.hpp"

namespace surrogate::sim {

/// Design inputs of the synthetic building model.
struct BuildingParams {
    double u_wall = 0.55;    // W/m2K
    double u_roof = 0.35;    // W/m2K
    double u_win = 1.9;      // W/m2K
    double wwr = 0.5;        // -
    double ach = 0.8;        // 1/h
    double gains = 15.0;     // W/m2
    double hrv = 0.45;       // -
    double shgc = 0.5;       // -
    double pv_frac = 0.25;   // -
    double fuel_mix = 0.5;   // -
};

inline constexpr std::size_t kNumInputs = 10;
inline constexpr std::size_t kNumOutputs = 6;

/// Geometry and climate constants.
struct BuildingConstants {
    double wall_area = 800.0;        // m2
    double roof_area = 600.0;        // m2
    double floor_area = 1800.0;      // m2
    double volume = 6000.0;          // m3
    double heating_degree_hours = 90000.0;
    double cooling_degree_hours = 20000.0;
    double heating_hours = 3000.0;
    double cooling_hours = 1500.0;
    double solar_irradiation = 350.0;  // kWh/m2yr
    double pv_yield = 180.0;           // kWh/m2yr

    [[nodiscard]] nlohmann::json to_json() const;
    static BuildingConstants from_json(const nlohmann::json& j);
};

/// Annual outputs in MWh/year.
struct SimOutputs {
    double heating_demand = 0.0;
    double cooling_demand = 0.0;
    double heating_gas = 0.0;
    double heating_elec = 0.0;
    double fans = 0.0;
    double pv_generation = 0.0;

    [[nodiscard]] std::array<double, kNumOutputs> values() const {
        return {heating_demand, cooling_demand, heating_gas, heating_elec, fans, pv_generation};
    }
};

const std::array<std::string, kNumInputs>& input_names();
const std::array<std::string, kNumOutputs>& output_names();
inline constexpr const char* kOutputUnit = "MWh/yr";

/// The 10-parameter default design space; its bounds are the physical validity range.
const DesignSpace& default_space();

/// Throws InvalidArgument naming the first field outside its range.
void validate(const BuildingParams& p);

SimOutputs simulate(const BuildingParams& p, const BuildingConstants& c = {});

/// Inputs ordered as input_names().
BuildingParams params_from_vector(const Eigen::Ref<const Vector>& x);
Vector params_to_vector(const BuildingParams& p);

struct BatchOptions {
    std::chrono::milliseconds latency{0};  // artificial per-row cost
};

/// Row-wise simulate. `space` names the columns of X; defaults to default_space() order.
Matrix simulate_batch(const Matrix& X, const BuildingConstants& c = {}, const BatchOptions& opts = {},
                      const DesignSpace* space = nullptr);

/// LHS over `space` (names must be building parameters) followed by simulate_batch.
Dataset generate_dataset(const DesignSpace& space, Index n, std::uint64_t seed, const BuildingConstants& c = {},
                         const BatchOptions& opts = {});

/// Sidecar describing how a dataset was generated.
nlohmann::json dataset_metadata(const DesignSpace& space, Index n, std::uint64_t seed, const BuildingConstants& c,
                                const BatchOptions& opts);

}  // namespace surrogate::sim
