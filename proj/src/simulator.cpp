#include "surrogate/simulator.hpp"

#include <algorithm>
#include <thread>

#include "surrogate/error.hpp"

namespace surrogate::sim {

const std::array<std::string, kNumInputs>& input_names() {
    static const std::array<std::string, kNumInputs> names{"u_wall", "u_roof", "u_win", "wwr",     "ach",
                                                           "gains",  "hrv",    "shgc",  "pv_frac", "fuel_mix"};
    return names;
}

const std::array<std::string, kNumOutputs>& output_names() {
    static const std::array<std::string, kNumOutputs> names{"heating_demand", "cooling_demand", "heating_gas",
                                                            "heating_elec",   "fans",           "pv_generation"};
    return names;
}

const DesignSpace& default_space() {
    static const DesignSpace space({
        {"u_wall", 0.1, 1.0, "W/m2K"},
        {"u_roof", 0.1, 0.6, "W/m2K"},
        {"u_win", 0.8, 3.0, "W/m2K"},
        {"wwr", 0.1, 0.9, "-"},
        {"ach", 0.1, 1.5, "1/h"},
        {"gains", 5.0, 25.0, "W/m2"},
        {"hrv", 0.0, 0.9, "-"},
        {"shgc", 0.2, 0.8, "-"},
        {"pv_frac", 0.0, 0.5, "-"},
        {"fuel_mix", 0.0, 1.0, "-"},
    });
    return space;
}

BuildingParams params_from_vector(const Eigen::Ref<const Vector>& x) {
    if (x.size() != static_cast<Index>(kNumInputs)) {
        fail(ErrorCode::DimensionMismatch, "building model takes " + std::to_string(kNumInputs) + " inputs, got " +
                                               std::to_string(x.size()));
    }
    return {x(0), x(1), x(2), x(3), x(4), x(5), x(6), x(7), x(8), x(9)};
}

Vector params_to_vector(const BuildingParams& p) {
    Vector x(static_cast<Index>(kNumInputs));
    x << p.u_wall, p.u_roof, p.u_win, p.wwr, p.ach, p.gains, p.hrv, p.shgc, p.pv_frac, p.fuel_mix;
    return x;
}

void validate(const BuildingParams& p) {
    const Vector x = params_to_vector(p);
    if (auto j = default_space().first_violation(x)) {
        const auto& param = default_space().params()[static_cast<std::size_t>(*j)];
        fail(ErrorCode::InvalidArgument, "'" + param.name + "' = " + std::to_string(x(*j)) + " outside [" +
                                             std::to_string(param.lower) + ", " + std::to_string(param.upper) + "]");
    }
}

SimOutputs simulate(const BuildingParams& p, const BuildingConstants& c) {
    validate(p);
    const double ua = c.wall_area * (1.0 - p.wwr) * p.u_wall + c.wall_area * p.wwr * p.u_win + c.roof_area * p.u_roof;
    const double inf = 0.33 * p.ach * c.volume * (1.0 - p.hrv);
    const double solar = c.solar_irradiation * c.wall_area * p.wwr * p.shgc;
    const double q_heat = std::max(0.0, (ua + inf) * c.heating_degree_hours * 1e-3 - 0.6 * solar -
                                            0.8 * p.gains * c.floor_area * c.heating_hours * 1e-3);
    const double q_cool =
        std::max(0.0, (ua + inf) * c.cooling_degree_hours * 1e-3 * 0.3 + 0.4 * solar +
                          p.gains * c.floor_area * c.cooling_hours * 1e-3 - 50.0 * (1.0 - p.wwr) * c.wall_area);
    const bool gas = p.fuel_mix > 0.5;
    const double heating_gas = gas ? q_heat * p.fuel_mix / 0.92 : 0.0;
    const double heating_elec = gas ? q_heat * (1.0 - p.fuel_mix) / 3.0 : q_heat / 3.0;
    const double fans = (0.02 * q_cool + 0.01 * q_heat) * (1.0 + 0.5 * p.ach);
    const double pv = c.pv_yield * c.roof_area * p.pv_frac;
    return {q_heat / 1000.0, q_cool / 1000.0, heating_gas / 1000.0, heating_elec / 1000.0, fans / 1000.0, pv / 1000.0};
}

namespace {

std::vector<Index> column_map(const DesignSpace& space) {
    if (space.dim() != static_cast<Index>(kNumInputs)) {
        fail(ErrorCode::DimensionMismatch, "building model needs a " + std::to_string(kNumInputs) +
                                               "-parameter space, got " + std::to_string(space.dim()));
    }
    std::vector<Index> map;
    for (const auto& name : input_names()) {
        auto j = space.find(name);
        if (!j) fail(ErrorCode::InvalidSpace, "design space lacks building parameter '" + name + "'");
        map.push_back(*j);
    }
    return map;
}

}  // namespace

Matrix simulate_batch(const Matrix& X, const BuildingConstants& c, const BatchOptions& opts, const DesignSpace* space) {
    const auto map = column_map(space ? *space : default_space());
    if (X.cols() != static_cast<Index>(kNumInputs)) {
        fail(ErrorCode::DimensionMismatch, "simulate_batch: X has " + std::to_string(X.cols()) + " columns");
    }
    Matrix Y(X.rows(), static_cast<Index>(kNumOutputs));
    for (Index i = 0; i < X.rows(); ++i) {
        Vector x(static_cast<Index>(kNumInputs));
        for (std::size_t k = 0; k < kNumInputs; ++k) x(static_cast<Index>(k)) = X(i, map[k]);
        try {
            const auto v = simulate(params_from_vector(x), c).values();
            for (std::size_t k = 0; k < kNumOutputs; ++k) Y(i, static_cast<Index>(k)) = v[k];
        } catch (const Error& e) {
            fail(e.code(), "row " + std::to_string(i) + ": " + e.message());
        }
        if (opts.latency.count() > 0) std::this_thread::sleep_for(opts.latency);
    }
    return Y;
}

Dataset generate_dataset(const DesignSpace& space, Index n, std::uint64_t seed, const BuildingConstants& c,
                         const BatchOptions& opts) {
    Dataset ds;
    ds.input_names = space.names();
    ds.output_names.assign(output_names().begin(), output_names().end());
    ds.space = space;
    if (n == 0) {
        column_map(space);
        ds.X.resize(0, space.dim());
        ds.Y.resize(0, static_cast<Index>(kNumOutputs));
        return ds;
    }
    ds.X = lhs_sample(space, n, seed);
    ds.Y = simulate_batch(ds.X, c, opts, &space);
    return ds;
}

nlohmann::json BuildingConstants::to_json() const {
    return {{"wall_area", wall_area},
            {"roof_area", roof_area},
            {"floor_area", floor_area},
            {"volume", volume},
            {"heating_degree_hours", heating_degree_hours},
            {"cooling_degree_hours", cooling_degree_hours},
            {"heating_hours", heating_hours},
            {"cooling_hours", cooling_hours},
            {"solar_irradiation", solar_irradiation},
            {"pv_yield", pv_yield}};
}

BuildingConstants BuildingConstants::from_json(const nlohmann::json& j) {
    BuildingConstants c;
    c.wall_area = j.value("wall_area", c.wall_area);
    c.roof_area = j.value("roof_area", c.roof_area);
    c.floor_area = j.value("floor_area", c.floor_area);
    c.volume = j.value("volume", c.volume);
    c.heating_degree_hours = j.value("heating_degree_hours", c.heating_degree_hours);
    c.cooling_degree_hours = j.value("cooling_degree_hours", c.cooling_degree_hours);
    c.heating_hours = j.value("heating_hours", c.heating_hours);
    c.cooling_hours = j.value("cooling_hours", c.cooling_hours);
    c.solar_irradiation = j.value("solar_irradiation", c.solar_irradiation);
    c.pv_yield = j.value("pv_yield", c.pv_yield);
    return c;
}

nlohmann::json dataset_metadata(const DesignSpace& space, Index n, std::uint64_t seed, const BuildingConstants& c,
                                const BatchOptions& opts) {
    return {{"generator", "synthetic-building-v1"},
            {"design_space", space.to_json()},
            {"n_samples", n},
            {"seed", seed},
            {"sampling", "lhs-jittered"},
            {"constants", c.to_json()},
            {"outputs", output_names()},
            {"output_unit", kOutputUnit},
            {"artificial_latency_ms", opts.latency.count()},
            // Cost of one run of the building simulation this model stands in for.
            {"reference_simulation_seconds", 130}};
}

}  // namespace surrogate::sim
