#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "surrogate/bnn.hpp"
#include "surrogate/evaluation.hpp"
#include "surrogate/router.hpp"
#include "surrogate/simulator.hpp"
#include "surrogate/svgp.hpp"

namespace surrogate::pipeline {

inline constexpr const char* kToolVersion = "1.0.0";

/// Seeds of every random stage, derived from the master seed.
struct SeedRegistry {
    std::uint64_t master = 1;
    std::uint64_t train_data = 0;
    std::uint64_t test_data = 0;
    std::uint64_t bnn_init = 0;
    std::uint64_t bnn_train = 0;
    std::uint64_t svgp_train = 0;
    std::uint64_t evaluation = 0;

    static SeedRegistry from_master(std::uint64_t master);
    [[nodiscard]] nlohmann::json to_json() const;
};

struct BenchmarkConfig {
    std::uint64_t seed = 1;
    Index n_train = 4000;
    Index n_test = 1000;
    bnn::Architecture bnn_arch{};
    bnn::TrainConfig bnn_train{};
    svgp::TrainConfig svgp_train{};
    eval::EvalOptions eval{};
    route::RoutingOptions routing{};
    sim::BuildingConstants constants{};

    /// Paper-scale defaults on the 10-input simulator.
    static BenchmarkConfig defaults();
    [[nodiscard]] nlohmann::json to_json() const;
};

struct ManifestEntry {
    std::string path;  // relative to the run directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    std::string tool_version = kToolVersion;
    SeedRegistry seeds;
    nlohmann::json config;
    std::string started_at;
    std::string finished_at;
    nlohmann::json durations_seconds = nlohmann::json::object();
    std::vector<ManifestEntry> files;

    [[nodiscard]] nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

/// Rehashes every listed file; returns the paths whose content no longer matches.
std::vector<std::string> verify_manifest(const RunManifest& manifest, const std::filesystem::path& dir);

struct BenchmarkResult {
    Dataset train;
    Dataset test;
    std::shared_ptr<bnn::BnnModel> bnn;
    std::shared_ptr<svgp::SvgpModel> svgp;
    eval::EvaluationReport bnn_report;
    eval::EvaluationReport svgp_report;
    /// Any-output policies at each percentile, then specific-output on the hardest output.
    std::vector<route::RoutingReport> bnn_routing;
    std::vector<route::RoutingReport> svgp_routing;
    RunManifest manifest;
};

using Logger = std::function<void(const std::string&)>;

/// generate -> train both models -> evaluate -> routing; writes everything under `out`
/// with manifest.json last. Only the manifest carries timestamps and durations.
BenchmarkResult run_benchmark(const BenchmarkConfig& config, const std::filesystem::path& out,
                              const Logger& log = {});

/// Records `path` (under `root`) in the manifest.
void add_to_manifest(RunManifest& manifest, const std::filesystem::path& root, const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// UTC ISO-8601 timestamp of now.
std::string utc_now();

}  // namespace surrogate::pipeline
