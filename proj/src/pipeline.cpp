#include "surrogate/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "surrogate/error.hpp"
#include "surrogate/hash.hpp"

namespace surrogate::pipeline {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

nlohmann::json adam_json(const AdamConfig& a) {
    return {{"step_size", a.step_size}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

nlohmann::json routing_list(const std::vector<route::RoutingReport>& reports) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : reports) j.push_back(r.to_json());
    return j;
}

std::vector<route::RoutingReport> routing_for(const std::vector<PredictiveDistribution>& preds, const Dataset& test,
                                              const route::RoutingOptions& base) {
    auto any = base;
    any.aggregation = route::Aggregation::AnyOutput;
    auto reports = route::evaluate_routing(preds, test, any);
    auto specific = base;
    specific.aggregation = route::Aggregation::SpecificOutput;
    for (auto& r : route::evaluate_routing(preds, test, specific)) reports.push_back(std::move(r));
    return reports;
}

nlohmann::json summary_of(const eval::EvaluationReport& report, const std::vector<route::RoutingReport>& routing) {
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& o : report.outputs) {
        outs.push_back({{"name", o.name},
                        {"r2", o.r2},
                        {"mape", o.mape.value},
                        {"ape90", o.ape90.value},
                        {"auc_error", o.calibration.auc_error}});
    }
    nlohmann::json routes = nlohmann::json::array();
    for (const auto& r : routing) {
        nlohmann::json per = nlohmann::json::object();
        for (const auto& o : r.outputs) {
            per[o.name] = o.ape90_reduction ? nlohmann::json(*o.ape90_reduction) : nlohmann::json("n/a");
        }
        routes.push_back({{"percentile", r.policy.percentile},
                          {"aggregation", route::to_string(r.policy.aggregation)},
                          {"fraction_routed", r.fraction_routed},
                          {"ape90_reduction", per}});
    }
    return {{"model", report.model_kind},
            {"outputs", outs},
            {"hardest_output", report.outputs[static_cast<std::size_t>(report.hardest_output())].name},
            {"pooled_auc_error", report.pooled_calibration.auc_error},
            {"routing", routes}};
}

}  // namespace

SeedRegistry SeedRegistry::from_master(std::uint64_t master) {
    SeedRegistry s;
    s.master = master;
    s.train_data = derive_seed(master, 1);
    s.test_data = derive_seed(master, 2);
    s.bnn_init = derive_seed(master, 3);
    s.bnn_train = derive_seed(master, 4);
    s.svgp_train = derive_seed(master, 5);
    s.evaluation = derive_seed(master, 6);
    return s;
}

nlohmann::json SeedRegistry::to_json() const {
    return {{"master", master},         {"train_data", train_data}, {"test_data", test_data},
            {"bnn_init", bnn_init},     {"bnn_train", bnn_train},   {"svgp_train", svgp_train},
            {"evaluation", evaluation}};
}

BenchmarkConfig BenchmarkConfig::defaults() {
    BenchmarkConfig c;
    c.bnn_arch.n_inputs = static_cast<Index>(sim::kNumInputs);
    c.bnn_arch.n_outputs = static_cast<Index>(sim::kNumOutputs);
    return c;
}

nlohmann::json BenchmarkConfig::to_json() const {
    return {{"seed", seed},
            {"n_train", n_train},
            {"n_test", n_test},
            {"bnn",
             {{"architecture", bnn_arch.to_json()},
              {"epochs", bnn_train.epochs},
              {"batch_size", bnn_train.batch_size},
              {"adam", adam_json(bnn_train.adam)}}},
            {"svgp",
             {{"steps", svgp_train.steps},
              {"batch_size", svgp_train.batch_size},
              {"num_inducing", svgp_train.num_inducing},
              {"kernel", to_string(svgp_train.kernel)},
              {"inducing_init", svgp_train.inducing_init == svgp::InducingInit::KMeans ? "kmeans" : "random-subset"},
              {"noise_fraction", svgp_train.noise_fraction},
              {"adam", adam_json(svgp_train.adam)}}},
            {"evaluation",
             {{"mc_samples", eval.mc_samples},
              {"measure", eval::to_string(eval.measure)},
              {"levels", eval.levels},
              {"fractions", eval.fractions}}},
            {"routing",
             {{"percentiles", routing.percentiles},
              {"measure", eval::to_string(routing.measure)},
              {"seconds_per_run", routing.seconds_per_run}}},
            {"constants", constants.to_json()}};
}

nlohmann::json RunManifest::to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& f : files) list.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    return {{"tool_version", tool_version},
            {"seeds", seeds.to_json()},
            {"config", config},
            {"started_at", started_at},
            {"finished_at", finished_at},
            {"durations_seconds", durations_seconds},
            {"files", list}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    try {
        RunManifest m;
        m.tool_version = j.at("tool_version").get<std::string>();
        const auto& s = j.at("seeds");
        m.seeds.master = s.at("master").get<std::uint64_t>();
        m.seeds.train_data = s.at("train_data").get<std::uint64_t>();
        m.seeds.test_data = s.at("test_data").get<std::uint64_t>();
        m.seeds.bnn_init = s.at("bnn_init").get<std::uint64_t>();
        m.seeds.bnn_train = s.at("bnn_train").get<std::uint64_t>();
        m.seeds.svgp_train = s.at("svgp_train").get<std::uint64_t>();
        m.seeds.evaluation = s.at("evaluation").get<std::uint64_t>();
        m.config = j.at("config");
        m.started_at = j.at("started_at").get<std::string>();
        m.finished_at = j.at("finished_at").get<std::string>();
        m.durations_seconds = j.at("durations_seconds");
        for (const auto& f : j.at("files")) {
            m.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                               f.at("bytes").get<std::uintmax_t>()});
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, std::string("malformed manifest: ") + e.what());
    }
}

std::vector<std::string> verify_manifest(const RunManifest& manifest, const fs::path& dir) {
    std::vector<std::string> bad;
    for (const auto& f : manifest.files) {
        const fs::path p = dir / f.path;
        if (!fs::exists(p) || sha256_file(p) != f.sha256) bad.push_back(f.path);
    }
    return bad;
}

void add_to_manifest(RunManifest& manifest, const fs::path& root, const fs::path& path) {
    manifest.files.push_back(
        {fs::relative(path, root).generic_string(), sha256_file(path), fs::file_size(path)});
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, path.string() + ": " + e.what());
    }
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

BenchmarkResult run_benchmark(const BenchmarkConfig& config, const fs::path& out, const Logger& log) {
    auto say = [&](const std::string& msg) {
        if (log) log(msg);
    };
    BenchmarkResult r;
    RunManifest& m = r.manifest;
    m.seeds = SeedRegistry::from_master(config.seed);
    m.config = config.to_json();
    m.started_at = utc_now();

    const fs::path data_dir = out / "data", model_dir = out / "models", report_dir = out / "reports";
    for (const auto& d : {data_dir, model_dir, report_dir}) fs::create_directories(d);
    const auto& space = sim::default_space();
    std::vector<fs::path> written;

    auto t0 = std::chrono::steady_clock::now();
    say("generating " + std::to_string(config.n_train) + " train and " + std::to_string(config.n_test) +
        " test samples");
    r.train = sim::generate_dataset(space, config.n_train, m.seeds.train_data, config.constants);
    r.test = sim::generate_dataset(space, config.n_test, m.seeds.test_data, config.constants);
    for (const auto& [name, ds, seed] : {std::tuple{"train", &r.train, m.seeds.train_data},
                                         std::tuple{"test", &r.test, m.seeds.test_data}}) {
        const fs::path csv = data_dir / (std::string(name) + ".csv");
        const fs::path meta = data_dir / (std::string(name) + ".meta.json");
        ds->save_csv(csv);
        write_json(meta, sim::dataset_metadata(space, ds->size(), seed, config.constants, {}));
        written.push_back(csv);
        written.push_back(meta);
    }
    m.durations_seconds["generate"] = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    say("training bnn (" + std::to_string(config.bnn_train.epochs) + " epochs)");
    auto arch = config.bnn_arch;
    arch.n_inputs = r.train.n_inputs();
    arch.n_outputs = r.train.n_outputs();
    r.bnn = std::make_shared<bnn::BnnModel>(arch, m.seeds.bnn_init);
    auto bnn_cfg = config.bnn_train;
    bnn_cfg.seed = m.seeds.bnn_train;
    r.bnn->train(r.train, bnn_cfg);
    r.bnn->save(model_dir / "bnn.json");
    written.push_back(model_dir / "bnn.json");
    m.durations_seconds["train_bnn"] = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    say("training svgp (" + std::to_string(config.svgp_train.steps) + " steps per output)");
    r.svgp = std::make_shared<svgp::SvgpModel>();
    auto svgp_cfg = config.svgp_train;
    svgp_cfg.seed = m.seeds.svgp_train;
    r.svgp->train(r.train, svgp_cfg);
    r.svgp->save(model_dir / "svgp.json");
    written.push_back(model_dir / "svgp.json");
    m.durations_seconds["train_svgp"] = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    say("evaluating");
    auto opts = config.eval;
    opts.seed = m.seeds.evaluation;
    auto routing = config.routing;
    routing.measure = opts.measure;
    for (const auto& [name, model, report, routes] :
         {std::tuple{std::string("bnn"), static_cast<const Surrogate*>(r.bnn.get()), &r.bnn_report, &r.bnn_routing},
          std::tuple{std::string("svgp"), static_cast<const Surrogate*>(r.svgp.get()), &r.svgp_report,
                     &r.svgp_routing}}) {
        const auto preds = eval::predict_dataset(*model, r.test, opts.mc_samples, opts.seed);
        *report = eval::evaluate_predictions(model->kind(), model->transforms(), preds, r.test, opts);
        *routes = routing_for(preds, r.test, routing);
        for (const auto& p : report->write(report_dir / (name + "_evaluation.json"))) written.push_back(p);
        const fs::path routing_path = report_dir / (name + "_routing.json");
        write_json(routing_path, routing_list(*routes));
        written.push_back(routing_path);
        const fs::path policy_path = report_dir / (name + "_policy.json");
        write_json(policy_path, routes->front().policy.to_json());
        written.push_back(policy_path);
        const fs::path summary_path = report_dir / (name + "_summary.json");
        write_json(summary_path, summary_of(*report, *routes));
        written.push_back(summary_path);
    }
    m.durations_seconds["evaluate"] = seconds_since(t0);

    for (const auto& p : written) add_to_manifest(m, out, p);
    m.finished_at = utc_now();
    write_json(out / "manifest.json", m.to_json());
    say("wrote " + std::to_string(written.size()) + " files and manifest.json to " + out.string());
    return r;
}

}  // namespace surrogate::pipeline
