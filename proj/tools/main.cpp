#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "surrogate/bnn.hpp"
#include "surrogate/error.hpp"
#include "surrogate/evaluation.hpp"
#include "surrogate/pipeline.hpp"
#include "surrogate/router.hpp"
#include "surrogate/service.hpp"
#include "surrogate/simulator.hpp"
#include "surrogate/svgp.hpp"

using namespace surrogate;
namespace fs = std::filesystem;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

fs::path sidecar_for(const fs::path& csv) {
    fs::path p = csv;
    return p.replace_extension(".meta.json");
}

// Input columns come from, in order: --space, the dataset's sidecar, --n-inputs, the default space.
Dataset load_dataset(const fs::path& csv, const std::string& space_path, Index n_inputs) {
    if (!space_path.empty()) return Dataset::load_csv(csv, std::nullopt, DesignSpace::load(space_path));
    const fs::path meta = sidecar_for(csv);
    if (fs::exists(meta)) {
        const auto j = pipeline::read_json(meta);
        if (j.contains("design_space")) {
            return Dataset::load_csv(csv, std::nullopt, DesignSpace::from_json(j["design_space"]));
        }
    }
    if (n_inputs > 0) return Dataset::load_csv(csv, n_inputs);
    return Dataset::load_csv(csv, std::nullopt, sim::default_space());
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidArgument, "cannot parse '" + item + "' in list '" + text + "'");
        }
    }
    if (out.empty()) fail(ErrorCode::InvalidArgument, "empty list");
    return out;
}

std::vector<Index> parse_widths(const std::string& text) {
    std::vector<Index> out;
    for (double v : parse_list(text)) {
        if (v != static_cast<double>(static_cast<Index>(v)) || v < 1) {
            fail(ErrorCode::InvalidArgument, "layer widths must be positive integers");
        }
        out.push_back(static_cast<Index>(v));
    }
    return out;
}

Index output_index(const Surrogate& model, const std::string& name) {
    const auto& names = model.output_names();
    for (std::size_t o = 0; o < names.size(); ++o) {
        if (names[o] == name) return static_cast<Index>(o);
    }
    fail(ErrorCode::InvalidArgument, "model has no output '" + name + "'");
}

std::pair<std::string, int> parse_addr(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) fail(ErrorCode::InvalidArgument, "--addr must be host:port");
    try {
        return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
    } catch (const std::exception&) {
        fail(ErrorCode::InvalidArgument, "invalid port in '" + addr + "'");
    }
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-aware building energy surrogates"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(pipeline::kToolVersion));

    // generate
    auto* gen = app.add_subcommand("generate", "Sample the design space and simulate each sample");
    std::string gen_space, gen_out;
    Index gen_n = 0;
    std::uint64_t gen_seed = 0;
    int gen_latency = 0;
    gen->add_option("--space", gen_space, "Design space JSON (default: built-in 10-parameter space)");
    gen->add_option("--n", gen_n, "Number of samples")->required()->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--out", gen_out, "Output CSV")->required();
    gen->add_option("--latency-ms", gen_latency, "Artificial cost per simulation run")->check(CLI::NonNegativeNumber);

    // train
    auto* train = app.add_subcommand("train", "Train a surrogate");
    train->require_subcommand(1);
    auto* tb = train->add_subcommand("bnn", "Dropout neural network");
    std::string tb_data, tb_out, tb_space, tb_hidden = "512,512";
    Index tb_n_inputs = 0;
    bnn::TrainConfig tb_cfg;
    double tb_dropout = 0.05, tb_slope = 0.01;
    std::uint64_t tb_init_seed = 0;
    tb->add_option("--data", tb_data, "Training CSV")->required();
    tb->add_option("--out", tb_out, "Model artifact")->required();
    tb->add_option("--space", tb_space, "Design space JSON naming the input columns");
    tb->add_option("--n-inputs", tb_n_inputs, "Number of leading input columns");
    tb->add_option("--hidden", tb_hidden, "Hidden layer widths")->capture_default_str();
    tb->add_option("--dropout", tb_dropout, "Dropout probability")->capture_default_str();
    tb->add_option("--leaky-slope", tb_slope, "Leaky ReLU slope")->capture_default_str();
    tb->add_option("--epochs", tb_cfg.epochs, "Epochs")->capture_default_str()->check(CLI::PositiveNumber);
    tb->add_option("--batch-size", tb_cfg.batch_size, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
    tb->add_option("--lr", tb_cfg.adam.step_size, "Adam step size")->capture_default_str();
    tb->add_option("--seed", tb_cfg.seed, "Shuffling and dropout seed");
    tb->add_option("--init-seed", tb_init_seed, "Weight initialisation seed");
    tb->add_option("--log-every", tb_cfg.log_every, "Report the epoch loss every k epochs");

    auto* ts = train->add_subcommand("svgp", "Sparse variational Gaussian process");
    std::string ts_data, ts_out, ts_space, ts_kernel = "matern32", ts_init = "random-subset";
    Index ts_n_inputs = 0;
    svgp::TrainConfig ts_cfg;
    ts->add_option("--data", ts_data, "Training CSV")->required();
    ts->add_option("--out", ts_out, "Model artifact")->required();
    ts->add_option("--space", ts_space, "Design space JSON naming the input columns");
    ts->add_option("--n-inputs", ts_n_inputs, "Number of leading input columns");
    ts->add_option("--steps", ts_cfg.steps, "Adam steps per output")->capture_default_str()->check(CLI::PositiveNumber);
    ts->add_option("--batch-size", ts_cfg.batch_size, "Minibatch size")->capture_default_str();
    ts->add_option("--inducing", ts_cfg.num_inducing, "Inducing points")->capture_default_str();
    ts->add_option("--kernel", ts_kernel, "matern32 or rbf")->capture_default_str();
    ts->add_option("--inducing-init", ts_init, "random-subset or kmeans")->capture_default_str();
    ts->add_option("--noise-fraction", ts_cfg.noise_fraction, "Fixed noise as a fraction of mean |y|")
        ->capture_default_str();
    ts->add_option("--lr", ts_cfg.adam.step_size, "Adam step size")->capture_default_str();
    ts->add_option("--seed", ts_cfg.seed, "Seed");
    ts->add_option("--log-every", ts_cfg.log_every, "Report the ELBO every k steps");

    // crossval
    auto* cv = app.add_subcommand("crossval", "k-fold architecture selection");
    cv->require_subcommand(1);
    auto* cvb = cv->add_subcommand("bnn", "Dropout network grid");
    std::string cv_data, cv_space, cv_out, cv_hidden, cv_dropouts;
    Index cv_n_inputs = 0;
    int cv_folds = 5, cv_mc = 30;
    std::uint64_t cv_seed = 0;
    bnn::TrainConfig cv_cfg;
    cvb->add_option("--data", cv_data, "Training CSV")->required();
    cvb->add_option("--space", cv_space, "Design space JSON naming the input columns");
    cvb->add_option("--n-inputs", cv_n_inputs, "Number of leading input columns");
    cvb->add_option("--folds", cv_folds, "Folds")->capture_default_str()->check(CLI::Range(2, 1000));
    cvb->add_option("--epochs", cv_cfg.epochs, "Epochs per fit")->capture_default_str()->check(CLI::PositiveNumber);
    cvb->add_option("--batch-size", cv_cfg.batch_size, "Batch size")->capture_default_str();
    cvb->add_option("--mc-samples", cv_mc, "MC passes for validation predictions")->capture_default_str();
    cvb->add_option("--hidden", cv_hidden, "Evaluate this single architecture instead of the default grid");
    cvb->add_option("--dropout", cv_dropouts, "Dropout rates for --hidden (comma separated)");
    cvb->add_option("--seed", cv_seed, "Seed");
    cvb->add_option("--out", cv_out, "Write the full table as JSON");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Accuracy, calibration and discard curves on a test set");
    std::string ev_model, ev_test, ev_report, ev_measure = "relative-std";
    int ev_mc = 30;
    std::uint64_t ev_seed = 0;
    ev->add_option("--model", ev_model, "Model artifact")->required();
    ev->add_option("--test", ev_test, "Test CSV")->required();
    ev->add_option("--mc-samples", ev_mc, "MC passes")->capture_default_str();
    ev->add_option("--seed", ev_seed, "Prediction seed");
    ev->add_option("--measure", ev_measure, "Ranking measure: std or relative-std")->capture_default_str();
    ev->add_option("--report", ev_report, "Report JSON path (curves are written next to it)");

    // evaluate-routing
    auto* er = app.add_subcommand("evaluate-routing", "Score uncertainty-threshold routing on a test set");
    std::string er_model, er_test, er_report, er_policy_out, er_percentiles = "90,80", er_aggregation = "any-output",
                                                                 er_output, er_measure = "relative-std";
    int er_mc = 30;
    std::uint64_t er_seed = 0;
    double er_seconds = 130.0;
    er->add_option("--model", er_model, "Model artifact")->required();
    er->add_option("--test", er_test, "Test CSV")->required();
    er->add_option("--percentiles", er_percentiles, "Threshold percentiles")->capture_default_str();
    er->add_option("--aggregation", er_aggregation, "any-output or specific-output")->capture_default_str();
    er->add_option("--output", er_output, "Monitored output for specific-output (default: hardest)");
    er->add_option("--measure", er_measure, "std or relative-std")->capture_default_str();
    er->add_option("--mc-samples", er_mc, "MC passes")->capture_default_str();
    er->add_option("--seed", er_seed, "Prediction seed");
    er->add_option("--seconds-per-run", er_seconds, "Cost of one simulation")->capture_default_str();
    er->add_option("--report", er_report, "Write the reports as JSON");
    er->add_option("--policy-out", er_policy_out, "Write the policy of the first percentile");

    // route
    auto* rt = app.add_subcommand("route", "Route one design point");
    std::string rt_model, rt_policy, rt_input;
    bool rt_simulate = false;
    int rt_mc = 30;
    std::uint64_t rt_seed = 0;
    rt->add_option("--model", rt_model, "Model artifact")->required();
    rt->add_option("--policy", rt_policy, "Threshold policy JSON")->required();
    rt->add_option("--input", rt_input, "JSON file or inline object {\"inputs\": {name: value}}")->required();
    rt->add_flag("--simulate", rt_simulate, "Run the simulator when routed");
    rt->add_option("--mc-samples", rt_mc, "MC passes")->capture_default_str();
    rt->add_option("--seed", rt_seed, "Prediction seed");

    // benchmark
    auto* bm = app.add_subcommand("benchmark", "Full default pipeline with a run manifest");
    auto bm_cfg = pipeline::BenchmarkConfig::defaults();
    std::string bm_out = "benchmark";
    bm->add_option("--seed", bm_cfg.seed, "Master seed")->capture_default_str();
    bm->add_option("--out", bm_out, "Run directory")->capture_default_str();
    bm->add_option("--n-train", bm_cfg.n_train, "Training samples")->capture_default_str();
    bm->add_option("--n-test", bm_cfg.n_test, "Test samples")->capture_default_str();
    bm->add_option("--epochs", bm_cfg.bnn_train.epochs, "BNN epochs")->capture_default_str();
    bm->add_option("--svgp-steps", bm_cfg.svgp_train.steps, "SVGP steps per output")->capture_default_str();
    bm->add_option("--mc-samples", bm_cfg.eval.mc_samples, "MC passes")->capture_default_str();

    // serve
    auto* sv = app.add_subcommand("serve", "HTTP prediction, routing and simulation service");
    std::string sv_model, sv_policy, sv_addr = "127.0.0.1:8080";
    service::ServiceConfig sv_cfg;
    int sv_latency = 0, sv_pending = 200;
    std::uint64_t sv_seed = 0;
    sv->add_option("--model", sv_model, "Model artifact (predict and route answer 503 without one)");
    sv->add_option("--policy", sv_policy, "Threshold policy JSON for /route");
    sv->add_option("--addr", sv_addr, "host:port (port 0 picks a free port)")->capture_default_str();
    sv->add_option("--simulate-latency-ms", sv_latency, "Artificial simulation latency")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    sv->add_option("--pending-threshold-ms", sv_pending, "Latency above which /simulate returns a job id")
        ->capture_default_str();
    auto* sv_fixed = sv->add_option("--fixed-seed", sv_seed, "Fixed MC seed for reproducible responses");
    sv->add_option("--mc-samples", sv_cfg.mc_samples, "MC passes per prediction")->capture_default_str();
    sv->add_option("--workers", sv_cfg.workers, "Simulation worker threads")->capture_default_str();
    sv->add_option("--cors-origin", sv_cfg.cors_origin, "Access-Control-Allow-Origin value")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            const DesignSpace space = gen_space.empty() ? sim::default_space() : DesignSpace::load(gen_space);
            sim::BatchOptions opts;
            opts.latency = std::chrono::milliseconds(gen_latency);
            const auto ds = sim::generate_dataset(space, gen_n, gen_seed, {}, opts);
            ds.save_csv(gen_out);
            pipeline::write_json(sidecar_for(gen_out), sim::dataset_metadata(space, gen_n, gen_seed, {}, opts));
            log_line("wrote " + std::to_string(ds.size()) + " samples to " + gen_out);
        } else if (*tb) {
            const auto data = load_dataset(tb_data, tb_space, tb_n_inputs);
            bnn::Architecture arch;
            arch.n_inputs = data.n_inputs();
            arch.n_outputs = data.n_outputs();
            arch.hidden_layers = parse_widths(tb_hidden);
            arch.dropout_p = tb_dropout;
            arch.leaky_slope = tb_slope;
            bnn::BnnModel model(arch, tb_init_seed);
            model.train(data, tb_cfg);
            model.save(tb_out);
            log_line("final epoch loss " + std::to_string(model.training_log().back()) + "; wrote " + tb_out);
        } else if (*ts) {
            const auto data = load_dataset(ts_data, ts_space, ts_n_inputs);
            ts_cfg.kernel = svgp::kernel_kind_from_string(ts_kernel);
            if (ts_init == "kmeans") {
                ts_cfg.inducing_init = svgp::InducingInit::KMeans;
            } else if (ts_init != "random-subset") {
                fail(ErrorCode::InvalidArgument, "--inducing-init must be random-subset or kmeans");
            }
            svgp::SvgpModel model;
            model.train(data, ts_cfg);
            model.save(ts_out);
            log_line("wrote " + ts_out);
        } else if (*cvb) {
            const auto data = load_dataset(cv_data, cv_space, cv_n_inputs);
            std::vector<bnn::Architecture> grid;
            if (cv_hidden.empty()) {
                grid = bnn::default_grid(data.n_inputs(), data.n_outputs());
            } else {
                for (double p : cv_dropouts.empty() ? std::vector<double>{0.05} : parse_list(cv_dropouts)) {
                    bnn::Architecture a;
                    a.n_inputs = data.n_inputs();
                    a.n_outputs = data.n_outputs();
                    a.hidden_layers = parse_widths(cv_hidden);
                    a.dropout_p = p;
                    grid.push_back(a);
                }
            }
            const auto summary = bnn::cross_validate(data, grid, cv_folds, cv_seed, cv_cfg, cv_mc);
            if (!cv_out.empty()) pipeline::write_json(cv_out, summary.to_json());
            print_json({{"best", summary.best.to_json()}});
        } else if (*ev) {
            const auto model = load_model(ev_model);
            const auto test = load_dataset(ev_test, "", 0);
            eval::EvalOptions opts;
            opts.mc_samples = ev_mc;
            opts.seed = ev_seed;
            opts.measure = eval::uncertainty_measure_from_string(ev_measure);
            const auto report = eval::evaluate(*model, test, opts);
            if (!ev_report.empty()) {
                for (const auto& p : report.write(ev_report)) log_line("wrote " + p.string());
            }
            nlohmann::json brief = nlohmann::json::array();
            for (const auto& o : report.outputs) {
                brief.push_back({{"output", o.name},
                                 {"r2", o.r2},
                                 {"mape", o.mape.value},
                                 {"ape90", o.ape90.value},
                                 {"auc_error", o.calibration.auc_error}});
            }
            print_json({{"outputs", brief}, {"pooled_auc_error", report.pooled_calibration.auc_error}});
        } else if (*er) {
            const auto model = load_model(er_model);
            const auto test = load_dataset(er_test, "", 0);
            route::RoutingOptions opts;
            opts.percentiles = parse_list(er_percentiles);
            opts.aggregation = route::aggregation_from_string(er_aggregation);
            opts.measure = eval::uncertainty_measure_from_string(er_measure);
            opts.seconds_per_run = er_seconds;
            if (!er_output.empty()) opts.output = output_index(*model, er_output);
            const auto reports = route::evaluate_routing(*model, test, opts, er_mc, er_seed);
            nlohmann::json j = nlohmann::json::array();
            for (const auto& r : reports) j.push_back(r.to_json());
            if (!er_report.empty()) pipeline::write_json(er_report, j);
            if (!er_policy_out.empty()) pipeline::write_json(er_policy_out, reports.front().policy.to_json());
            print_json(j);
        } else if (*rt) {
            const auto model = load_model(rt_model);
            const auto policy = route::ThresholdPolicy::from_json(pipeline::read_json(rt_policy));
            nlohmann::json body;
            if (fs::exists(rt_input)) {
                body = pipeline::read_json(rt_input);
            } else {
                try {
                    body = nlohmann::json::parse(rt_input);
                } catch (const nlohmann::json::exception&) {
                    fail(ErrorCode::Format, "--input is neither a file nor a JSON object");
                }
            }
            const auto& in = body.contains("inputs") ? body["inputs"] : body;
            Vector x(model->n_inputs());
            for (Index j = 0; j < model->n_inputs(); ++j) {
                const auto& name = model->input_names()[static_cast<std::size_t>(j)];
                if (!in.contains(name) || !in[name].is_number()) {
                    fail(ErrorCode::InvalidArgument, "input '" + name + "' is missing or not a number");
                }
                x(j) = in[name].get<double>();
            }
            PredictOptions popts;
            popts.mc_samples = rt_mc;
            popts.seed = rt_seed;
            route::SimulatorFn simulator = [&](const Vector& row) {
                Matrix X = row.transpose();
                const DesignSpace space = model->space() ? *model->space() : sim::default_space();
                return Vector(sim::simulate_batch(X, {}, {}, &space).row(0).transpose());
            };
            const auto decision = route::route(policy, *model, x, popts, rt_simulate ? &simulator : nullptr);
            print_json(decision.to_json(model->output_names()));
        } else if (*bm) {
            const auto result = pipeline::run_benchmark(bm_cfg, bm_out, log_line);
            print_json(pipeline::read_json(fs::path(bm_out) / "reports" / "bnn_summary.json"));
        } else if (*sv) {
            std::shared_ptr<const Surrogate> model;
            if (!sv_model.empty()) model = load_model(sv_model);
            std::optional<route::ThresholdPolicy> policy;
            if (!sv_policy.empty()) policy = route::ThresholdPolicy::from_json(pipeline::read_json(sv_policy));
            sv_cfg.simulate_latency = std::chrono::milliseconds(sv_latency);
            sv_cfg.pending_threshold = std::chrono::milliseconds(sv_pending);
            if (*sv_fixed) sv_cfg.fixed_seed = sv_seed;
            service::Service svc(model, policy, sv_cfg);
            const auto [host, port] = parse_addr(sv_addr);
            service::serve(svc, host, port, [&](int bound) {
                std::cout << "listening on http://" << host << ':' << bound << std::endl;
            });
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
