#include "surrogate/service.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include <httplib.h>

#include "surrogate/error.hpp"
#include "surrogate/hash.hpp"

namespace surrogate::service {

namespace {

struct FieldError {
    std::string field;
    std::string message;
};

Reply error_reply(int status, std::string_view code, const std::string& message, const std::string& field = {}) {
    nlohmann::json err = {{"code", std::string(code)}, {"message", message}};
    if (!field.empty()) err["field"] = field;
    return {status, {{"error", err}}};
}

Reply no_model() { return error_reply(503, "model-not-loaded", "no model is loaded"); }

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::DimensionMismatch:
        case ErrorCode::Format:
        case ErrorCode::InvalidSpace: return 400;
        default: return 500;
    }
}

std::string unit_of(const std::string& output) {
    const auto& names = sim::output_names();
    return std::find(names.begin(), names.end(), output) != names.end() ? sim::kOutputUnit : "";
}

// Sign convention for comparing designs in the explorer.
std::string preferred_direction(const std::string& output) {
    return output == "pv_generation" ? "higher" : "lower";
}

DesignSpace space_for(const Surrogate* model) {
    if (!model) return sim::default_space();
    if (model->space()) return *model->space();
    std::vector<Parameter> params;
    for (const auto& name : model->input_names()) {
        const auto j = sim::default_space().find(name);
        if (!j) fail(ErrorCode::InvalidSpace, "model input '" + name + "' has no design-space bounds");
        params.push_back(sim::default_space().params()[static_cast<std::size_t>(*j)]);
    }
    return DesignSpace(params);
}

}  // namespace

JobQueue::JobQueue(std::size_t workers) {
    const std::size_t n = std::max<std::size_t>(1, workers);
    for (std::size_t i = 0; i < n; ++i) threads_.emplace_back([this] { run(); });
}

JobQueue::~JobQueue() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    ready_.notify_all();
    for (auto& t : threads_) t.join();
}

std::string JobQueue::submit(std::function<nlohmann::json()> work) {
    std::string id;
    {
        std::lock_guard lock(mutex_);
        id = "job-" + std::to_string(next_id_++);
        jobs_[id] = Job{};
        queue_.emplace_back(id, std::move(work));
    }
    ready_.notify_one();
    return id;
}

std::optional<nlohmann::json> JobQueue::status(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) return std::nullopt;
    const Job& job = it->second;
    nlohmann::json j = {{"job_id", id}};
    switch (job.state) {
        case JobState::Pending: j["status"] = "pending"; break;
        case JobState::Done:
            j["status"] = "done";
            j["outputs"] = job.result;
            break;
        case JobState::Failed:
            j["status"] = "failed";
            j["error"] = job.error;
            break;
    }
    return j;
}

void JobQueue::run() {
    for (;;) {
        std::pair<std::string, std::function<nlohmann::json()>> item;
        {
            std::unique_lock lock(mutex_);
            ready_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (stopping_ && queue_.empty()) return;
            item = std::move(queue_.front());
            queue_.pop_front();
        }
        Job done;
        try {
            done.result = item.second();
            done.state = JobState::Done;
        } catch (const std::exception& e) {
            done.state = JobState::Failed;
            done.error = e.what();
        }
        std::lock_guard lock(mutex_);
        jobs_[item.first] = std::move(done);
    }
}

Service::Service(std::shared_ptr<const Surrogate> model, std::optional<route::ThresholdPolicy> policy,
                 ServiceConfig config)
    : model_(std::move(model)),
      policy_(std::move(policy)),
      config_(std::move(config)),
      model_space_(space_for(model_.get())),
      jobs_(config_.workers) {
    if (config_.mc_samples < 2) fail(ErrorCode::InvalidArgument, "mc samples must be at least 2");
    if (model_) {
        model_id_ = model_->kind() + "-" + sha256_hex(model_->to_json().dump()).substr(0, 16);
        if (policy_) {
            policy_->validate();
            if (policy_->thresholds.size() != model_->n_outputs()) {
                fail(ErrorCode::DimensionMismatch, "threshold policy does not match the model outputs");
            }
        }
    }
}

const DesignSpace& Service::space() const { return model_space_; }

Vector Service::parse_inputs(const std::string& body, const DesignSpace& space) const {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
        throw FieldError{"body", "request body is not valid JSON"};
    }
    if (!j.is_object() || !j.contains("inputs") || !j["inputs"].is_object()) {
        throw FieldError{"inputs", "expected an object field 'inputs' mapping parameter names to numbers"};
    }
    const auto& in = j["inputs"];
    for (const auto& [key, value] : in.items()) {
        if (!space.find(key)) throw FieldError{key, "unknown parameter '" + key + "'"};
    }
    Vector x(space.dim());
    for (Index d = 0; d < space.dim(); ++d) {
        const auto& p = space.params()[static_cast<std::size_t>(d)];
        if (!in.contains(p.name)) throw FieldError{p.name, "missing parameter '" + p.name + "'"};
        const auto& v = in[p.name];
        if (!v.is_number()) throw FieldError{p.name, "parameter '" + p.name + "' must be a number"};
        x(d) = v.get<double>();
        if (!(x(d) >= p.lower && x(d) <= p.upper)) {
            std::ostringstream msg;
            msg << "parameter '" << p.name << "' = " << x(d) << " is outside [" << p.lower << ", " << p.upper << "]";
            throw FieldError{p.name, msg.str()};
        }
    }
    return x;
}

PredictOptions Service::predict_options() const {
    PredictOptions opts;
    opts.mc_samples = config_.mc_samples;
    if (config_.fixed_seed) {
        opts.seed = *config_.fixed_seed;
    } else {
        std::random_device rd;
        opts.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }
    return opts;
}

Vector Service::to_simulator_order(const Vector& x_model) const {
    const auto& names = sim::input_names();
    Vector x(static_cast<Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
        const auto j = model_space_.find(names[k]);
        if (!j) fail(ErrorCode::InvalidArgument, "model inputs do not cover simulator parameter '" + names[k] + "'");
        x(static_cast<Index>(k)) = x_model(*j);
    }
    return x;
}

nlohmann::json Service::run_simulation(const Vector& x_sim) const {
    if (config_.simulate_latency.count() > 0) std::this_thread::sleep_for(config_.simulate_latency);
    const auto out = sim::simulate(sim::params_from_vector(x_sim), config_.constants).values();
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t o = 0; o < out.size(); ++o) j[sim::output_names()[o]] = out[o];
    return j;
}

nlohmann::json Service::simulation_reply(const Vector& x_sim) {
    if (config_.simulate_latency <= config_.pending_threshold) {
        return {{"status", "done"}, {"outputs", run_simulation(x_sim)}};
    }
    const std::string id = jobs_.submit([this, x_sim] { return run_simulation(x_sim); });
    return {{"status", "pending"},
            {"job_id", id},
            {"expected_latency_ms", static_cast<std::int64_t>(config_.simulate_latency.count())}};
}

Reply Service::health() const {
    return {200, {{"version", kVersion}, {"model_loaded", model_ != nullptr}}};
}

Reply Service::model_info() const {
    if (!model_) return no_model();
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& p : model_space_.params()) {
        inputs.push_back({{"name", p.name}, {"lower", p.lower}, {"upper", p.upper}, {"unit", p.unit}});
    }
    nlohmann::json outputs = nlohmann::json::array();
    for (const auto& name : model_->output_names()) {
        outputs.push_back({{"name", name}, {"unit", unit_of(name)}, {"better", preferred_direction(name)}});
    }
    return {200,
            {{"model_id", model_id_},
             {"kind", model_->kind()},
             {"architecture", model_->describe()},
             {"inputs", inputs},
             {"outputs", outputs},
             {"threshold_policy", policy_ ? policy_->to_json() : nlohmann::json(nullptr)},
             {"mc_samples", config_.mc_samples},
             {"simulate_latency_ms", static_cast<std::int64_t>(config_.simulate_latency.count())}}};
}

Reply Service::predict(const std::string& body) const {
    if (!model_) return no_model();
    try {
        const Vector x = parse_inputs(body, model_space_);
        const auto opts = predict_options();
        const auto p = model_->predict(x, opts);
        const Vector sd = p.std_dev();
        nlohmann::json outs = nlohmann::json::object();
        nlohmann::json clipped = nlohmann::json::array();
        for (Index o = 0; o < p.size(); ++o) {
            const auto& name = model_->output_names()[static_cast<std::size_t>(o)];
            outs[name] = {{"mean", p.mean(o)}, {"std", sd(o)}, {"unit", unit_of(name)}};
            if (p.range_clipped.size() > static_cast<std::size_t>(o) && p.range_clipped[static_cast<std::size_t>(o)]) {
                clipped.push_back(name);
            }
        }
        return {200,
                {{"outputs", outs},
                 {"mc_samples", p.mc_samples_used},
                 {"model_id", model_id_},
                 {"range_clipped", clipped}}};
    } catch (const FieldError& e) {
        return error_reply(400, "invalid-argument", e.message, e.field);
    } catch (const Error& e) {
        return error_reply(status_for(e.code()), to_string(e.code()), e.message());
    }
}

Reply Service::route(const std::string& body) {
    if (!model_) return no_model();
    if (!policy_) return error_reply(503, "policy-not-loaded", "no threshold policy is loaded");
    try {
        const Vector x = parse_inputs(body, model_space_);
        auto decision = route::decide(*policy_, model_->predict(x, predict_options()));
        nlohmann::json j = decision.to_json(model_->output_names());
        if (decision.routed) {
            try {
                j["simulation"] = simulation_reply(to_simulator_order(x));
            } catch (const std::exception& e) {
                j["simulation"] = {{"status", "degraded"}, {"error", e.what()}};
            }
        }
        j["model_id"] = model_id_;
        return {200, j};
    } catch (const FieldError& e) {
        return error_reply(400, "invalid-argument", e.message, e.field);
    } catch (const Error& e) {
        return error_reply(status_for(e.code()), to_string(e.code()), e.message());
    }
}

Reply Service::simulate(const std::string& body) {
    try {
        const Vector x = parse_inputs(body, sim::default_space());
        auto j = simulation_reply(x);
        const int status = j["status"] == "pending" ? 202 : 200;
        return {status, j};
    } catch (const FieldError& e) {
        return error_reply(400, "invalid-argument", e.message, e.field);
    } catch (const Error& e) {
        return error_reply(status_for(e.code()), to_string(e.code()), e.message());
    }
}

Reply Service::job(const std::string& id) const {
    auto s = jobs_.status(id);
    if (!s) return error_reply(404, "not-found", "unknown job '" + id + "'");
    return {200, *s};
}

void Service::mount(httplib::Server& server) {
    server.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    auto send = [](httplib::Response& res, const Reply& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto guarded = [send](auto fn) {
        return [send, fn](const httplib::Request& req, httplib::Response& res) {
            try {
                send(res, fn(req));
            } catch (const std::exception& e) {
                send(res, error_reply(500, "internal", e.what()));
            }
        };
    };
    server.Get("/health", guarded([this](const httplib::Request&) { return health(); }));
    server.Get("/model", guarded([this](const httplib::Request&) { return model_info(); }));
    server.Post("/predict", guarded([this](const httplib::Request& req) { return predict(req.body); }));
    server.Post("/route", guarded([this](const httplib::Request& req) { return route(req.body); }));
    server.Post("/simulate", guarded([this](const httplib::Request& req) { return simulate(req.body); }));
    server.Get(R"(/simulate/([A-Za-z0-9\-]+))",
               guarded([this](const httplib::Request& req) { return job(req.matches[1].str()); }));
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

void serve(Service& service, const std::string& host, int port, const std::function<void(int)>& on_bound) {
    httplib::Server server;
    service.mount(server);
    int bound = port;
    if (port == 0) {
        bound = server.bind_to_any_port(host);
    } else if (!server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) fail(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    if (on_bound) on_bound(bound);
    if (!server.listen_after_bind()) fail(ErrorCode::Io, "server stopped unexpectedly");
}

}  // namespace surrogate::service
