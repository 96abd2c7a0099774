#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "surrogate/predictive.hpp"
#include "surrogate/router.hpp"
#include "surrogate/simulator.hpp"

namespace httplib {
class Server;
}

namespace surrogate::service {

inline constexpr const char* kVersion = "1.0.0";

struct ServiceConfig {
    /// Artificial latency of each simulation run.
    std::chrono::milliseconds simulate_latency{0};
    /// /simulate answers synchronously up to this latency and returns a job id above it.
    std::chrono::milliseconds pending_threshold{200};
    std::size_t workers = 2;
    /// Fixed MC seed for reproducible responses; fresh entropy per request when empty.
    std::optional<std::uint64_t> fixed_seed;
    int mc_samples = 30;
    std::string cors_origin = "*";
    sim::BuildingConstants constants;
};

/// Endpoint result before it is written to the wire.
struct Reply {
    int status = 200;
    nlohmann::json body;
};

enum class JobState { Pending, Done, Failed };

/// Bounded worker pool running simulation jobs, with a queryable job table.
class JobQueue {
public:
    explicit JobQueue(std::size_t workers);
    ~JobQueue();
    JobQueue(const JobQueue&) = delete;
    JobQueue& operator=(const JobQueue&) = delete;

    std::string submit(std::function<nlohmann::json()> work);
    /// Status document of a job, or empty when unknown.
    [[nodiscard]] std::optional<nlohmann::json> status(const std::string& id) const;

private:
    struct Job {
        JobState state = JobState::Pending;
        nlohmann::json result;
        std::string error;
    };
    void run();

    mutable std::mutex mutex_;
    std::condition_variable ready_;
    std::deque<std::pair<std::string, std::function<nlohmann::json()>>> queue_;
    std::map<std::string, Job> jobs_;
    std::uint64_t next_id_ = 1;
    bool stopping_ = false;
    std::vector<std::thread> threads_;
};

/// Request handling independent of the transport.
class Service {
public:
    Service(std::shared_ptr<const Surrogate> model, std::optional<route::ThresholdPolicy> policy,
            ServiceConfig config = {});

    Reply health() const;
    Reply model_info() const;
    Reply predict(const std::string& body) const;
    Reply route(const std::string& body);
    Reply simulate(const std::string& body);
    Reply job(const std::string& id) const;

    /// Registers every endpoint (and CORS handling) on an httplib server.
    void mount(httplib::Server& server);

    [[nodiscard]] const ServiceConfig& config() const noexcept { return config_; }

private:
    [[nodiscard]] const DesignSpace& space() const;
    /// Parses {"inputs": {name: value}} into a row ordered by `space`; throws Error naming the field.
    [[nodiscard]] Vector parse_inputs(const std::string& body, const DesignSpace& space) const;
    [[nodiscard]] PredictOptions predict_options() const;
    [[nodiscard]] nlohmann::json run_simulation(const Vector& x_sim) const;
    [[nodiscard]] nlohmann::json simulation_reply(const Vector& x_sim);
    [[nodiscard]] Vector to_simulator_order(const Vector& x_model) const;

    std::shared_ptr<const Surrogate> model_;
    std::optional<route::ThresholdPolicy> policy_;
    ServiceConfig config_;
    std::string model_id_;
    DesignSpace model_space_;
    JobQueue jobs_;
};

/// Blocks serving on host:port (port 0 picks a free port and reports it through `on_bound`).
void serve(Service& service, const std::string& host, int port, const std::function<void(int)>& on_bound = {});

}  // namespace surrogate::service
