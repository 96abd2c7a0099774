#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "surrogate/bnn.hpp"
#include "surrogate/error.hpp"
#include "surrogate/service.hpp"
#include "test_support.hpp"

#include <httplib.h>

using namespace surrogate;
using surrogate::service::Service;
using surrogate::service::ServiceConfig;
using surrogate::testing_support::ConstantSurrogate;
using surrogate::testing_support::SimulatorSurrogate;

namespace {

const Dataset& fit_data() {
    static const Dataset d = sim::generate_dataset(sim::default_space(), 60, 4);
    return d;
}

std::shared_ptr<const Surrogate> sim_model(double rel_sd = 0.1) {
    return std::make_shared<SimulatorSurrogate>(fit_data(), rel_sd);
}

Vector midpoint() {
    const auto& space = sim::default_space();
    Vector x(space.dim());
    for (Index j = 0; j < space.dim(); ++j) {
        const auto& p = space.params()[static_cast<std::size_t>(j)];
        x(j) = 0.5 * (p.lower + p.upper);
    }
    return x;
}

nlohmann::json inputs_at(const Vector& x) {
    nlohmann::json in = nlohmann::json::object();
    for (Index j = 0; j < x.size(); ++j) in[sim::input_names()[static_cast<std::size_t>(j)]] = x(j);
    return {{"inputs", in}};
}

std::string body_at(const Vector& x) { return inputs_at(x).dump(); }

route::ThresholdPolicy policy(double threshold) {
    route::ThresholdPolicy p;
    p.thresholds = Vector::Constant(sim::kNumOutputs, threshold);
    p.output_names.assign(sim::output_names().begin(), sim::output_names().end());
    return p;
}

}  // namespace

TEST(Service, HealthReportsVersionAndModel) {
    Service with(sim_model(), std::nullopt);
    auto r = with.health();
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body["version"], service::kVersion);
    EXPECT_TRUE(r.body["model_loaded"].get<bool>());
    Service without(nullptr, std::nullopt);
    EXPECT_FALSE(without.health().body["model_loaded"].get<bool>());
}

TEST(Service, NoModelGives503ButSimulateWorks) {
    Service s(nullptr, std::nullopt);
    EXPECT_EQ(s.predict(body_at(midpoint())).status, 503);
    EXPECT_EQ(s.route(body_at(midpoint())).status, 503);
    EXPECT_EQ(s.model_info().status, 503);
    auto r = s.simulate(body_at(midpoint()));
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(r.body["status"], "done");
}

TEST(Service, PredictReturnsMeanStdAndUnits) {
    Service s(sim_model(0.1), std::nullopt);
    auto r = s.predict(body_at(midpoint()));
    ASSERT_EQ(r.status, 200) << r.body.dump();
    const auto truth = sim::simulate(sim::params_from_vector(midpoint())).values();
    ASSERT_EQ(r.body["outputs"].size(), sim::kNumOutputs);
    for (std::size_t o = 0; o < sim::kNumOutputs; ++o) {
        const auto& out = r.body["outputs"][sim::output_names()[o]];
        EXPECT_NEAR(out["mean"].get<double>(), truth[o], 1e-12);
        EXPECT_NEAR(out["std"].get<double>(), 0.1 * std::abs(truth[o]), 1e-12);
        EXPECT_EQ(out["unit"], sim::kOutputUnit);
    }
    EXPECT_TRUE(r.body["range_clipped"].empty());
}

TEST(Service, ModelIdIsStableContentHash) {
    Service a(sim_model(), std::nullopt);
    Service b(sim_model(), std::nullopt);
    const auto id = a.model_info().body["model_id"].get<std::string>();
    EXPECT_EQ(id, b.model_info().body["model_id"].get<std::string>());
    EXPECT_EQ(id.rfind("simulator-", 0), 0u);
    EXPECT_EQ(id.size(), std::string("simulator-").size() + 16);
}

TEST(Service, ModelInfoListsBoundsAndDirections) {
    Service s(sim_model(), policy(0.05));
    auto r = s.model_info();
    ASSERT_EQ(r.status, 200);
    ASSERT_EQ(r.body["inputs"].size(), sim::kNumInputs);
    const auto& p0 = sim::default_space().params()[0];
    EXPECT_EQ(r.body["inputs"][0]["name"], p0.name);
    EXPECT_EQ(r.body["inputs"][0]["lower"].get<double>(), p0.lower);
    EXPECT_EQ(r.body["inputs"][0]["upper"].get<double>(), p0.upper);
    for (const auto& out : r.body["outputs"]) {
        EXPECT_EQ(out["better"], out["name"] == "pv_generation" ? "higher" : "lower");
    }
    EXPECT_FALSE(r.body["threshold_policy"].is_null());
}

TEST(Service, BadRequestsNameTheField) {
    Service s(sim_model(), std::nullopt);
    const std::string first = sim::input_names()[0];
    const std::string last = sim::input_names()[sim::kNumInputs - 1];

    auto missing = inputs_at(midpoint());
    missing["inputs"].erase(last);
    auto r = s.predict(missing.dump());
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(r.body["error"]["field"], last);

    auto unknown = inputs_at(midpoint());
    unknown["inputs"]["roof_colour"] = 1.0;
    r = s.predict(unknown.dump());
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(r.body["error"]["field"], "roof_colour");

    auto text = inputs_at(midpoint());
    text["inputs"][first] = "wide";
    r = s.predict(text.dump());
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(r.body["error"]["field"], first);

    auto outside = inputs_at(midpoint());
    outside["inputs"][first] = sim::default_space().params()[0].upper + 1.0;
    r = s.predict(outside.dump());
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(r.body["error"]["field"], first);
    EXPECT_NE(r.body["error"]["message"].get<std::string>().find("outside"), std::string::npos);

    r = s.predict("{not json");
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(r.body["error"]["field"], "body");

    r = s.predict(R"({"x": 1})");
    EXPECT_EQ(r.status, 400);
    EXPECT_EQ(r.body["error"]["field"], "inputs");

    EXPECT_EQ(s.simulate(outside.dump()).status, 400);
}

TEST(Service, BoundaryValuesAreAccepted) {
    Service s(sim_model(), std::nullopt);
    Vector x = midpoint();
    x(0) = sim::default_space().params()[0].lower;
    x(1) = sim::default_space().params()[1].upper;
    EXPECT_EQ(s.predict(body_at(x)).status, 200);
}

TEST(Service, RouteWithoutPolicyIs503) {
    Service s(sim_model(), std::nullopt);
    auto r = s.route(body_at(midpoint()));
    EXPECT_EQ(r.status, 503);
    EXPECT_EQ(r.body["error"]["code"], "policy-not-loaded");
}

TEST(Service, RoutedPointCarriesSimulation) {
    Service s(sim_model(0.1), policy(0.05));
    auto r = s.route(body_at(midpoint()));
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_TRUE(r.body["routed"].get<bool>());
    EXPECT_FALSE(r.body["triggering_outputs"].empty());
    ASSERT_EQ(r.body["simulation"]["status"], "done");
    const auto truth = sim::simulate(sim::params_from_vector(midpoint())).values();
    for (std::size_t o = 0; o < sim::kNumOutputs; ++o) {
        EXPECT_EQ(r.body["simulation"]["outputs"][sim::output_names()[o]].get<double>(), truth[o]);
    }
}

TEST(Service, ConfidentPointIsNotRouted) {
    Service s(sim_model(0.1), policy(0.5));
    auto r = s.route(body_at(midpoint()));
    ASSERT_EQ(r.status, 200);
    EXPECT_FALSE(r.body["routed"].get<bool>());
    EXPECT_EQ(r.body["simulation"]["status"], "not-requested");
    EXPECT_FALSE(r.body["simulation"].contains("outputs"));
}

TEST(Service, SlowSimulationBecomesPendingJob) {
    ServiceConfig cfg;
    cfg.simulate_latency = std::chrono::milliseconds(300);
    Service s(sim_model(), std::nullopt, cfg);
    auto r = s.simulate(body_at(midpoint()));
    ASSERT_EQ(r.status, 202);
    ASSERT_EQ(r.body["status"], "pending");
    const std::string id = r.body["job_id"];
    EXPECT_EQ(s.job(id).body["status"], "pending");
    nlohmann::json done;
    for (int i = 0; i < 100; ++i) {
        done = s.job(id).body;
        if (done["status"] != "pending") break;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ASSERT_EQ(done["status"], "done");
    const auto truth = sim::simulate(sim::params_from_vector(midpoint())).values();
    EXPECT_EQ(done["outputs"][sim::output_names()[0]].get<double>(), truth[0]);
}

TEST(Service, RoutedSlowSimulationIsPending) {
    ServiceConfig cfg;
    cfg.simulate_latency = std::chrono::milliseconds(300);
    Service s(sim_model(0.1), policy(0.05), cfg);
    auto r = s.route(body_at(midpoint()));
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body["simulation"]["status"], "pending");
    EXPECT_TRUE(r.body["simulation"].contains("job_id"));
}

TEST(Service, UnknownJobIs404) {
    Service s(sim_model(), std::nullopt);
    EXPECT_EQ(s.job("job-999").status, 404);
}

TEST(Service, FixedSeedGivesIdenticalResponses) {
    const Dataset& d = fit_data();
    bnn::Architecture arch;
    arch.n_inputs = d.X.cols();
    arch.n_outputs = d.Y.cols();
    arch.hidden_layers = {16};
    arch.dropout_p = 0.2;
    auto model = std::make_shared<bnn::BnnModel>(arch, 3);
    bnn::TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 16;
    model->train(d, tc);

    ServiceConfig fixed;
    fixed.fixed_seed = 11;
    Service s(model, std::nullopt, fixed);
    const auto a = s.predict(body_at(midpoint()));
    const auto b = s.predict(body_at(midpoint()));
    ASSERT_EQ(a.status, 200) << a.body.dump();
    EXPECT_EQ(a.body.dump(), b.body.dump());
    EXPECT_EQ(a.body["mc_samples"], 30);

    Service fresh(model, std::nullopt);
    EXPECT_NE(fresh.predict(body_at(midpoint())).body.dump(), fresh.predict(body_at(midpoint())).body.dump());
}

TEST(Service, ModelWithoutSimulatorBoundsIsRejected) {
    auto model = std::make_shared<ConstantSurrogate>(Vector::Ones(2), Vector::Ones(2));
    try {
        Service s(model, std::nullopt);
        FAIL() << "expected InvalidSpace";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidSpace);
    }
}

TEST(Service, PolicyMustMatchOutputs) {
    auto p = policy(0.1);
    p.thresholds = Vector::Constant(2, 0.1);
    EXPECT_THROW(Service(sim_model(), p), Error);
}

TEST(ServiceHttp, EndpointsOverTheWire) {
    Service s(sim_model(0.1), policy(0.05));
    httplib::Server server;
    s.mount(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto health = client.Get("/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    EXPECT_EQ(health->get_header_value("Content-Type"), "application/json");
    EXPECT_EQ(health->get_header_value("Access-Control-Allow-Origin"), "*");

    auto predict = client.Post("/predict", body_at(midpoint()), "application/json");
    ASSERT_TRUE(predict);
    EXPECT_EQ(predict->status, 200);
    EXPECT_EQ(nlohmann::json::parse(predict->body)["outputs"].size(), sim::kNumOutputs);

    auto bad = client.Post("/predict", "{}", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);

    auto routed = client.Post("/route", body_at(midpoint()), "application/json");
    ASSERT_TRUE(routed);
    EXPECT_EQ(nlohmann::json::parse(routed->body)["simulation"]["status"], "done");

    auto model = client.Get("/model");
    ASSERT_TRUE(model);
    EXPECT_EQ(model->status, 200);

    auto job = client.Get("/simulate/job-42");
    ASSERT_TRUE(job);
    EXPECT_EQ(job->status, 404);

    auto preflight = client.Options("/predict");
    ASSERT_TRUE(preflight);
    EXPECT_EQ(preflight->status, 204);
    EXPECT_NE(preflight->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);

    server.stop();
    listener.join();
}
