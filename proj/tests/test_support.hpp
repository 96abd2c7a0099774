#pragma once

#include <optional>
#include <string>
#include <vector>

#include "surrogate/predictive.hpp"
#include "surrogate/simulator.hpp"
#include "surrogate/transforms.hpp"

namespace surrogate::testing_support {

// The simulator itself, exposed as a surrogate whose std is `rel_sd` times |mean|.
class SimulatorSurrogate final : public Surrogate {
public:
    explicit SimulatorSurrogate(const Dataset& fit, double rel_sd = 0.0)
        : transforms_(fit_pipeline(fit)), inputs_(fit.input_names), outputs_(fit.output_names), rel_sd_(rel_sd) {}
    std::string kind() const override { return "simulator"; }
    Index n_inputs() const override { return static_cast<Index>(inputs_.size()); }
    Index n_outputs() const override { return static_cast<Index>(outputs_.size()); }
    const TransformPipeline& transforms() const override { return transforms_; }
    const std::vector<std::string>& input_names() const override { return inputs_; }
    const std::vector<std::string>& output_names() const override { return outputs_; }
    const std::optional<DesignSpace>& space() const override { return space_; }
    std::vector<PredictiveDistribution> predict_batch(const Matrix& X, const PredictOptions&) const override {
        const Matrix Y = sim::simulate_batch(X);
        std::vector<PredictiveDistribution> out;
        for (Index i = 0; i < X.rows(); ++i) {
            PredictiveDistribution p;
            p.mean = Y.row(i).transpose();
            p.variance = (rel_sd_ * p.mean).array().square();
            p.latent_mean.resize(Y.cols());
            for (Index o = 0; o < Y.cols(); ++o) p.latent_mean(o) = transforms_.output.to_latent(o, Y(i, o));
            p.latent_variance = Vector::Zero(Y.cols());
            p.range_clipped.assign(static_cast<std::size_t>(Y.cols()), false);
            out.push_back(p);
        }
        return out;
    }
    nlohmann::json describe() const override { return {{"kind", kind()}}; }
    nlohmann::json to_json() const override { return describe(); }

private:
    TransformPipeline transforms_;
    std::vector<std::string> inputs_, outputs_;
    double rel_sd_;
    std::optional<DesignSpace> space_;
};

// Returns fixed per-output means and variances regardless of the input.
class ConstantSurrogate final : public Surrogate {
public:
    ConstantSurrogate(Vector mean, Vector variance, Index n_inputs = 2)
        : mean_(std::move(mean)), variance_(std::move(variance)) {
        for (Index j = 0; j < n_inputs; ++j) inputs_.push_back("x" + std::to_string(j));
        for (Index o = 0; o < mean_.size(); ++o) outputs_.push_back("y" + std::to_string(o));
        transforms_.input = {Vector::Zero(n_inputs), Vector::Ones(n_inputs)};
        transforms_.output.lambda = Vector::Ones(mean_.size());
        transforms_.output.shift = Vector::Zero(mean_.size());
        transforms_.output.post_standardize = {Vector::Zero(mean_.size()), Vector::Ones(mean_.size())};
    }
    std::string kind() const override { return "constant"; }
    Index n_inputs() const override { return static_cast<Index>(inputs_.size()); }
    Index n_outputs() const override { return mean_.size(); }
    const TransformPipeline& transforms() const override { return transforms_; }
    const std::vector<std::string>& input_names() const override { return inputs_; }
    const std::vector<std::string>& output_names() const override { return outputs_; }
    const std::optional<DesignSpace>& space() const override { return space_; }
    std::vector<PredictiveDistribution> predict_batch(const Matrix& X, const PredictOptions& opts) const override {
        check_inputs(X);
        std::vector<PredictiveDistribution> out;
        for (Index i = 0; i < X.rows(); ++i) {
            PredictiveDistribution p;
            p.mean = mean_;
            p.variance = variance_;
            p.latent_mean = mean_.array() - 1.0;
            p.latent_variance = variance_;
            p.mc_samples_used = opts.mc_samples;
            p.range_clipped.assign(static_cast<std::size_t>(mean_.size()), false);
            out.push_back(p);
        }
        return out;
    }
    nlohmann::json describe() const override { return {{"kind", kind()}}; }
    nlohmann::json to_json() const override { return describe(); }

private:
    Vector mean_, variance_;
    TransformPipeline transforms_;
    std::vector<std::string> inputs_, outputs_;
    std::optional<DesignSpace> space_;
};

}  // namespace surrogate::testing_support
