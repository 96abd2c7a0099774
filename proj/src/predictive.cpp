#include "surrogate/predictive.hpp"

#include <fstream>

#include "surrogate/bnn.hpp"
#include "surrogate/error.hpp"
#include "surrogate/svgp.hpp"

namespace surrogate {

PredictiveDistribution make_predictive(const BoxCoxParams& transform, Vector latent_mean, Vector latent_variance,
                                       int mc_samples) {
    latent_variance = latent_variance.cwiseMax(0.0);
    auto pushed = pushforward_gaussian(transform, latent_mean, latent_variance);
    return {std::move(pushed.mean),    std::move(pushed.variance), std::move(latent_mean),
            std::move(latent_variance), mc_samples,                 std::move(pushed.range_clipped)};
}

PredictiveDistribution Surrogate::predict(const Vector& x, const PredictOptions& opts) const {
    return predict_batch(Matrix(x.transpose()), opts).front();
}

void Surrogate::check_inputs(const Matrix& X) const {
    if (X.cols() != n_inputs()) {
        fail(ErrorCode::DimensionMismatch, "model takes " + std::to_string(n_inputs()) + " inputs, got " +
                                               std::to_string(X.cols()));
    }
}

void Surrogate::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << to_json().dump() << '\n';
}

std::unique_ptr<Surrogate> model_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != kArtifactFormat) fail(ErrorCode::Format, "not a surrogate model artifact");
    const auto kind = j.value("kind", std::string{});
    if (kind == "bnn") return std::make_unique<bnn::BnnModel>(bnn::BnnModel::from_json(j));
    if (kind == "svgp") return std::make_unique<svgp::SvgpModel>(svgp::SvgpModel::from_json(j));
    fail(ErrorCode::Format, "unknown model kind '" + kind + "'");
}

std::unique_ptr<Surrogate> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorCode::Format, path.string() + ": " + ex.what());
    }
    return model_from_json(j);
}

}  // namespace surrogate
