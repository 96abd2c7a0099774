#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "surrogate/common.hpp"
#include "surrogate/design_space.hpp"
#include "surrogate/transforms.hpp"

namespace surrogate {

/// Per-output Gaussian prediction. mean/variance are in original output units;
/// the latent moments live in the standardized transformed space the model works in.
struct PredictiveDistribution {
    Vector mean;
    Vector variance;
    Vector latent_mean;
    Vector latent_variance;
    int mc_samples_used = 0;
    std::vector<bool> range_clipped;

    [[nodiscard]] Vector std_dev() const { return variance.cwiseMax(0.0).cwiseSqrt(); }
    [[nodiscard]] Index size() const noexcept { return mean.size(); }
};

/// Builds a distribution from latent moments via the Box-Cox pushforward.
PredictiveDistribution make_predictive(const BoxCoxParams& transform, Vector latent_mean, Vector latent_variance,
                                       int mc_samples);

struct PredictOptions {
    int mc_samples = 30;
    std::uint64_t seed = 0;
    /// SVGP only: add the fixed observation noise to the latent variance.
    bool include_noise = false;
};

/// Common surface of the trained surrogates.
class Surrogate {
public:
    virtual ~Surrogate() = default;

    [[nodiscard]] virtual std::string kind() const = 0;
    [[nodiscard]] virtual Index n_inputs() const = 0;
    [[nodiscard]] virtual Index n_outputs() const = 0;
    [[nodiscard]] virtual const TransformPipeline& transforms() const = 0;
    [[nodiscard]] virtual const std::vector<std::string>& input_names() const = 0;
    [[nodiscard]] virtual const std::vector<std::string>& output_names() const = 0;
    [[nodiscard]] virtual const std::optional<DesignSpace>& space() const = 0;

    /// Predictions for each row of X (original units).
    [[nodiscard]] virtual std::vector<PredictiveDistribution> predict_batch(const Matrix& X,
                                                                            const PredictOptions& opts) const = 0;
    [[nodiscard]] PredictiveDistribution predict(const Vector& x, const PredictOptions& opts) const;

    /// Architecture summary for service and reports.
    [[nodiscard]] virtual nlohmann::json describe() const = 0;
    /// Complete artifact (architecture, parameters, transforms, log).
    [[nodiscard]] virtual nlohmann::json to_json() const = 0;

    void save(const std::filesystem::path& path) const;

protected:
    /// Throws DimensionMismatch when X has the wrong width.
    void check_inputs(const Matrix& X) const;
};

/// Loads a BNN or SVGP artifact by its "kind" field.
std::unique_ptr<Surrogate> load_model(const std::filesystem::path& path);
std::unique_ptr<Surrogate> model_from_json(const nlohmann::json& j);

inline constexpr const char* kArtifactFormat = "surrogate-model";
inline constexpr int kArtifactVersion = 1;

}  // namespace surrogate
