#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "surrogate/adam.hpp"
#include "surrogate/kernel.hpp"
#include "surrogate/predictive.hpp"

namespace surrogate::svgp {

inline constexpr double kJitter = 1e-8;
inline constexpr double kMaxJitter = 1e-4;

/// Variational sparse GP for one output (unwhitened q(u) = N(m_u, L L^T)).
struct OutputBlock {
    Kernel kernel;
    Matrix inducing;           // Z, m x d
    Vector q_mean;             // m_u
    Matrix q_sqrt;             // lower-triangular factor of S_u, positive diagonal
    double noise_variance = 1e-5;

    [[nodiscard]] Index num_inducing() const noexcept { return inducing.rows(); }

    /// Free parameters: [log s2, log l (d), Z (row-major), m_u, L (lower, row-major; diagonal as log)].
    [[nodiscard]] Vector pack() const;
    void unpack(const Vector& theta);
    [[nodiscard]] Index packed_size() const;

    [[nodiscard]] nlohmann::json to_json() const;
    static OutputBlock from_json(const nlohmann::json& j);
};

/// Cholesky factor of K_zz + jitter I, escalating jitter x10 up to 1e-4.
/// Throws IllConditioned when that still fails.
Eigen::LLT<Matrix> stable_cholesky(const Matrix& K, double* jitter_used = nullptr);

/// Minibatch ELBO: (N / b) sum_i E_q[log N(y_i | f_i, noise)] - KL[q(u) || p(u)].
/// X is (b x d) standardized, y is (b) in the latent output space.
double elbo(const OutputBlock& block, const Matrix& X, const Vector& y, Index n_total);

/// ELBO and its gradient in packed coordinates.
double elbo_and_gradient(const OutputBlock& block, const Matrix& X, const Vector& y, Index n_total, Vector& grad);

/// KL[q(u) || p(u)] alone.
double kl_divergence(const OutputBlock& block);

/// Latent predictive moments (epistemic) at the rows of X.
void predict_latent(const OutputBlock& block, const Matrix& X, Vector& mean, Vector& variance);

enum class InducingInit { RandomSubset, KMeans };

/// m rows chosen from X (random subset) or k-means centroids, seeded.
Matrix init_inducing(const Matrix& X, Index m, InducingInit strategy, std::uint64_t seed);

struct TrainConfig {
    int steps = 5000;
    Index batch_size = 100;
    Index num_inducing = 100;
    KernelKind kernel = KernelKind::Matern32;
    InducingInit inducing_init = InducingInit::RandomSubset;
    AdamConfig adam{0.01, 0.9, 0.999, 1e-8};
    /// Noise variance as a fraction of the mean absolute latent output.
    double noise_fraction = 1e-5;
    std::uint64_t seed = 0;
    int log_every = 0;
};

/// Fresh block: kernel s2 = 1, lengthscales sqrt(d), q(u) = p(u).
OutputBlock init_block(const Matrix& Xs, const Vector& ys, const TrainConfig& config, std::uint64_t seed);

/// Adam on -ELBO over every packed parameter; returns the per-step ELBO log.
std::vector<double> train_block(OutputBlock& block, const Matrix& Xs, const Vector& ys, const TrainConfig& config,
                                std::uint64_t seed);

/// One independent SVGP per output.
class SvgpModel final : public Surrogate {
public:
    SvgpModel() = default;

    [[nodiscard]] std::string kind() const override { return "svgp"; }
    [[nodiscard]] Index n_inputs() const override { return transforms_.input.size(); }
    [[nodiscard]] Index n_outputs() const override { return static_cast<Index>(blocks_.size()); }
    [[nodiscard]] const TransformPipeline& transforms() const override { return transforms_; }
    [[nodiscard]] const std::vector<std::string>& input_names() const override { return input_names_; }
    [[nodiscard]] const std::vector<std::string>& output_names() const override { return output_names_; }
    [[nodiscard]] const std::optional<DesignSpace>& space() const override { return space_; }

    [[nodiscard]] const std::vector<OutputBlock>& blocks() const noexcept { return blocks_; }
    std::vector<OutputBlock>& blocks() noexcept { return blocks_; }
    [[nodiscard]] const std::vector<std::vector<double>>& training_log() const noexcept { return log_; }

    /// Fits transforms on data, initializes and trains one block per output.
    void train(const Dataset& data, const TrainConfig& config);

    void set_transforms(TransformPipeline t, std::vector<std::string> inputs, std::vector<std::string> outputs,
                        std::optional<DesignSpace> space);

    [[nodiscard]] std::vector<PredictiveDistribution> predict_batch(const Matrix& X,
                                                                    const PredictOptions& opts) const override;

    [[nodiscard]] nlohmann::json describe() const override;
    [[nodiscard]] nlohmann::json to_json() const override;
    static SvgpModel from_json(const nlohmann::json& j);

private:
    std::vector<OutputBlock> blocks_;
    TransformPipeline transforms_;
    std::vector<std::string> input_names_;
    std::vector<std::string> output_names_;
    std::optional<DesignSpace> space_;
    std::vector<std::vector<double>> log_;
    TrainConfig config_{};
};

}  // namespace surrogate::svgp
