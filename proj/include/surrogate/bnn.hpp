#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "surrogate/adam.hpp"
#include "surrogate/predictive.hpp"

namespace surrogate::bnn {

struct Architecture {
    Index n_inputs = 0;
    Index n_outputs = 0;
    std::vector<Index> hidden_layers{512, 512};
    double leaky_slope = 0.01;
    double dropout_p = 0.05;
    /// Also drop input features. Off: dropping inputs of a low-dimensional regression loses information.
    bool dropout_inputs = false;

    /// Throws InvalidArgument on an empty hidden stack, non-positive widths or p outside (0, 1).
    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static Architecture from_json(const nlohmann::json& j);
};

struct TrainConfig {
    int epochs = 1200;
    Index batch_size = 128;
    AdamConfig adam{};
    std::uint64_t seed = 0;
    /// Epoch-mean losses are reported here every `log_every` epochs (0: silent).
    int log_every = 0;
};

/// Per-layer parameters; layer l maps width[l] -> width[l+1].
struct Parameters {
    std::vector<Matrix> weights;  // out x in
    std::vector<Vector> biases;

    [[nodiscard]] double squared_norm() const;
    [[nodiscard]] Index count() const;
};

/// Dropout masks for one pass over a batch: one (width x batch) 0/1 matrix per
/// dropped layer (input layer first when enabled, then every hidden layer).
using Masks = std::vector<Matrix>;

/// Forward pass in the standardized spaces; x is a column vector.
/// Without masks the pass is deterministic and unscaled.
Vector forward(const Architecture& arch, const Parameters& params, const Vector& x,
               const std::optional<Masks>& masks = std::nullopt);

/// Batched forward pass, X is (n_inputs x batch).
Matrix forward_batch(const Architecture& arch, const Parameters& params, const Matrix& X,
                     const std::optional<Masks>& masks = std::nullopt);

/// Draws Bernoulli(1 - p) masks for a batch of the given size.
Masks sample_masks(const Architecture& arch, Index batch, Rng& rng);

/// Dropout objective on a batch with given masks:
///   (1/B) sum_i 0.5 ||y_i - f(x_i)||^2 + (1 - p) / (2N) ||theta||^2
/// X is (n_inputs x B), Y is (n_outputs x B); N is the full training-set size.
double loss(const Architecture& arch, const Parameters& params, const Matrix& X, const Matrix& Y, const Masks& masks,
            Index n_train);

/// Loss and its gradient with respect to every weight and bias.
double loss_and_gradient(const Architecture& arch, const Parameters& params, const Matrix& X, const Matrix& Y,
                         const Masks& masks, Index n_train, Parameters& grad);

/// Glorot-uniform weights, zero biases.
Parameters init_parameters(const Architecture& arch, std::uint64_t seed);

/// MC-dropout network surrogate.
class BnnModel final : public Surrogate {
public:
    BnnModel(Architecture arch, std::uint64_t seed);

    [[nodiscard]] std::string kind() const override { return "bnn"; }
    [[nodiscard]] Index n_inputs() const override { return arch_.n_inputs; }
    [[nodiscard]] Index n_outputs() const override { return arch_.n_outputs; }
    [[nodiscard]] const TransformPipeline& transforms() const override { return transforms_; }
    [[nodiscard]] const std::vector<std::string>& input_names() const override { return input_names_; }
    [[nodiscard]] const std::vector<std::string>& output_names() const override { return output_names_; }
    [[nodiscard]] const std::optional<DesignSpace>& space() const override { return space_; }

    [[nodiscard]] const Architecture& architecture() const noexcept { return arch_; }
    [[nodiscard]] const Parameters& parameters() const noexcept { return params_; }
    Parameters& parameters() noexcept { return params_; }
    [[nodiscard]] const std::vector<double>& training_log() const noexcept { return log_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

    /// Fits the transform pipeline on `data` then trains.
    void train(const Dataset& data, const TrainConfig& config);

    /// Trains on already-transformed data (Xs: n x d standardized, Ys: n x k latent).
    void train_transformed(const Matrix& Xs, const Matrix& Ys, const TrainConfig& config);

    void set_transforms(TransformPipeline t, std::vector<std::string> inputs, std::vector<std::string> outputs,
                        std::optional<DesignSpace> space);

    /// Latent MC moments: E(y) = mean of passes, Var(y) = mean of squares - E(y)^2, floored at 0.
    /// Xs is (n x d) standardized; returns (mean, variance), each n x k.
    [[nodiscard]] std::pair<Matrix, Matrix> mc_moments(const Matrix& Xs, int passes, std::uint64_t seed) const;

    /// MC-dropout prediction; needs opts.mc_samples >= 2.
    [[nodiscard]] std::vector<PredictiveDistribution> predict_batch(const Matrix& X,
                                                                    const PredictOptions& opts) const override;

    [[nodiscard]] nlohmann::json describe() const override;
    [[nodiscard]] nlohmann::json to_json() const override;
    static BnnModel from_json(const nlohmann::json& j);

private:
    Architecture arch_;
    Parameters params_;
    std::uint64_t seed_;
    TransformPipeline transforms_;
    std::vector<std::string> input_names_;
    std::vector<std::string> output_names_;
    std::optional<DesignSpace> space_;
    std::vector<double> log_;
    TrainConfig last_config_{};
};

/// One row of the cross-validation table.
struct CvResult {
    Architecture arch;
    double score = 0.0;                // mean over outputs of out-of-fold R2 (latent space)
    std::vector<double> output_r2;     // per output
};

struct CvSummary {
    Architecture best;
    std::vector<CvResult> table;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// The grid analysed for the architecture choice: 1-3 layers, 256/512/1024 neurons, 5/10/20 % dropout.
std::vector<Architecture> default_grid(Index n_inputs, Index n_outputs);

/// k-fold partition of n rows (seeded); folds are disjoint and cover every row.
std::vector<std::vector<Index>> kfold_indices(Index n, int k, std::uint64_t seed);

/// k-fold cross-validation; the transform pipeline is fitted once on the full dataset.
CvSummary cross_validate(const Dataset& data, const std::vector<Architecture>& grid, int k, std::uint64_t seed,
                         const TrainConfig& config, int mc_samples = 30);

}  // namespace surrogate::bnn
