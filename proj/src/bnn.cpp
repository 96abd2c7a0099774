#include "surrogate/bnn.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "surrogate/error.hpp"

namespace surrogate::bnn {

namespace {

constexpr Index kPredictChunk = 256;

struct ForwardCache {
    std::vector<Matrix> inputs;  // input of every affine layer (after dropout)
    std::vector<Matrix> pre;     // pre-activations of hidden layers
};

double keep_scale(const Architecture& arch) { return 1.0 / (1.0 - arch.dropout_p); }

std::vector<Index> layer_widths(const Architecture& arch) {
    std::vector<Index> w{arch.n_inputs};
    w.insert(w.end(), arch.hidden_layers.begin(), arch.hidden_layers.end());
    w.push_back(arch.n_outputs);
    return w;
}

std::size_t mask_count(const Architecture& arch) {
    return arch.hidden_layers.size() + (arch.dropout_inputs ? 1 : 0);
}

void check_masks(const Architecture& arch, const Masks& masks, Index batch) {
    if (masks.size() != mask_count(arch)) {
        fail(ErrorCode::DimensionMismatch, "expected " + std::to_string(mask_count(arch)) + " dropout masks, got " +
                                               std::to_string(masks.size()));
    }
    std::size_t m = 0;
    if (arch.dropout_inputs) {
        if (masks[m].rows() != arch.n_inputs || masks[m].cols() != batch)
            fail(ErrorCode::DimensionMismatch, "input dropout mask has the wrong shape");
        ++m;
    }
    for (Index w : arch.hidden_layers) {
        if (masks[m].rows() != w || masks[m].cols() != batch)
            fail(ErrorCode::DimensionMismatch, "hidden dropout mask " + std::to_string(m) + " has the wrong shape");
        ++m;
    }
}

Matrix run_forward(const Architecture& arch, const Parameters& params, const Matrix& X, const Masks* masks,
                   ForwardCache* cache) {
    if (X.rows() != arch.n_inputs) {
        fail(ErrorCode::DimensionMismatch, "network takes " + std::to_string(arch.n_inputs) + " inputs, got " +
                                               std::to_string(X.rows()));
    }
    if (masks) check_masks(arch, *masks, X.cols());
    const double scale = keep_scale(arch);
    const double slope = arch.leaky_slope;
    std::size_t m = 0;

    Matrix a = X;
    if (masks && arch.dropout_inputs) a = a.cwiseProduct((*masks)[m++]) * scale;

    const std::size_t hidden = arch.hidden_layers.size();
    for (std::size_t l = 0; l < hidden; ++l) {
        Matrix z = params.weights[l] * a;
        z.colwise() += params.biases[l];
        if (cache) {
            cache->inputs.push_back(std::move(a));
        }
        a = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
        if (masks) a = a.cwiseProduct((*masks)[m++]) * scale;
        if (cache) cache->pre.push_back(std::move(z));
    }
    Matrix out = params.weights[hidden] * a;
    out.colwise() += params.biases[hidden];
    if (cache) cache->inputs.push_back(std::move(a));
    return out;
}

double decay_coefficient(const Architecture& arch, Index n_train) {
    return (1.0 - arch.dropout_p) / (2.0 * static_cast<double>(n_train));
}

}  // namespace

void Architecture::validate() const {
    if (n_inputs < 1 || n_outputs < 1) fail(ErrorCode::InvalidArgument, "network needs at least one input and output");
    if (hidden_layers.empty()) fail(ErrorCode::InvalidArgument, "network needs at least one hidden layer");
    for (Index w : hidden_layers) {
        if (w < 1) fail(ErrorCode::InvalidArgument, "hidden layer widths must be positive");
    }
    if (!(dropout_p > 0.0 && dropout_p < 1.0)) fail(ErrorCode::InvalidArgument, "dropout rate must lie in (0, 1)");
    if (!(leaky_slope >= 0.0)) fail(ErrorCode::InvalidArgument, "leaky-ReLU slope must be non-negative");
}

nlohmann::json Architecture::to_json() const {
    return {{"n_inputs", n_inputs},         {"n_outputs", n_outputs},   {"hidden_layers", hidden_layers},
            {"leaky_slope", leaky_slope},   {"dropout_p", dropout_p},   {"dropout_inputs", dropout_inputs}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
    Architecture a;
    a.n_inputs = j.at("n_inputs").get<Index>();
    a.n_outputs = j.at("n_outputs").get<Index>();
    a.hidden_layers = j.at("hidden_layers").get<std::vector<Index>>();
    a.leaky_slope = j.at("leaky_slope").get<double>();
    a.dropout_p = j.at("dropout_p").get<double>();
    a.dropout_inputs = j.value("dropout_inputs", false);
    a.validate();
    return a;
}

double Parameters::squared_norm() const {
    double s = 0.0;
    for (const auto& w : weights) s += w.squaredNorm();
    for (const auto& b : biases) s += b.squaredNorm();
    return s;
}

Index Parameters::count() const {
    Index n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

Parameters init_parameters(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(seed);
    const auto widths = layer_widths(arch);
    Parameters p;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const Index fan_in = widths[l], fan_out = widths[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(fan_out, fan_in);
        for (Index c = 0; c < fan_in; ++c) {
            for (Index r = 0; r < fan_out; ++r) w(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
        }
        p.weights.push_back(std::move(w));
        p.biases.push_back(Vector::Zero(fan_out));
    }
    return p;
}

Vector forward(const Architecture& arch, const Parameters& params, const Vector& x, const std::optional<Masks>& masks) {
    return forward_batch(arch, params, Matrix(x), masks).col(0);
}

Matrix forward_batch(const Architecture& arch, const Parameters& params, const Matrix& X,
                     const std::optional<Masks>& masks) {
    return run_forward(arch, params, X, masks ? &*masks : nullptr, nullptr);
}

Masks sample_masks(const Architecture& arch, Index batch, Rng& rng) {
    Masks masks;
    masks.reserve(mask_count(arch));
    const double p = arch.dropout_p;
    auto draw = [&](Index rows) {
        Matrix m(rows, batch);
        double* data = m.data();
        for (Index i = 0; i < m.size(); ++i) data[i] = rng.uniform() >= p ? 1.0 : 0.0;
        masks.push_back(std::move(m));
    };
    if (arch.dropout_inputs) draw(arch.n_inputs);
    for (Index w : arch.hidden_layers) draw(w);
    return masks;
}

double loss(const Architecture& arch, const Parameters& params, const Matrix& X, const Matrix& Y, const Masks& masks,
            Index n_train) {
    if (X.cols() == 0) fail(ErrorCode::InvalidArgument, "loss on an empty batch");
    if (Y.rows() != arch.n_outputs || Y.cols() != X.cols()) fail(ErrorCode::DimensionMismatch, "target batch shape");
    const Matrix f = run_forward(arch, params, X, &masks, nullptr);
    const double data = 0.5 * (f - Y).squaredNorm() / static_cast<double>(X.cols());
    return data + decay_coefficient(arch, n_train) * params.squared_norm();
}

double loss_and_gradient(const Architecture& arch, const Parameters& params, const Matrix& X, const Matrix& Y,
                         const Masks& masks, Index n_train, Parameters& grad) {
    if (X.cols() == 0) fail(ErrorCode::InvalidArgument, "loss on an empty batch");
    if (Y.rows() != arch.n_outputs || Y.cols() != X.cols()) fail(ErrorCode::DimensionMismatch, "target batch shape");
    ForwardCache cache;
    const Matrix f = run_forward(arch, params, X, &masks, &cache);
    const double inv_b = 1.0 / static_cast<double>(X.cols());
    const double decay = decay_coefficient(arch, n_train);
    const Matrix resid = f - Y;
    const double value = 0.5 * resid.squaredNorm() * inv_b + decay * params.squared_norm();

    const std::size_t hidden = arch.hidden_layers.size();
    grad.weights.resize(hidden + 1);
    grad.biases.resize(hidden + 1);
    const double scale = keep_scale(arch);
    const double slope = arch.leaky_slope;
    const std::size_t mask_offset = arch.dropout_inputs ? 1 : 0;

    Matrix delta = resid * inv_b;
    for (std::size_t l = hidden + 1; l-- > 0;) {
        grad.weights[l].noalias() = delta * cache.inputs[l].transpose();
        grad.weights[l] += 2.0 * decay * params.weights[l];
        grad.biases[l] = delta.rowwise().sum() + 2.0 * decay * params.biases[l];
        if (l == 0) break;
        Matrix back = params.weights[l].transpose() * delta;
        const Matrix& z = cache.pre[l - 1];
        const Matrix& mask = masks[mask_offset + l - 1];
        delta = back.cwiseProduct(mask) * scale;
        delta.array() *= z.array().unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    }
    return value;
}

BnnModel::BnnModel(Architecture arch, std::uint64_t seed)
    : arch_(std::move(arch)), params_(init_parameters(arch_, seed)), seed_(seed) {}

void BnnModel::set_transforms(TransformPipeline t, std::vector<std::string> inputs, std::vector<std::string> outputs,
                              std::optional<DesignSpace> space) {
    if (t.input.size() != arch_.n_inputs || t.output.size() != arch_.n_outputs) {
        fail(ErrorCode::DimensionMismatch, "transform pipeline does not match the network");
    }
    transforms_ = std::move(t);
    input_names_ = std::move(inputs);
    output_names_ = std::move(outputs);
    space_ = std::move(space);
}

void BnnModel::train(const Dataset& data, const TrainConfig& config) {
    data.validate();
    if (data.n_inputs() != arch_.n_inputs || data.n_outputs() != arch_.n_outputs) {
        fail(ErrorCode::DimensionMismatch, "dataset shape does not match the network");
    }
    set_transforms(fit_pipeline(data), data.input_names, data.output_names, data.space);
    train_transformed(apply_standardize(transforms_.input, data.X), apply_boxcox(transforms_.output, data.Y), config);
}

void BnnModel::train_transformed(const Matrix& Xs, const Matrix& Ys, const TrainConfig& config) {
    if (config.epochs < 1) fail(ErrorCode::InvalidArgument, "epochs must be at least 1");
    if (config.batch_size < 1) fail(ErrorCode::InvalidArgument, "batch size must be at least 1");
    if (Xs.rows() != Ys.rows() || Xs.rows() == 0) fail(ErrorCode::InvalidArgument, "training data is empty or ragged");
    if (Xs.cols() != arch_.n_inputs || Ys.cols() != arch_.n_outputs) {
        fail(ErrorCode::DimensionMismatch, "training data shape does not match the network");
    }
    last_config_ = config;
    const Index n = Xs.rows();
    const Matrix xt = Xs.transpose();
    const Matrix yt = Ys.transpose();
    Rng rng(derive_seed(config.seed, 0x7472));
    Adam adam(config.adam);
    Parameters grad;
    const std::size_t layers = params_.weights.size();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto perm = rng.permutation(n);
        double epoch_loss = 0.0;
        Index batch_no = 0;
        for (Index start = 0; start < n; start += config.batch_size, ++batch_no) {
            const Index b = std::min(config.batch_size, n - start);
            Matrix xb(arch_.n_inputs, b), yb(arch_.n_outputs, b);
            for (Index i = 0; i < b; ++i) {
                xb.col(i) = xt.col(perm[static_cast<std::size_t>(start + i)]);
                yb.col(i) = yt.col(perm[static_cast<std::size_t>(start + i)]);
            }
            const Masks masks = sample_masks(arch_, b, rng);
            const double value = loss_and_gradient(arch_, params_, xb, yb, masks, n, grad);
            if (!std::isfinite(value)) {
                double gnorm = 0.0;
                for (std::size_t l = 0; l < layers; ++l) gnorm += grad.weights[l].squaredNorm() + grad.biases[l].squaredNorm();
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << ", batch " << batch_no << ", gradient norm "
                    << std::sqrt(gnorm);
                fail(ErrorCode::NumericalFailure, msg.str());
            }
            epoch_loss += value * static_cast<double>(b);
            adam.begin_step();
            for (std::size_t l = 0; l < layers; ++l) {
                adam.update(2 * l, params_.weights[l], grad.weights[l]);
                adam.update(2 * l + 1, params_.biases[l], grad.biases[l]);
            }
        }
        log_.push_back(epoch_loss / static_cast<double>(n));
        if (config.log_every > 0 && (epoch + 1) % config.log_every == 0) {
            std::cerr << "bnn epoch " << epoch + 1 << "/" << config.epochs << " loss " << log_.back() << '\n';
        }
    }
}

std::pair<Matrix, Matrix> BnnModel::mc_moments(const Matrix& Xs, int passes, std::uint64_t seed) const {
    if (passes < 2) fail(ErrorCode::InvalidArgument, "MC prediction needs at least 2 passes");
    if (Xs.cols() != arch_.n_inputs) fail(ErrorCode::DimensionMismatch, "input width does not match the network");
    const Index n = Xs.rows();
    Matrix mean(n, arch_.n_outputs), var(n, arch_.n_outputs);
    Rng rng(seed);
    for (Index start = 0; start < n; start += kPredictChunk) {
        const Index b = std::min(kPredictChunk, n - start);
        const Matrix xb = Xs.middleRows(start, b).transpose();
        Matrix m = Matrix::Zero(arch_.n_outputs, b);
        Matrix m2 = Matrix::Zero(arch_.n_outputs, b);
        for (int t = 0; t < passes; ++t) {
            const Masks masks = sample_masks(arch_, b, rng);
            const Matrix f = run_forward(arch_, params_, xb, &masks, nullptr);
            const Matrix delta = f - m;
            m += delta / static_cast<double>(t + 1);
            m2 += delta.cwiseProduct(f - m);
        }
        const Matrix v = (m2 / passes).cwiseMax(0.0);
        mean.middleRows(start, b) = m.transpose();
        var.middleRows(start, b) = v.transpose();
    }
    return {mean, var};
}

std::vector<PredictiveDistribution> BnnModel::predict_batch(const Matrix& X, const PredictOptions& opts) const {
    check_inputs(X);
    const Matrix xs = apply_standardize(transforms_.input, X);
    const auto [mean, var] = mc_moments(xs, opts.mc_samples, opts.seed);
    std::vector<PredictiveDistribution> out;
    out.reserve(static_cast<std::size_t>(X.rows()));
    for (Index i = 0; i < X.rows(); ++i) {
        out.push_back(make_predictive(transforms_.output, mean.row(i).transpose(), var.row(i).transpose(),
                                      opts.mc_samples));
    }
    return out;
}

nlohmann::json BnnModel::describe() const {
    return {{"kind", kind()},
            {"architecture", arch_.to_json()},
            {"parameters", params_.count()},
            {"epochs_trained", log_.size()},
            {"inputs", input_names_},
            {"outputs", output_names_}};
}

nlohmann::json BnnModel::to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < params_.weights.size(); ++l) {
        layers.push_back({{"weights", matrix_to_json(params_.weights[l])}, {"bias", vector_to_json(params_.biases[l])}});
    }
    nlohmann::json j = {{"format", kArtifactFormat},
                        {"version", kArtifactVersion},
                        {"kind", kind()},
                        {"seed", seed_},
                        {"architecture", arch_.to_json()},
                        {"layers", layers},
                        {"transforms", transforms_.to_json()},
                        {"input_names", input_names_},
                        {"output_names", output_names_},
                        {"training",
                         {{"epochs", last_config_.epochs},
                          {"batch_size", last_config_.batch_size},
                          {"step_size", last_config_.adam.step_size},
                          {"seed", last_config_.seed}}},
                        {"training_log", log_}};
    j["design_space"] = space_ ? space_->to_json() : nlohmann::json(nullptr);
    return j;
}

BnnModel BnnModel::from_json(const nlohmann::json& j) {
    try {
        BnnModel model(Architecture::from_json(j.at("architecture")), j.at("seed").get<std::uint64_t>());
        const auto& layers = j.at("layers");
        if (layers.size() != model.params_.weights.size()) fail(ErrorCode::Format, "layer count mismatch");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            Matrix w = matrix_from_json(layers[l].at("weights"));
            Vector b = vector_from_json(layers[l].at("bias"));
            if (w.rows() != model.params_.weights[l].rows() || w.cols() != model.params_.weights[l].cols() ||
                b.size() != model.params_.biases[l].size()) {
                fail(ErrorCode::Format, "layer " + std::to_string(l) + " has the wrong shape");
            }
            model.params_.weights[l] = std::move(w);
            model.params_.biases[l] = std::move(b);
        }
        std::optional<DesignSpace> space;
        if (j.contains("design_space") && !j.at("design_space").is_null()) space = DesignSpace::from_json(j.at("design_space"));
        model.set_transforms(TransformPipeline::from_json(j.at("transforms")),
                             j.at("input_names").get<std::vector<std::string>>(),
                             j.at("output_names").get<std::vector<std::string>>(), std::move(space));
        model.log_ = j.value("training_log", std::vector<double>{});
        if (j.contains("training")) {
            const auto& t = j.at("training");
            model.last_config_.epochs = t.value("epochs", model.last_config_.epochs);
            model.last_config_.batch_size = t.value("batch_size", model.last_config_.batch_size);
            model.last_config_.adam.step_size = t.value("step_size", model.last_config_.adam.step_size);
            model.last_config_.seed = t.value("seed", model.last_config_.seed);
        }
        return model;
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorCode::Format, std::string("bnn artifact: ") + ex.what());
    }
}

nlohmann::json CvSummary::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table) {
        rows.push_back({{"n_layers", r.arch.hidden_layers.size()},
                        {"n_neurons", r.arch.hidden_layers.empty() ? 0 : r.arch.hidden_layers.front()},
                        {"dropout_p", r.arch.dropout_p},
                        {"score", r.score},
                        {"output_r2", r.output_r2}});
    }
    return {{"best", best.to_json()}, {"table", rows}, {"score", "mean out-of-fold R2 over outputs, transformed space"}};
}

std::vector<Architecture> default_grid(Index n_inputs, Index n_outputs) {
    std::vector<Architecture> grid;
    for (int layers : {1, 2, 3}) {
        for (Index neurons : {256, 512, 1024}) {
            for (double p : {0.05, 0.10, 0.20}) {
                Architecture a;
                a.n_inputs = n_inputs;
                a.n_outputs = n_outputs;
                a.hidden_layers.assign(static_cast<std::size_t>(layers), neurons);
                a.dropout_p = p;
                grid.push_back(a);
            }
        }
    }
    return grid;
}

std::vector<std::vector<Index>> kfold_indices(Index n, int k, std::uint64_t seed) {
    if (k < 2) fail(ErrorCode::InvalidArgument, "cross-validation needs k >= 2");
    if (k > n) fail(ErrorCode::InvalidArgument, "k = " + std::to_string(k) + " exceeds the " + std::to_string(n) + " rows");
    Rng rng(seed);
    const auto perm = rng.permutation(n);
    std::vector<std::vector<Index>> folds(static_cast<std::size_t>(k));
    const Index base = n / k, extra = n % k;
    Index pos = 0;
    for (int f = 0; f < k; ++f) {
        const Index len = base + (f < extra ? 1 : 0);
        folds[static_cast<std::size_t>(f)].assign(perm.begin() + pos, perm.begin() + pos + len);
        std::sort(folds[static_cast<std::size_t>(f)].begin(), folds[static_cast<std::size_t>(f)].end());
        pos += len;
    }
    return folds;
}

CvSummary cross_validate(const Dataset& data, const std::vector<Architecture>& grid, int k, std::uint64_t seed,
                         const TrainConfig& config, int mc_samples) {
    if (grid.empty()) fail(ErrorCode::InvalidArgument, "empty architecture grid");
    data.validate();
    const auto folds = kfold_indices(data.size(), k, seed);
    const TransformPipeline pipeline = fit_pipeline(data);
    const Matrix xs = apply_standardize(pipeline.input, data.X);
    const Matrix ys = apply_boxcox(pipeline.output, data.Y);
    const Index n = data.size();

    CvSummary summary;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        Architecture arch = grid[g];
        arch.n_inputs = data.n_inputs();
        arch.n_outputs = data.n_outputs();
        arch.validate();
        Matrix oof(n, data.n_outputs());
        for (std::size_t f = 0; f < folds.size(); ++f) {
            std::vector<char> held(static_cast<std::size_t>(n), 0);
            for (Index i : folds[f]) held[static_cast<std::size_t>(i)] = 1;
            std::vector<Index> train_rows;
            for (Index i = 0; i < n; ++i) {
                if (!held[static_cast<std::size_t>(i)]) train_rows.push_back(i);
            }
            Matrix xtr(static_cast<Index>(train_rows.size()), xs.cols()), ytr(xtr.rows(), ys.cols());
            for (std::size_t r = 0; r < train_rows.size(); ++r) {
                xtr.row(static_cast<Index>(r)) = xs.row(train_rows[r]);
                ytr.row(static_cast<Index>(r)) = ys.row(train_rows[r]);
            }
            Matrix xval(static_cast<Index>(folds[f].size()), xs.cols());
            for (std::size_t r = 0; r < folds[f].size(); ++r) xval.row(static_cast<Index>(r)) = xs.row(folds[f][r]);

            const std::uint64_t fold_seed = derive_seed(seed, g * 1000 + f);
            BnnModel model(arch, fold_seed);
            TrainConfig cfg = config;
            cfg.seed = fold_seed;
            model.train_transformed(xtr, ytr, cfg);
            const auto [mean, var] = model.mc_moments(xval, mc_samples, derive_seed(fold_seed, 1));
            for (std::size_t r = 0; r < folds[f].size(); ++r) oof.row(folds[f][r]) = mean.row(static_cast<Index>(r));
        }
        CvResult row{arch, 0.0, {}};
        for (Index o = 0; o < ys.cols(); ++o) {
            const double mu = ys.col(o).mean();
            const double ss_tot = (ys.col(o).array() - mu).square().sum();
            const double ss_res = (ys.col(o) - oof.col(o)).squaredNorm();
            row.output_r2.push_back(ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0);
        }
        for (double r : row.output_r2) row.score += r;
        row.score /= static_cast<double>(row.output_r2.size());
        if (row.score > best_score) {
            best_score = row.score;
            summary.best = arch;
        }
        summary.table.push_back(std::move(row));
    }
    return summary;
}

}  // namespace surrogate::bnn
