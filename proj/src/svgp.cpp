#include "surrogate/svgp.hpp"

#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>

#include "surrogate/error.hpp"
#include "surrogate/json_io.hpp"

namespace surrogate::svgp {

Index OutputBlock::packed_size() const {
    const Index m = num_inducing(), d = kernel.dim();
    return 1 + d + m * d + m + m * (m + 1) / 2;
}

Vector OutputBlock::pack() const {
    const Index m = num_inducing(), d = kernel.dim();
    Vector theta(packed_size());
    Index k = 0;
    theta(k++) = std::log(kernel.variance);
    for (Index j = 0; j < d; ++j) theta(k++) = std::log(kernel.lengthscales(j));
    for (Index a = 0; a < m; ++a) {
        for (Index j = 0; j < d; ++j) theta(k++) = inducing(a, j);
    }
    for (Index a = 0; a < m; ++a) theta(k++) = q_mean(a);
    for (Index a = 0; a < m; ++a) {
        for (Index b = 0; b <= a; ++b) theta(k++) = a == b ? std::log(q_sqrt(a, a)) : q_sqrt(a, b);
    }
    return theta;
}

void OutputBlock::unpack(const Vector& theta) {
    if (theta.size() != packed_size()) fail(ErrorCode::DimensionMismatch, "packed SVGP parameter length");
    const Index m = num_inducing(), d = kernel.dim();
    Index k = 0;
    kernel.variance = std::exp(theta(k++));
    for (Index j = 0; j < d; ++j) kernel.lengthscales(j) = std::exp(theta(k++));
    for (Index a = 0; a < m; ++a) {
        for (Index j = 0; j < d; ++j) inducing(a, j) = theta(k++);
    }
    for (Index a = 0; a < m; ++a) q_mean(a) = theta(k++);
    q_sqrt.setZero();
    for (Index a = 0; a < m; ++a) {
        for (Index b = 0; b <= a; ++b) q_sqrt(a, b) = a == b ? std::exp(theta(k++)) : theta(k++);
    }
}

nlohmann::json OutputBlock::to_json() const {
    return {{"kernel", kernel.to_json()},
            {"inducing", matrix_to_json(inducing)},
            {"q_mean", vector_to_json(q_mean)},
            {"q_sqrt", matrix_to_json(q_sqrt)},
            {"noise_variance", noise_variance}};
}

OutputBlock OutputBlock::from_json(const nlohmann::json& j) {
    OutputBlock b{Kernel::from_json(j.at("kernel")), matrix_from_json(j.at("inducing")),
                  vector_from_json(j.at("q_mean")), matrix_from_json(j.at("q_sqrt")),
                  j.at("noise_variance").get<double>()};
    const Index m = b.inducing.rows();
    if (b.inducing.cols() != b.kernel.dim() || b.q_mean.size() != m || b.q_sqrt.rows() != m || b.q_sqrt.cols() != m) {
        fail(ErrorCode::Format, "SVGP block shapes are inconsistent");
    }
    if (!(b.q_sqrt.diagonal().array() > 0.0).all()) fail(ErrorCode::Format, "q_sqrt needs a positive diagonal");
    if (!(b.noise_variance > 0.0)) fail(ErrorCode::Format, "noise variance must be positive");
    return b;
}

Eigen::LLT<Matrix> stable_cholesky(const Matrix& K, double* jitter_used) {
    const Index m = K.rows();
    for (double jitter = kJitter; jitter <= kMaxJitter * 1.0000001; jitter *= 10.0) {
        Matrix kj = K;
        kj.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(kj);
        if (llt.info() == Eigen::Success) {
            if (jitter_used) *jitter_used = jitter;
            return llt;
        }
    }
    fail(ErrorCode::IllConditioned, "Cholesky of the " + std::to_string(m) + "x" + std::to_string(m) +
                                        " inducing covariance failed with jitter up to 1e-4");
}

namespace {

struct Terms {
    Matrix kzz;  // without jitter
    Matrix rzz;
    Eigen::LLT<Matrix> llt;
    Vector alpha;  // K_zz^-1 m_u
    double kl = 0.0;
};

Terms prior_terms(const OutputBlock& block) {
    Terms t;
    t.rzz = block.kernel.distances(block.inducing, block.inducing);
    t.kzz = block.kernel.from_distances(t.rzz);
    t.llt = stable_cholesky(t.kzz);
    t.alpha = t.llt.solve(block.q_mean);
    const Index m = block.num_inducing();
    const Matrix lz_inv_l = t.llt.matrixL().solve(block.q_sqrt.triangularView<Eigen::Lower>().toDenseMatrix());
    const Matrix lz = t.llt.matrixL();
    const double logdet_k = 2.0 * lz.diagonal().array().log().sum();
    const double logdet_s = 2.0 * block.q_sqrt.diagonal().array().log().sum();
    t.kl = 0.5 * (lz_inv_l.squaredNorm() + block.q_mean.dot(t.alpha) - static_cast<double>(m) + logdet_k - logdet_s);
    return t;
}

void check_batch(const OutputBlock& block, const Matrix& X, const Vector& y) {
    if (X.rows() == 0) fail(ErrorCode::InvalidArgument, "ELBO on an empty batch");
    if (X.cols() != block.kernel.dim()) fail(ErrorCode::DimensionMismatch, "batch input dimension");
    if (y.size() != X.rows()) fail(ErrorCode::DimensionMismatch, "batch target length");
}

}  // namespace

double kl_divergence(const OutputBlock& block) { return prior_terms(block).kl; }

double elbo(const OutputBlock& block, const Matrix& X, const Vector& y, Index n_total) {
    check_batch(block, X, y);
    const Terms t = prior_terms(block);
    const Matrix kxz = block.kernel.matrix(X, block.inducing);
    const Matrix at = t.llt.solve(kxz.transpose());
    const Vector mu = kxz * t.alpha;
    const Matrix al = at.transpose() * block.q_sqrt.triangularView<Eigen::Lower>();
    const double var_sum = static_cast<double>(X.rows()) * block.kernel.variance -
                           at.cwiseProduct(kxz.transpose()).sum() + al.squaredNorm();
    const double sn2 = block.noise_variance;
    const double scale = static_cast<double>(n_total) / static_cast<double>(X.rows());
    const double expected = -0.5 * static_cast<double>(X.rows()) * std::log(2.0 * std::numbers::pi * sn2) -
                            0.5 * ((y - mu).squaredNorm() + var_sum) / sn2;
    return scale * expected - t.kl;
}

double elbo_and_gradient(const OutputBlock& block, const Matrix& X, const Vector& y, Index n_total, Vector& grad) {
    check_batch(block, X, y);
    const Index b = X.rows(), m = block.num_inducing(), d = block.kernel.dim();
    const Terms t = prior_terms(block);
    const Matrix rxz = block.kernel.distances(X, block.inducing);
    const Matrix kxz = block.kernel.from_distances(rxz);
    const Matrix at = t.llt.solve(kxz.transpose());  // K_zz^-1 K_zx, m x b
    const Vector mu = kxz * t.alpha;
    const Matrix L = block.q_sqrt.triangularView<Eigen::Lower>();
    const Matrix al = at.transpose() * L;
    const double s2 = block.kernel.variance;
    const double var_sum = static_cast<double>(b) * s2 - at.cwiseProduct(kxz.transpose()).sum() + al.squaredNorm();
    const double sn2 = block.noise_variance;
    const double scale = static_cast<double>(n_total) / static_cast<double>(b);
    const Vector r = y - mu;
    const double expected = -0.5 * static_cast<double>(b) * std::log(2.0 * std::numbers::pi * sn2) -
                            0.5 * (r.squaredNorm() + var_sum) / sn2;
    const double value = scale * expected - t.kl;

    const double c = scale / sn2;
    const Matrix kinv = t.llt.solve(Matrix::Identity(m, m));
    const Matrix S = L * L.transpose();
    const Matrix Q = at * at.transpose();
    const Vector cr = c * r;
    const Vector at_cr = at * cr;
    const Matrix kinv_s = kinv * S;
    const Matrix kinv_s_kinv = kinv_s * kinv;

    // dELBO / dK_zz, dK_xz and d(diag K_xx)
    Matrix g_zz = -at_cr * t.alpha.transpose();
    g_zz -= 0.5 * c * (Q - Q * kinv_s.transpose() - kinv_s * Q);
    g_zz += 0.5 * (kinv_s_kinv + t.alpha * t.alpha.transpose() - kinv);
    const Matrix B = kinv_s_kinv - kinv;
    Matrix g_xz = cr * t.alpha.transpose() - c * kxz * B;
    const double g_xx_sum = -0.5 * c * static_cast<double>(b);

    grad.resize(block.packed_size());
    grad.setZero();
    Index k = 0;
    grad(k++) = g_xz.cwiseProduct(kxz).sum() + g_zz.cwiseProduct(t.kzz).sum() + g_xx_sum * s2;

    const Matrix w = g_xz.cwiseProduct(block.kernel.radial_factor(rxz));
    const Matrix wz = g_zz.cwiseProduct(block.kernel.radial_factor(t.rzz));
    const Vector& ell = block.kernel.lengthscales;
    const Matrix& Z = block.inducing;
    Vector g_log_ell = Vector::Zero(d);
    Matrix g_z = Matrix::Zero(m, d);
    for (Index j = 0; j < d; ++j) {
        const double inv_l2 = 1.0 / (ell(j) * ell(j));
        double acc = 0.0;
        for (Index a = 0; a < m; ++a) {
            double gz = 0.0;
            for (Index i = 0; i < b; ++i) {
                const double diff = X(i, j) - Z(a, j);
                acc += w(i, a) * diff * diff;
                gz += w(i, a) * diff;
            }
            for (Index e = 0; e < m; ++e) {
                const double diff = Z(a, j) - Z(e, j);
                acc += wz(a, e) * diff * diff;
                gz -= (wz(a, e) + wz(e, a)) * diff;
            }
            g_z(a, j) = gz * inv_l2;
        }
        g_log_ell(j) = acc * inv_l2;
    }
    for (Index j = 0; j < d; ++j) grad(k++) = g_log_ell(j);
    for (Index a = 0; a < m; ++a) {
        for (Index j = 0; j < d; ++j) grad(k++) = g_z(a, j);
    }
    const Vector g_mean = at_cr - t.alpha;
    for (Index a = 0; a < m; ++a) grad(k++) = g_mean(a);
    const Matrix g_s = -0.5 * c * Q - 0.5 * kinv;
    const Matrix g_l = 2.0 * g_s * L;
    for (Index a = 0; a < m; ++a) {
        for (Index e = 0; e <= a; ++e) {
            if (a == e) {
                grad(k++) = (g_l(a, a) + 1.0 / L(a, a)) * L(a, a);
            } else {
                grad(k++) = g_l(a, e);
            }
        }
    }
    return value;
}

void predict_latent(const OutputBlock& block, const Matrix& X, Vector& mean, Vector& variance) {
    if (X.cols() != block.kernel.dim()) fail(ErrorCode::DimensionMismatch, "prediction input dimension");
    const auto llt = stable_cholesky(block.kernel.matrix(block.inducing, block.inducing));
    const Matrix kxz = block.kernel.matrix(X, block.inducing);
    const Matrix at = llt.solve(kxz.transpose());
    const Vector alpha = llt.solve(block.q_mean);
    const Matrix al = at.transpose() * block.q_sqrt.triangularView<Eigen::Lower>();
    mean = kxz * alpha;
    variance = (block.kernel.variance - at.cwiseProduct(kxz.transpose()).colwise().sum().transpose().array() +
                al.rowwise().squaredNorm().array())
                   .matrix()
                   .cwiseMax(0.0);
}

Matrix init_inducing(const Matrix& X, Index m, InducingInit strategy, std::uint64_t seed) {
    const Index n = X.rows();
    if (m < 1) fail(ErrorCode::InvalidArgument, "need at least one inducing point");
    if (m > n) fail(ErrorCode::InvalidArgument, "m = " + std::to_string(m) + " exceeds the " + std::to_string(n) + " rows");
    Rng rng(seed);
    const auto perm = rng.permutation(n);
    Matrix Z(m, X.cols());
    for (Index a = 0; a < m; ++a) Z.row(a) = X.row(perm[static_cast<std::size_t>(a)]);
    if (strategy == InducingInit::RandomSubset) return Z;

    // Lloyd iterations from the random subset; empty clusters keep their centroid.
    constexpr int kIterations = 50;
    std::vector<Index> assign(static_cast<std::size_t>(n), -1);
    for (int it = 0; it < kIterations; ++it) {
        bool changed = false;
        for (Index i = 0; i < n; ++i) {
            Index best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Index a = 0; a < m; ++a) {
                const double dist = (X.row(i) - Z.row(a)).squaredNorm();
                if (dist < best_d) {
                    best_d = dist;
                    best = a;
                }
            }
            if (assign[static_cast<std::size_t>(i)] != best) {
                assign[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        Matrix sums = Matrix::Zero(m, X.cols());
        Vector counts = Vector::Zero(m);
        for (Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += X.row(i);
            counts(assign[static_cast<std::size_t>(i)]) += 1.0;
        }
        for (Index a = 0; a < m; ++a) {
            if (counts(a) > 0.0) Z.row(a) = sums.row(a) / counts(a);
        }
        if (!changed) break;
    }
    return Z;
}

OutputBlock init_block(const Matrix& Xs, const Vector& ys, const TrainConfig& config, std::uint64_t seed) {
    const Index d = Xs.cols();
    OutputBlock block;
    block.kernel = Kernel{config.kernel, 1.0, Vector::Constant(d, std::sqrt(static_cast<double>(d)))};
    block.inducing = init_inducing(Xs, std::min(config.num_inducing, Xs.rows()), config.inducing_init, seed);
    block.q_mean = Vector::Zero(block.inducing.rows());
    block.q_sqrt = stable_cholesky(block.kernel.matrix(block.inducing, block.inducing)).matrixL();
    block.noise_variance = config.noise_fraction * ys.cwiseAbs().mean();
    if (!(block.noise_variance > 0.0)) fail(ErrorCode::InvalidArgument, "noise variance must be positive");
    return block;
}

std::vector<double> train_block(OutputBlock& block, const Matrix& Xs, const Vector& ys, const TrainConfig& config,
                                std::uint64_t seed) {
    if (config.steps < 0) fail(ErrorCode::InvalidArgument, "steps must be non-negative");
    if (config.batch_size < 1) fail(ErrorCode::InvalidArgument, "batch size must be at least 1");
    const Index n = Xs.rows();
    const Index b = std::min(config.batch_size, n);
    Rng rng(seed);
    Adam adam(config.adam);
    std::vector<double> log;
    log.reserve(static_cast<std::size_t>(config.steps));
    Vector theta = block.pack();
    Vector grad;
    std::vector<Index> perm;
    Index cursor = n;
    Matrix xb(b, Xs.cols());
    Vector yb(b);
    for (int step = 0; step < config.steps; ++step) {
        for (Index i = 0; i < b; ++i) {
            if (cursor >= n) {
                perm = rng.permutation(n);
                cursor = 0;
            }
            const Index row = perm[static_cast<std::size_t>(cursor++)];
            xb.row(i) = Xs.row(row);
            yb(i) = ys(row);
        }
        const double value = elbo_and_gradient(block, xb, yb, n, grad);
        if (!std::isfinite(value) || !grad.allFinite()) {
            std::ostringstream msg;
            msg << "non-finite ELBO at step " << step << " (value " << value << ", gradient norm " << grad.norm()
                << ")";
            fail(ErrorCode::NumericalFailure, msg.str());
        }
        log.push_back(value);
        adam.begin_step();
        Matrix neg = -grad;
        adam.update(0, theta, neg);
        block.unpack(theta);
        if (config.log_every > 0 && (step + 1) % config.log_every == 0) {
            std::cerr << "svgp step " << step + 1 << "/" << config.steps << " elbo " << value << '\n';
        }
    }
    return log;
}

void SvgpModel::set_transforms(TransformPipeline t, std::vector<std::string> inputs, std::vector<std::string> outputs,
                               std::optional<DesignSpace> space) {
    transforms_ = std::move(t);
    input_names_ = std::move(inputs);
    output_names_ = std::move(outputs);
    space_ = std::move(space);
}

void SvgpModel::train(const Dataset& data, const TrainConfig& config) {
    data.validate();
    config_ = config;
    set_transforms(fit_pipeline(data), data.input_names, data.output_names, data.space);
    const Matrix xs = apply_standardize(transforms_.input, data.X);
    const Matrix ys = apply_boxcox(transforms_.output, data.Y);
    blocks_.clear();
    log_.clear();
    for (Index o = 0; o < ys.cols(); ++o) {
        const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(o));
        OutputBlock block = init_block(xs, ys.col(o), config, seed);
        log_.push_back(train_block(block, xs, ys.col(o), config, derive_seed(seed, 1)));
        blocks_.push_back(std::move(block));
    }
}

std::vector<PredictiveDistribution> SvgpModel::predict_batch(const Matrix& X, const PredictOptions& opts) const {
    check_inputs(X);
    const Matrix xs = apply_standardize(transforms_.input, X);
    Matrix mean(X.rows(), n_outputs()), var(X.rows(), n_outputs());
    for (Index o = 0; o < n_outputs(); ++o) {
        Vector m, v;
        predict_latent(blocks_[static_cast<std::size_t>(o)], xs, m, v);
        if (opts.include_noise) v.array() += blocks_[static_cast<std::size_t>(o)].noise_variance;
        mean.col(o) = m;
        var.col(o) = v;
    }
    std::vector<PredictiveDistribution> out;
    out.reserve(static_cast<std::size_t>(X.rows()));
    for (Index i = 0; i < X.rows(); ++i) {
        out.push_back(make_predictive(transforms_.output, mean.row(i).transpose(), var.row(i).transpose(), 0));
    }
    return out;
}

nlohmann::json SvgpModel::describe() const {
    nlohmann::json kernels = nlohmann::json::array();
    for (const auto& b : blocks_) kernels.push_back(b.kernel.to_json());
    return {{"kind", kind()},
            {"num_inducing", blocks_.empty() ? 0 : blocks_.front().num_inducing()},
            {"kernels", kernels},
            {"inputs", input_names_},
            {"outputs", output_names_}};
}

nlohmann::json SvgpModel::to_json() const {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : blocks_) blocks.push_back(b.to_json());
    nlohmann::json j = {{"format", kArtifactFormat},
                        {"version", kArtifactVersion},
                        {"kind", kind()},
                        {"seed", config_.seed},
                        {"blocks", blocks},
                        {"transforms", transforms_.to_json()},
                        {"input_names", input_names_},
                        {"output_names", output_names_},
                        {"training",
                         {{"steps", config_.steps},
                          {"batch_size", config_.batch_size},
                          {"num_inducing", config_.num_inducing},
                          {"kernel", to_string(config_.kernel)},
                          {"step_size", config_.adam.step_size},
                          {"noise_fraction", config_.noise_fraction}}},
                        {"training_log", log_}};
    j["design_space"] = space_ ? space_->to_json() : nlohmann::json(nullptr);
    return j;
}

SvgpModel SvgpModel::from_json(const nlohmann::json& j) {
    try {
        SvgpModel model;
        for (const auto& b : j.at("blocks")) model.blocks_.push_back(OutputBlock::from_json(b));
        std::optional<DesignSpace> space;
        if (j.contains("design_space") && !j.at("design_space").is_null()) space = DesignSpace::from_json(j.at("design_space"));
        model.set_transforms(TransformPipeline::from_json(j.at("transforms")),
                             j.at("input_names").get<std::vector<std::string>>(),
                             j.at("output_names").get<std::vector<std::string>>(), std::move(space));
        if (model.transforms_.output.size() != model.n_outputs()) fail(ErrorCode::Format, "transform/output count mismatch");
        for (const auto& b : model.blocks_) {
            if (b.kernel.dim() != model.n_inputs()) fail(ErrorCode::Format, "kernel dimension mismatch");
        }
        model.log_ = j.value("training_log", std::vector<std::vector<double>>{});
        model.config_.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("training")) {
            const auto& t = j.at("training");
            model.config_.steps = t.value("steps", model.config_.steps);
            model.config_.batch_size = t.value("batch_size", model.config_.batch_size);
            model.config_.num_inducing = t.value("num_inducing", model.config_.num_inducing);
            model.config_.kernel = kernel_kind_from_string(t.value("kernel", std::string("matern32")));
            model.config_.adam.step_size = t.value("step_size", model.config_.adam.step_size);
            model.config_.noise_fraction = t.value("noise_fraction", model.config_.noise_fraction);
        }
        return model;
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorCode::Format, std::string("svgp artifact: ") + ex.what());
    }
}

}  // namespace surrogate::svgp
