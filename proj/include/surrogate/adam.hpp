#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "surrogate/common.hpp"

namespace surrogate {

struct AdamConfig {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction over a fixed set of parameter tensors.
/// Each tensor owns a slot; slots are sized on first use.
class Adam {
public:
    explicit Adam(AdamConfig config) : config_(config) {}

    /// Advances the step counter; call once before updating the slots of a step.
    void begin_step() { ++t_; }

    /// param -= step * m_hat / (sqrt(v_hat) + eps); gradient of the objective being minimized.
    void update(std::size_t slot, Eigen::Ref<Matrix> param, const Eigen::Ref<const Matrix>& grad) {
        if (slot >= first_.size()) {
            first_.resize(slot + 1);
            second_.resize(slot + 1);
        }
        auto& m = first_[slot];
        auto& v = second_[slot];
        if (m.rows() != param.rows() || m.cols() != param.cols()) {
            m = Matrix::Zero(param.rows(), param.cols());
            v = Matrix::Zero(param.rows(), param.cols());
        }
        m = config_.beta1 * m + (1.0 - config_.beta1) * grad;
        v = config_.beta2 * v + (1.0 - config_.beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        param.array() -= config_.step_size * (m.array() / c1) / ((v.array() / c2).sqrt() + config_.epsilon);
    }

    [[nodiscard]] long steps() const noexcept { return t_; }

private:
    AdamConfig config_;
    long t_ = 0;
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
};

}  // namespace surrogate
