#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "surrogate/common.hpp"

namespace surrogate::svgp {

enum class KernelKind { Matern32, SquaredExponential };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

/// Stationary ARD kernel. With r = sqrt(sum_j ((x1_j - x2_j) / l_j)^2):
///   matern32:            s2 (1 + sqrt(3) r) exp(-sqrt(3) r)
///   squared_exponential: s2 exp(-r^2 / 2)
struct Kernel {
    KernelKind kind = KernelKind::Matern32;
    double variance = 1.0;
    Vector lengthscales;

    [[nodiscard]] Index dim() const noexcept { return lengthscales.size(); }

    [[nodiscard]] double eval(const Eigen::Ref<const Vector>& x1, const Eigen::Ref<const Vector>& x2) const;

    /// K(A, B) over rows of A and B.
    [[nodiscard]] Matrix matrix(const Matrix& A, const Matrix& B) const;

    /// Radial derivative factor h with dk/dlog(l_j) = h * (d_j / l_j)^2 and
    /// dk/dx2_j = h * d_j / l_j^2, where d = x1 - x2. Evaluated elementwise on
    /// the scaled distance matrix R.
    [[nodiscard]] Matrix radial_factor(const Matrix& R) const;

    /// Scaled distance matrix between the rows of A and B.
    [[nodiscard]] Matrix distances(const Matrix& A, const Matrix& B) const;

    /// Kernel values from a scaled distance matrix.
    [[nodiscard]] Matrix from_distances(const Matrix& R) const;

    [[nodiscard]] nlohmann::json to_json() const;
    static Kernel from_json(const nlohmann::json& j);
};

}  // namespace surrogate::svgp
