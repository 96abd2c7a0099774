#include "surrogate/kernel.hpp"

#include <cmath>

#include "surrogate/error.hpp"
#include "surrogate/json_io.hpp"

namespace surrogate::svgp {

namespace {
const double kSqrt3 = std::sqrt(3.0);
}

std::string to_string(KernelKind kind) {
    return kind == KernelKind::Matern32 ? "matern32" : "squared_exponential";
}

KernelKind kernel_kind_from_string(const std::string& name) {
    if (name == "matern32") return KernelKind::Matern32;
    if (name == "squared_exponential" || name == "se" || name == "rbf") return KernelKind::SquaredExponential;
    fail(ErrorCode::InvalidArgument, "unknown kernel '" + name + "'");
}

double Kernel::eval(const Eigen::Ref<const Vector>& x1, const Eigen::Ref<const Vector>& x2) const {
    if (x1.size() != dim() || x2.size() != dim()) fail(ErrorCode::DimensionMismatch, "kernel input dimension");
    const double r = ((x1 - x2).array() / lengthscales.array()).matrix().norm();
    if (kind == KernelKind::Matern32) return variance * (1.0 + kSqrt3 * r) * std::exp(-kSqrt3 * r);
    return variance * std::exp(-0.5 * r * r);
}

Matrix Kernel::distances(const Matrix& A, const Matrix& B) const {
    if (A.cols() != dim() || B.cols() != dim()) fail(ErrorCode::DimensionMismatch, "kernel input dimension");
    const Vector inv = lengthscales.cwiseInverse();
    const Matrix as = A * inv.asDiagonal();
    const Matrix bs = B * inv.asDiagonal();
    Matrix sq = (-2.0 * as * bs.transpose());
    sq.colwise() += as.rowwise().squaredNorm();
    sq.rowwise() += bs.rowwise().squaredNorm().transpose();
    // Exact recomputation where cancellation matters (near-coincident points).
    for (Index j = 0; j < sq.cols(); ++j) {
        for (Index i = 0; i < sq.rows(); ++i) {
            if (sq(i, j) < 1e-6) sq(i, j) = (as.row(i) - bs.row(j)).squaredNorm();
        }
    }
    return sq.cwiseMax(0.0).cwiseSqrt();
}

Matrix Kernel::from_distances(const Matrix& R) const {
    if (kind == KernelKind::Matern32) {
        return R.unaryExpr([this](double r) { return variance * (1.0 + kSqrt3 * r) * std::exp(-kSqrt3 * r); });
    }
    return R.unaryExpr([this](double r) { return variance * std::exp(-0.5 * r * r); });
}

Matrix Kernel::radial_factor(const Matrix& R) const {
    if (kind == KernelKind::Matern32) {
        return R.unaryExpr([this](double r) { return 3.0 * variance * std::exp(-kSqrt3 * r); });
    }
    return from_distances(R);
}

Matrix Kernel::matrix(const Matrix& A, const Matrix& B) const { return from_distances(distances(A, B)); }

nlohmann::json Kernel::to_json() const {
    return {{"kind", to_string(kind)}, {"variance", variance}, {"lengthscales", vector_to_json(lengthscales)}};
}

Kernel Kernel::from_json(const nlohmann::json& j) {
    Kernel k{kernel_kind_from_string(j.at("kind").get<std::string>()), j.at("variance").get<double>(),
             vector_from_json(j.at("lengthscales"))};
    if (!(k.variance > 0.0) || !(k.lengthscales.array() > 0.0).all()) {
        fail(ErrorCode::Format, "kernel hyperparameters must be positive");
    }
    return k;
}

}  // namespace surrogate::svgp
