#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "surrogate/common.hpp"
#include "surrogate/json_io.hpp"

namespace surrogate {

/// Per-column affine standardization.
struct StandardizeParams {
    Vector mean;
    Vector std;

    [[nodiscard]] Index size() const noexcept { return mean.size(); }
    [[nodiscard]] nlohmann::json to_json() const;
    static StandardizeParams from_json(const nlohmann::json& j);
};

/// Column means and sample (n - 1) standard deviations. Throws DegenerateColumn
/// on a constant column, naming it when names are supplied.
StandardizeParams fit_standardize(const Matrix& X, const std::vector<std::string>& names = {});
Matrix apply_standardize(const StandardizeParams& params, const Matrix& X);
Matrix invert_standardize(const StandardizeParams& params, const Matrix& Z);

/// Per-output shifted Box-Cox followed by standardization.
struct BoxCoxParams {
    Vector lambda;
    Vector shift;
    StandardizeParams post_standardize;

    [[nodiscard]] Index size() const noexcept { return lambda.size(); }

    /// Standardized latent value of y for output o; -inf when y + shift <= 0
    /// (below the image of the inverse map).
    [[nodiscard]] double to_latent(Index o, double y) const;
    /// Inverse of to_latent; throws DomainError outside the forward image.
    [[nodiscard]] double from_latent(Index o, double z) const;
    [[nodiscard]] bool latent_in_domain(Index o, double z) const;

    [[nodiscard]] nlohmann::json to_json() const;
    static BoxCoxParams from_json(const nlohmann::json& j);
};

/// (x^lambda - 1) / lambda, log(x) at lambda = 0. Needs x > 0.
double boxcox(double x, double lambda);
/// Inverse of boxcox; throws DomainError when lambda * t + 1 <= 0.
double inv_boxcox(double t, double lambda);

/// Profile log-likelihood of lambda for strictly positive data (constants dropped).
double boxcox_log_likelihood(const Vector& positive, double lambda);

inline constexpr double kLambdaMin = -5.0;
inline constexpr double kLambdaMax = 5.0;

/// Fits shift, lambda (maximum likelihood on [-5, 5]) and the post-standardization
/// per column. Needs at least 3 rows.
BoxCoxParams fit_boxcox(const Matrix& Y, const std::vector<std::string>& names = {});
Matrix apply_boxcox(const BoxCoxParams& params, const Matrix& Y);
Matrix invert_boxcox(const BoxCoxParams& params, const Matrix& Z);

/// Moments in original units of a Gaussian latent pushed through the inverse transform.
struct PushforwardResult {
    Vector mean;
    Vector variance;
    std::vector<bool> range_clipped;
};

inline constexpr int kDefaultQuadratureNodes = 21;

/// Gauss-Hermite moments of invert_boxcox(N(latent_mean, latent_variance)) per output.
/// Nodes outside the invertible domain are dropped and the output is flagged.
PushforwardResult pushforward_gaussian(const BoxCoxParams& params, const Vector& latent_mean,
                                       const Vector& latent_variance, int nodes = kDefaultQuadratureNodes);

/// Full preprocessing state of a surrogate.
struct TransformPipeline {
    StandardizeParams input;
    BoxCoxParams output;

    [[nodiscard]] nlohmann::json to_json() const;
    static TransformPipeline from_json(const nlohmann::json& j);
};

struct Dataset;
TransformPipeline fit_pipeline(const Dataset& ds);

}  // namespace surrogate
