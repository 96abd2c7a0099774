#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "surrogate/common.hpp"

namespace surrogate {

struct Parameter {
    std::string name;
    double lower = 0.0;
    double upper = 1.0;
    std::string unit;
};

/// Ordered box of continuous design parameters.
class DesignSpace {
public:
    DesignSpace() = default;
    /// Throws InvalidSpace on empty/duplicate names or lower >= upper.
    explicit DesignSpace(std::vector<Parameter> params);

    [[nodiscard]] const std::vector<Parameter>& params() const noexcept { return params_; }
    [[nodiscard]] Index dim() const noexcept { return static_cast<Index>(params_.size()); }
    [[nodiscard]] std::vector<std::string> names() const;
    [[nodiscard]] std::optional<Index> find(const std::string& name) const;

    /// Index of the first coordinate outside its bounds, if any.
    [[nodiscard]] std::optional<Index> first_violation(const Eigen::Ref<const Vector>& x) const;
    [[nodiscard]] bool contains(const Eigen::Ref<const Vector>& x) const { return !first_violation(x); }

    [[nodiscard]] nlohmann::json to_json() const;
    static DesignSpace from_json(const nlohmann::json& j);

    static DesignSpace load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    friend bool operator==(const DesignSpace&, const DesignSpace&) = default;

private:
    std::vector<Parameter> params_;
};

inline bool operator==(const Parameter& a, const Parameter& b) {
    return a.name == b.name && a.lower == b.lower && a.upper == b.upper && a.unit == b.unit;
}

/// Simulation sample matrices in original units.
struct Dataset {
    Matrix X;
    Matrix Y;
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    std::optional<DesignSpace> space;

    [[nodiscard]] Index size() const noexcept { return X.rows(); }
    [[nodiscard]] Index n_inputs() const noexcept { return X.cols(); }
    [[nodiscard]] Index n_outputs() const noexcept { return Y.cols(); }

    /// Throws DimensionMismatch / InvalidArgument when an invariant is broken.
    void validate() const;

    /// Rows in the given order.
    [[nodiscard]] Dataset subset(const std::vector<Index>& rows) const;

    /// CSV with a header of input names followed by output names.
    void save_csv(const std::filesystem::path& path) const;
    /// n_inputs tells where the input columns end; when a space is given its
    /// names identify the inputs instead.
    static Dataset load_csv(const std::filesystem::path& path, std::optional<Index> n_inputs,
                            const std::optional<DesignSpace>& space = std::nullopt);
};

enum class LhsVariant { Jittered, Midpoint };

/// Latin hypercube design: one sample per equal-width bin in every dimension.
Matrix lhs_sample(const DesignSpace& space, Index n, std::uint64_t seed,
                  LhsVariant variant = LhsVariant::Jittered);

/// Seeded disjoint split; returns (train, test). Needs 0 < n_test < size.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, Index n_test, std::uint64_t seed);

}  // namespace surrogate
