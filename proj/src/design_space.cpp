#include "surrogate/design_space.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "surrogate/error.hpp"

namespace surrogate {

namespace {

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') cell.pop_back();
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_real(const std::string& text, std::size_t line_no) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size()) {
        fail(ErrorCode::Format, "line " + std::to_string(line_no) + ": not a real number: '" + text + "'");
    }
    return v;
}

}  // namespace

DesignSpace::DesignSpace(std::vector<Parameter> params) : params_(std::move(params)) {
    if (params_.empty()) fail(ErrorCode::InvalidSpace, "design space has no parameters");
    std::set<std::string> seen;
    for (const auto& p : params_) {
        if (p.name.empty()) fail(ErrorCode::InvalidSpace, "parameter with empty name");
        if (!seen.insert(p.name).second) fail(ErrorCode::InvalidSpace, "duplicate parameter name '" + p.name + "'");
        if (!(std::isfinite(p.lower) && std::isfinite(p.upper) && p.lower < p.upper)) {
            fail(ErrorCode::InvalidSpace, "parameter '" + p.name + "' needs finite lower < upper");
        }
    }
}

std::vector<std::string> DesignSpace::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.name);
    return out;
}

std::optional<Index> DesignSpace::find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) return static_cast<Index>(i);
    }
    return std::nullopt;
}

std::optional<Index> DesignSpace::first_violation(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != dim()) fail(ErrorCode::DimensionMismatch, "point has " + std::to_string(x.size()) +
                                                                  " coordinates, space has " + std::to_string(dim()));
    for (Index j = 0; j < dim(); ++j) {
        const auto& p = params_[static_cast<std::size_t>(j)];
        if (!(x(j) >= p.lower && x(j) <= p.upper)) return j;
    }
    return std::nullopt;
}

nlohmann::json DesignSpace::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : params_) {
        arr.push_back({{"name", p.name}, {"lower", p.lower}, {"upper", p.upper}, {"unit", p.unit}});
    }
    return {{"parameters", arr}};
}

DesignSpace DesignSpace::from_json(const nlohmann::json& j) {
    std::vector<Parameter> params;
    try {
        for (const auto& e : j.at("parameters")) {
            params.push_back({e.at("name").get<std::string>(), e.at("lower").get<double>(), e.at("upper").get<double>(),
                              e.value("unit", std::string{})});
        }
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorCode::Format, std::string("design space: ") + ex.what());
    }
    return DesignSpace(std::move(params));
}

DesignSpace DesignSpace::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorCode::Format, path.string() + ": " + ex.what());
    }
    return from_json(j);
}

void DesignSpace::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << to_json().dump(2) << '\n';
}

void Dataset::validate() const {
    if (X.rows() != Y.rows()) fail(ErrorCode::DimensionMismatch, "X and Y row counts differ");
    if (static_cast<std::size_t>(X.cols()) != input_names.size())
        fail(ErrorCode::DimensionMismatch, "X column count does not match input names");
    if (static_cast<std::size_t>(Y.cols()) != output_names.size())
        fail(ErrorCode::DimensionMismatch, "Y column count does not match output names");
    if (space) {
        if (space->dim() != X.cols()) fail(ErrorCode::DimensionMismatch, "dataset and design space dimensions differ");
        for (Index i = 0; i < X.rows(); ++i) {
            if (auto j = space->first_violation(X.row(i).transpose())) {
                fail(ErrorCode::InvalidArgument, "row " + std::to_string(i) + ": '" +
                                                     space->params()[static_cast<std::size_t>(*j)].name +
                                                     "' outside its bounds");
            }
        }
    }
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
    Dataset out{Matrix(static_cast<Index>(rows.size()), X.cols()), Matrix(static_cast<Index>(rows.size()), Y.cols()),
                input_names, output_names, space};
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out.X.row(static_cast<Index>(k)) = X.row(rows[k]);
        out.Y.row(static_cast<Index>(k)) = Y.row(rows[k]);
    }
    return out;
}

void Dataset::save_csv(const std::filesystem::path& path) const {
    validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    bool first = true;
    for (const auto* names : {&input_names, &output_names}) {
        for (const auto& n : *names) {
            out << (first ? "" : ",") << n;
            first = false;
        }
    }
    out << '\n';
    for (Index i = 0; i < size(); ++i) {
        for (Index j = 0; j < X.cols(); ++j) out << (j ? "," : "") << format_real(X(i, j));
        for (Index j = 0; j < Y.cols(); ++j) out << (X.cols() + j ? "," : "") << format_real(Y(i, j));
        out << '\n';
    }
}

Dataset Dataset::load_csv(const std::filesystem::path& path, std::optional<Index> n_inputs,
                          const std::optional<DesignSpace>& space) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::Format, path.string() + ": missing header");
    auto header = split_csv_line(line);

    Index n_in = 0;
    if (space) {
        n_in = space->dim();
        const auto names = space->names();
        if (header.size() < names.size() || !std::equal(names.begin(), names.end(), header.begin())) {
            fail(ErrorCode::DimensionMismatch, path.string() + ": header does not start with the design space inputs");
        }
    } else if (n_inputs) {
        n_in = *n_inputs;
    } else {
        fail(ErrorCode::InvalidArgument, "load_csv needs either n_inputs or a design space");
    }
    if (n_in < 1 || static_cast<std::size_t>(n_in) > header.size()) {
        fail(ErrorCode::DimensionMismatch, path.string() + ": header has too few columns");
    }

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            fail(ErrorCode::Format, path.string() + ": line " + std::to_string(line_no) + " has " +
                                        std::to_string(cells.size()) + " fields, expected " +
                                        std::to_string(header.size()));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(parse_real(c, line_no));
        rows.push_back(std::move(row));
    }

    const auto n = static_cast<Index>(rows.size());
    const auto width = static_cast<Index>(header.size());
    Dataset ds{Matrix(n, n_in), Matrix(n, width - n_in), {header.begin(), header.begin() + n_in},
               {header.begin() + n_in, header.end()}, space};
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < width; ++j) {
            const double v = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (j < n_in) ds.X(i, j) = v; else ds.Y(i, j - n_in) = v;
        }
    }
    ds.validate();
    return ds;
}

Matrix lhs_sample(const DesignSpace& space, Index n, std::uint64_t seed, LhsVariant variant) {
    if (n < 1) fail(ErrorCode::InvalidArgument, "lhs_sample needs n >= 1");
    if (space.dim() == 0) fail(ErrorCode::InvalidSpace, "empty design space");
    Rng rng(seed);
    const Index d = space.dim();
    Matrix out(n, d);
    for (Index j = 0; j < d; ++j) {
        const auto& p = space.params()[static_cast<std::size_t>(j)];
        const auto perm = rng.permutation(n);
        const double width = (p.upper - p.lower) / static_cast<double>(n);
        for (Index i = 0; i < n; ++i) {
            const double offset = variant == LhsVariant::Jittered ? rng.uniform() : 0.5;
            const auto bin = static_cast<double>(perm[static_cast<std::size_t>(i)]);
            double v = p.lower + (bin + offset) * width;
            // Keep the value inside its own bin under round-off.
            const double bin_lo = p.lower + bin * width;
            const double bin_hi = p.lower + (bin + 1.0) * width;
            if (v < bin_lo) v = bin_lo;
            if (v >= bin_hi) v = std::nextafter(bin_hi, bin_lo);
            if (v >= p.upper) v = std::nextafter(p.upper, p.lower);
            out(i, j) = v;
        }
    }
    return out;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, Index n_test, std::uint64_t seed) {
    ds.validate();
    if (n_test <= 0 || n_test >= ds.size()) {
        fail(ErrorCode::InvalidArgument, "n_test must satisfy 0 < n_test < " + std::to_string(ds.size()));
    }
    Rng rng(seed);
    auto perm = rng.permutation(ds.size());
    std::vector<Index> test(perm.begin(), perm.begin() + n_test);
    std::vector<Index> train(perm.begin() + n_test, perm.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    return {ds.subset(train), ds.subset(test)};
}

}  // namespace surrogate
