#include "surrogate/json_io.hpp"

#include "surrogate/error.hpp"

namespace surrogate {

nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Vector vector_from_json(const nlohmann::json& j) {
    if (!j.is_array()) fail(ErrorCode::Format, "expected a numeric array");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
    return v;
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) rows.push_back(vector_to_json(m.row(i).transpose()));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto& data = j.at("data");
    if (static_cast<Index>(data.size()) != rows) fail(ErrorCode::Format, "matrix row count mismatch");
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto& r = data[static_cast<std::size_t>(i)];
        if (static_cast<Index>(r.size()) != cols) fail(ErrorCode::Format, "matrix column count mismatch");
        for (Index k = 0; k < cols; ++k) m(i, k) = r[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

}  // namespace surrogate
