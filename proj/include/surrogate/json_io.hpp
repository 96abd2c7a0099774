#pragma once

#include <nlohmann/json.hpp>

#include "surrogate/common.hpp"

namespace surrogate {

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

/// Row-major nested arrays.
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace surrogate
