#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dpcc/core/constraints.hpp"
#include "dpcc/core/normalizer.hpp"
#include "dpcc/core/trajectory.hpp"

namespace dpcc {

using Json = nlohmann::json;

Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);
/// Rows as nested arrays.
Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index cols);

Json normalizer_to_json(const Normalizer& n);
Normalizer normalizer_from_json(const Json& j);

/// {"type": "halfspace"|"box"|"avoid_disk", ...}. Infinite box bounds are written as null.
Json primitive_to_json(const ConstraintPrimitive& p);
ConstraintPrimitive primitive_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j, int indent = -1);

/// Throws ConfigError naming `what` when `key` is absent.
const Json& require(const Json& j, const std::string& key, const std::string& what);

}  // namespace dpcc
