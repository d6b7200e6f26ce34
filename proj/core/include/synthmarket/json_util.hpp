#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace synthmarket::json_util {

nlohmann::json to_array(const Eigen::VectorXd& v);
nlohmann::json to_row_major(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from(const nlohmann::json& j, Eigen::Index expected_size = -1);
Eigen::MatrixXd matrix_from_row_major(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols);

/// Non-finite doubles are written as null, read back as NaN.
nlohmann::json number_or_null(double x);
double number_or_nan(const nlohmann::json& j);

nlohmann::json read_file(const std::filesystem::path& path);
/// Pretty-printed, newline-terminated.
void write_file(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace synthmarket::json_util
