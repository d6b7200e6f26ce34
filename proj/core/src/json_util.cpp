#include "synthmarket/json_util.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "synthmarket/errors.hpp"

namespace synthmarket::json_util {

nlohmann::json to_array(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v(i)));
    return a;
}

nlohmann::json to_row_major(const Eigen::MatrixXd& m) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(number_or_null(m(i, j)));
    return a;
}

Eigen::VectorXd vector_from(const nlohmann::json& j, Eigen::Index expected_size) {
    if (!j.is_array()) throw InputError("expected a JSON array of numbers");
    if (expected_size >= 0 && static_cast<Eigen::Index>(j.size()) != expected_size) {
        throw InputError("array has " + std::to_string(j.size()) + " entries, expected " +
                         std::to_string(expected_size));
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_or_nan(j[i]);
    return v;
}

Eigen::MatrixXd matrix_from_row_major(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
    Eigen::VectorXd flat = vector_from(j, rows * cols);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = flat(i * cols + k);
    return m;
}

nlohmann::json number_or_null(double x) {
    if (std::isfinite(x)) return x;
    return nullptr;
}

double number_or_nan(const nlohmann::json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

nlohmann::json read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

void write_file(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

}  // namespace synthmarket::json_util
