#pragma once

#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "synthmarket/spectral.hpp"

namespace synthmarket {

/// Column i multiplied by lambda_i^(-exponent). Exponent 0.5 gives unit
/// variance columns; 1.0 is the literal 1/lambda rule.
Eigen::MatrixXd scale_factors(const Eigen::MatrixXd& factors, const Eigen::VectorXd& eigvals, double exponent);
Eigen::MatrixXd scale_factors(const Decomposition& decomposition, const FactorModel& model, double exponent);

/// Inverse of scale_factors.
Eigen::MatrixXd unscale_factors(const Eigen::MatrixXd& scaled, const Eigen::VectorXd& eigvals, double exponent);

struct FactorFeatures {
    double skewness = 0.0;
    double kurtosis = 0.0;  // excess
    double eigenvalue = 0.0;
    double volatility_clustering = 0.0;
    double leverage = 0.0;

    Eigen::VectorXd as_vector() const;
};

/// The five clustering features of one scaled factor series (scores over 63 lags).
FactorFeatures features(const Eigen::Ref<const Eigen::VectorXd>& scaled_col, double eigenvalue);

/// m x 5 feature matrix, one row per factor.
Eigen::MatrixXd feature_matrix(const Eigen::MatrixXd& scaled, const Eigen::VectorXd& eigvals);

/// Partition of factors 0..m-1 into clusters 0..n_c-1. Cluster ids are
/// ordered by their smallest member.
struct Clustering {
    std::vector<int> assignment;
    int n_clusters = 0;

    std::vector<int> members(int cluster) const;
    int n_factors() const { return static_cast<int>(assignment.size()); }
};

/// Ward-linkage agglomerative clustering on per-column z-scored features,
/// cut at n_c clusters. Equal merge costs resolve toward the pair with the
/// lowest smallest-member indices.
Clustering cluster(const Eigen::MatrixXd& features, int n_clusters);

/// All n - s + 1 overlapping windows of length s of one series, one per row.
Eigen::MatrixXd sliding_windows(const Eigen::Ref<const Eigen::VectorXd>& series, Eigen::Index s);

/// Per-cluster row-concatenation of the member factors' windows, members in
/// ascending factor order.
std::vector<Eigen::MatrixXd> build_training_sets(const Eigen::MatrixXd& scaled, const Clustering& clustering,
                                                 Eigen::Index s = 63);

/// {"1": [factor indices...], ...} with 1-based cluster ids and factor indices.
nlohmann::json to_json(const Clustering& clustering);
Clustering clustering_from_json(const nlohmann::json& j, int n_factors);

}  // namespace synthmarket
