#pragma once

#include <Eigen/Dense>

namespace synthmarket {

/// Sigma = P diag(delta) P' + lambda_c Q Q'.
struct ClippedRiskModel {
    Eigen::MatrixXd P;      // d x m
    Eigen::VectorXd delta;  // m, descending
    Eigen::MatrixXd Q;      // d x (d - m)
    double lambda_c = 0.0;

    Eigen::Index dim() const { return P.rows(); }
    Eigen::Index m() const { return P.cols(); }
    Eigen::MatrixXd dense() const;
    /// Throws InputError when shapes disagree, [P,Q] is not orthogonal within
    /// 1e-8, or lambda_c is not below the smallest retained eigenvalue.
    void validate() const;
};

/// Keeps the top m eigenpairs of a symmetric matrix and replaces the rest by
/// their mean, so the trace is preserved.
ClippedRiskModel clip_covariance(const Eigen::MatrixXd& sigma, Eigen::Index m);

struct PrincipalSolution {
    Eigen::VectorXd v_P;
    Eigen::VectorXd v_Q;
    double gamma = 0.0;

    double risk(const Eigen::VectorXd& delta, double lambda_c) const;
};

/// Closed-form maximizer of y'v subject to v' Sigma v <= s^2 in principal
/// coordinates.
PrincipalSolution markowitz_principal(const Eigen::VectorXd& y_P, const Eigen::VectorXd& y_Q,
                                      const Eigen::VectorXd& delta, double lambda_c, double s);

/// Sigma^{-1} z without forming Sigma.
Eigen::VectorXd clipped_inverse_apply(const ClippedRiskModel& model, const Eigen::VectorXd& z);

/// Covariance with P_1 and P_k (1-based k) rotated by epsilon inside their plane.
Eigen::MatrixXd perturbed_covariance(const ClippedRiskModel& model, Eigen::Index k, double epsilon);

/// Squared error ||Sigma_k^{-1} z - Sigma^{-1} z||^2 caused by rotating P_k
/// against P_1 by epsilon. k is 1-based and must satisfy 1 < k <= m.
double perturbation_error(const ClippedRiskModel& model, Eigen::Index k, double epsilon, const Eigen::VectorXd& z);
/// Same quantity by building the perturbed matrix and solving densely.
double perturbation_error_dense(const ClippedRiskModel& model, Eigen::Index k, double epsilon,
                                const Eigen::VectorXd& z);

/// Fixed configuration where the smallest retained eigenvalue is far below
/// the second: rotating P_m costs much more than rotating P_2.
struct AmplificationDemo {
    ClippedRiskModel model;
    Eigen::VectorXd z;
    double epsilon = 0.0;
    double error_second = 0.0;  // k = 2
    double error_last = 0.0;    // k = m
    double ratio() const { return error_last / error_second; }
};
AmplificationDemo eigen_error_amplification_demo();

/// Eigentruncation keeping the k largest eigenpairs.
Eigen::MatrixXd w2_optimal_rank_k(const Eigen::MatrixXd& sigma, Eigen::Index k);

/// Squared 2-Wasserstein distance between N(0, a) and N(0, b).
double gaussian_w2_squared(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Symmetric PSD square root (negative eigenvalues clamped to zero).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a);

}  // namespace synthmarket
