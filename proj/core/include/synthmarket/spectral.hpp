#pragma once

#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "synthmarket/panel.hpp"

namespace synthmarket {

/// Spectral factor model of a standardized panel.
///
/// eigvecs holds P with columns sorted by descending eigenvalue; each column
/// is signed so that its first non-negligible component is positive. The
/// loading matrix is the first m columns of P.
struct FactorModel {
    Eigen::MatrixXd eigvecs;
    Eigen::VectorXd eigvals;
    int m = 0;
    Eigen::VectorXd mu_hat;
    Eigen::VectorXd sigma_hat;
    double lambda_plus = 0.0;
    std::vector<std::string> tickers;
    Eigen::Index n_obs = 0;

    Eigen::Index dim() const { return eigvals.size(); }
    Eigen::MatrixXd loadings() const { return eigvecs.leftCols(m); }
};

struct Decomposition {
    Eigen::MatrixXd factors;    // n x m, F = Xbar * P_{1:m}
    Eigen::MatrixXd residuals;  // n x d, Z = Xbar - F * P_{1:m}^T
};

/// Sigma = Xbar' Xbar / n of a standardized panel.
Eigen::MatrixXd correlation_matrix(const StandardizedPanel& panel);
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& returns);

/// Upper Marchenko-Pastur edge sigma2 * (1 + sqrt(d/n))^2. Requires n >= d.
double mp_edge(Eigen::Index n, Eigen::Index d, double sigma2 = 1.0);

/// Number of eigenvalues strictly above lambda_plus. Throws when none is.
int select_m(const Eigen::VectorXd& eigvals, double lambda_plus);

struct Eigenpairs {
    Eigen::MatrixXd vectors;
    Eigen::VectorXd values;
};

/// Symmetric eigendecomposition sorted descending, with the sign convention above.
Eigenpairs sorted_eigen(const Eigen::MatrixXd& symmetric);

/// Full pipeline: correlation matrix, eigendecomposition, MP edge, m.
/// If `m_override` > 0 it replaces the MP selection.
FactorModel fit_factor_model(const StandardizedPanel& panel, double sigma2 = 1.0, int m_override = 0);

Decomposition decompose(const StandardizedPanel& panel, const FactorModel& model);

nlohmann::json to_json(const FactorModel& model);
FactorModel factor_model_from_json(const nlohmann::json& j);

}  // namespace synthmarket
