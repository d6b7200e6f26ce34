#include "synthmarket/portfolio.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "synthmarket/errors.hpp"
#include "synthmarket/spectral.hpp"

namespace synthmarket {

Eigen::MatrixXd ClippedRiskModel::dense() const {
    Eigen::MatrixXd sigma = P * delta.asDiagonal() * P.transpose();
    sigma.noalias() += lambda_c * Q * Q.transpose();
    return 0.5 * (sigma + sigma.transpose());
}

void ClippedRiskModel::validate() const {
    const Eigen::Index d = P.rows();
    if (delta.size() != P.cols() || Q.rows() != d || P.cols() + Q.cols() != d) {
        throw InputError("ClippedRiskModel: inconsistent shapes");
    }
    Eigen::MatrixXd basis(d, d);
    basis << P, Q;
    if ((basis.transpose() * basis - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-8) {
        throw InputError("ClippedRiskModel: [P, Q] is not orthogonal");
    }
    if (!(delta.minCoeff() > 0.0) || !(lambda_c > 0.0)) throw InputError("ClippedRiskModel: eigenvalues must be positive");
    if (Q.cols() > 0 && !(lambda_c < delta.minCoeff())) {
        throw InputError("ClippedRiskModel: lambda_c must lie below the retained eigenvalues");
    }
}

ClippedRiskModel clip_covariance(const Eigen::MatrixXd& sigma, Eigen::Index m) {
    const Eigen::Index d = sigma.rows();
    if (sigma.cols() != d) throw InputError("clip_covariance: matrix must be square");
    if (m < 1 || m >= d) throw InputError("clip_covariance: need 1 <= m < d");
    const Eigenpairs eig = sorted_eigen(0.5 * (sigma + sigma.transpose()));
    const Eigen::VectorXd& vals = eig.values;
    const Eigen::MatrixXd& vecs = eig.vectors;
    ClippedRiskModel model;
    model.P = vecs.leftCols(m);
    model.delta = vals.head(m);
    model.Q = vecs.rightCols(d - m);
    model.lambda_c = (vals.sum() - vals.head(m).sum()) / static_cast<double>(d - m);
    model.validate();
    return model;
}

double PrincipalSolution::risk(const Eigen::VectorXd& delta, double lambda_c) const {
    return v_P.dot(delta.cwiseProduct(v_P)) + lambda_c * v_Q.squaredNorm();
}

PrincipalSolution markowitz_principal(const Eigen::VectorXd& y_P, const Eigen::VectorXd& y_Q,
                                      const Eigen::VectorXd& delta, double lambda_c, double s) {
    if (!(s > 0.0)) throw InputError("markowitz_principal: target volatility must be positive");
    if (delta.size() != y_P.size()) throw InputError("markowitz_principal: y_P and delta differ in size");
    if (!(delta.size() == 0 || delta.minCoeff() > 0.0) || !(lambda_c > 0.0)) {
        throw InputError("markowitz_principal: eigenvalues must be positive");
    }
    const Eigen::VectorXd w_P = y_P.cwiseQuotient(delta);
    const double q = y_P.dot(w_P) + y_Q.squaredNorm() / lambda_c;
    if (!(q > 0.0)) throw InputError("markowitz_principal: expected returns are all zero");
    PrincipalSolution sol;
    sol.gamma = std::sqrt(q) / s;
    sol.v_P = w_P / sol.gamma;
    sol.v_Q = y_Q / (sol.gamma * lambda_c);
    return sol;
}

Eigen::VectorXd clipped_inverse_apply(const ClippedRiskModel& model, const Eigen::VectorXd& z) {
    if (z.size() != model.dim()) throw InputError("clipped_inverse_apply: dimension mismatch");
    const Eigen::VectorXd pz = model.P.transpose() * z;
    const Eigen::VectorXd qz = model.Q.transpose() * z;
    const Eigen::VectorXd inner = model.P * (model.lambda_c * pz.cwiseQuotient(model.delta)) + model.Q * qz;
    return inner / model.lambda_c;
}

namespace {

void check_k(const ClippedRiskModel& model, Eigen::Index k) {
    if (k <= 1) throw InputError("perturbation_error: k must exceed 1 (the rotation is taken against P_1)");
    if (k > model.m()) throw InputError("perturbation_error: k exceeds the number of retained eigenvectors");
    if (model.delta(0) == 0.0 || model.delta(k - 1) == 0.0) throw InputError("perturbation_error: zero eigenvalue");
}

}  // namespace

Eigen::MatrixXd perturbed_covariance(const ClippedRiskModel& model, Eigen::Index k, double epsilon) {
    check_k(model, k);
    const double c = std::cos(epsilon), s = std::sin(epsilon);
    ClippedRiskModel rotated = model;
    const Eigen::VectorXd p1 = model.P.col(0);
    const Eigen::VectorXd pk = model.P.col(k - 1);
    rotated.P.col(0) = -s * pk + c * p1;
    rotated.P.col(k - 1) = c * pk + s * p1;
    return rotated.dense();
}

double perturbation_error(const ClippedRiskModel& model, Eigen::Index k, double epsilon, const Eigen::VectorXd& z) {
    check_k(model, k);
    if (z.size() != model.dim()) throw InputError("perturbation_error: dimension mismatch");
    const double coef = 1.0 / model.delta(0) - 1.0 / model.delta(k - 1);
    const double sin_e = std::sin(epsilon);
    const double a = z.dot(model.P.col(0));
    const double b = z.dot(model.P.col(k - 1));
    return coef * coef * sin_e * sin_e * (b * b + a * a);
}

double perturbation_error_dense(const ClippedRiskModel& model, Eigen::Index k, double epsilon,
                                const Eigen::VectorXd& z) {
    const Eigen::MatrixXd perturbed = perturbed_covariance(model, k, epsilon);
    const Eigen::MatrixXd original = model.dense();
    const Eigen::VectorXd x1 = perturbed.ldlt().solve(z);
    const Eigen::VectorXd x0 = original.ldlt().solve(z);
    return (x1 - x0).squaredNorm();
}

AmplificationDemo eigen_error_amplification_demo() {
    constexpr Eigen::Index d = 10;
    constexpr Eigen::Index m = 4;
    AmplificationDemo demo;
    const Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(d, d);
    demo.model.P = basis.leftCols(m);
    demo.model.Q = basis.rightCols(d - m);
    demo.model.delta.resize(m);
    demo.model.delta << 20.0, 10.0, 2.0, 0.8;
    demo.model.lambda_c = 0.5;
    demo.model.validate();
    // Equal exposure to the second and the last retained eigenvector.
    demo.z = Eigen::VectorXd::Zero(d);
    demo.z(0) = 1.0;
    demo.z(1) = 1.0;
    demo.z(m - 1) = 1.0;
    demo.epsilon = std::numbers::pi / 36.0;
    demo.error_second = perturbation_error(demo.model, 2, demo.epsilon, demo.z);
    demo.error_last = perturbation_error(demo.model, m, demo.epsilon, demo.z);
    return demo;
}

Eigen::MatrixXd w2_optimal_rank_k(const Eigen::MatrixXd& sigma, Eigen::Index k) {
    const Eigen::Index d = sigma.rows();
    if (sigma.cols() != d) throw InputError("w2_optimal_rank_k: matrix must be square");
    if (k < 1 || k > d) throw InputError("w2_optimal_rank_k: need 1 <= k <= d");
    if (k == d) return sigma;
    const Eigenpairs eig = sorted_eigen(0.5 * (sigma + sigma.transpose()));
    const Eigen::VectorXd& vals = eig.values;
    const Eigen::MatrixXd& vecs = eig.vectors;
    return vecs.leftCols(k) * vals.head(k).asDiagonal() * vecs.leftCols(k).transpose();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double gaussian_w2_squared(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw InputError("gaussian_w2_squared: shape mismatch");
    const Eigen::MatrixXd ra = psd_sqrt(a);
    const Eigen::MatrixXd cross = psd_sqrt(ra * b * ra);
    return std::max(0.0, a.trace() + b.trace() - 2.0 * cross.trace());
}

}  // namespace synthmarket
