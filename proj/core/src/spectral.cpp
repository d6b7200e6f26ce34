#include "synthmarket/spectral.hpp"

#include <cmath>
#include <numeric>

#include "synthmarket/errors.hpp"
#include "synthmarket/json_util.hpp"

namespace synthmarket {

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& standardized) {
    const double n = static_cast<double>(standardized.rows());
    Eigen::MatrixXd sigma = (standardized.transpose() * standardized) / n;
    // Symmetrize away rounding so downstream eigensolvers see an exact symmetric matrix.
    return (sigma + sigma.transpose()) * 0.5;
}

Eigen::MatrixXd correlation_matrix(const StandardizedPanel& panel) { return correlation_matrix(panel.values); }

double mp_edge(Eigen::Index n, Eigen::Index d, double sigma2) {
    if (d < 1 || n < 1) throw InputError("mp_edge: n and d must be positive");
    if (n < d) {
        throw InputError("mp_edge: q = n/d = " + std::to_string(static_cast<double>(n) / static_cast<double>(d)) +
                         " < 1 is outside the Marchenko-Pastur regime used here");
    }
    if (!(sigma2 > 0.0)) throw InputError("mp_edge: sigma2 must be positive");
    const double r = std::sqrt(static_cast<double>(d) / static_cast<double>(n));
    return sigma2 * (1.0 + r) * (1.0 + r);
}

int select_m(const Eigen::VectorXd& eigvals, double lambda_plus) {
    for (Eigen::Index i = 1; i < eigvals.size(); ++i) {
        if (eigvals(i) > eigvals(i - 1)) throw InputError("select_m: eigenvalues must be sorted descending");
    }
    int m = 0;
    for (Eigen::Index i = 0; i < eigvals.size(); ++i)
        if (eigvals(i) > lambda_plus) ++m;
    if (m == 0) throw ComputationError("no factor exceeds MP edge " + std::to_string(lambda_plus));
    return m;
}

Eigenpairs sorted_eigen(const Eigen::MatrixXd& symmetric) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric);
    if (solver.info() != Eigen::Success) throw ComputationError("symmetric eigensolver failed");
    const Eigen::Index d = symmetric.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    const auto& ev = solver.eigenvalues();
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return ev(a) > ev(b); });
    Eigenpairs out{Eigen::MatrixXd(d, d), Eigen::VectorXd(d)};
    for (Eigen::Index k = 0; k < d; ++k) {
        const Eigen::Index src = order[static_cast<std::size_t>(k)];
        out.values(k) = ev(src);
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        for (Eigen::Index i = 0; i < d; ++i) {
            if (std::abs(v(i)) > 1e-12) {
                if (v(i) < 0) v = -v;
                break;
            }
        }
        out.vectors.col(k) = v;
    }
    return out;
}

FactorModel fit_factor_model(const StandardizedPanel& panel, double sigma2, int m_override) {
    const Eigen::MatrixXd sigma = correlation_matrix(panel);
    auto pairs = sorted_eigen(sigma);
    FactorModel model;
    model.eigvecs = std::move(pairs.vectors);
    // Tiny negative eigenvalues are rounding noise on a PSD matrix.
    model.eigvals = pairs.values.cwiseMax(0.0);
    model.mu_hat = panel.mu_hat;
    model.sigma_hat = panel.sigma_hat;
    model.tickers = panel.base.tickers();
    model.n_obs = panel.values.rows();
    model.lambda_plus = mp_edge(panel.values.rows(), panel.values.cols(), sigma2);
    if (m_override > 0) {
        if (m_override > model.dim()) throw InputError("factor count override exceeds dimension");
        model.m = m_override;
    } else {
        model.m = select_m(model.eigvals, model.lambda_plus);
    }
    return model;
}

Decomposition decompose(const StandardizedPanel& panel, const FactorModel& model) {
    if (panel.values.cols() != model.dim()) {
        throw InputError("decompose: panel has " + std::to_string(panel.values.cols()) +
                         " columns, model has dimension " + std::to_string(model.dim()));
    }
    Decomposition out;
    const Eigen::MatrixXd beta = model.loadings();
    out.factors = panel.values * beta;
    out.residuals = panel.values - out.factors * beta.transpose();
    return out;
}

nlohmann::json to_json(const FactorModel& model) {
    nlohmann::json j;
    j["format"] = "synthmarket.factor_model";
    j["version"] = 1;
    j["d"] = model.dim();
    j["m"] = model.m;
    j["n_obs"] = model.n_obs;
    j["lambda_plus"] = model.lambda_plus;
    j["tickers"] = model.tickers;
    j["eigvals"] = json_util::to_array(model.eigvals);
    j["mu_hat"] = json_util::to_array(model.mu_hat);
    j["sigma_hat"] = json_util::to_array(model.sigma_hat);
    j["eigvecs_row_major"] = json_util::to_row_major(model.eigvecs);
    return j;
}

FactorModel factor_model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "synthmarket.factor_model" || j.value("version", 0) != 1) {
        throw InputError("not a version-1 factor model document");
    }
    FactorModel model;
    const Eigen::Index d = j.at("d").get<Eigen::Index>();
    model.m = j.at("m").get<int>();
    model.n_obs = j.at("n_obs").get<Eigen::Index>();
    model.lambda_plus = j.at("lambda_plus").get<double>();
    model.tickers = j.at("tickers").get<std::vector<std::string>>();
    model.eigvals = json_util::vector_from(j.at("eigvals"), d);
    model.mu_hat = json_util::vector_from(j.at("mu_hat"), d);
    model.sigma_hat = json_util::vector_from(j.at("sigma_hat"), d);
    model.eigvecs = json_util::matrix_from_row_major(j.at("eigvecs_row_major"), d, d);
    if (model.m < 1 || model.m > d || static_cast<Eigen::Index>(model.tickers.size()) != d) {
        throw InputError("inconsistent factor model document");
    }
    return model;
}

}  // namespace synthmarket
