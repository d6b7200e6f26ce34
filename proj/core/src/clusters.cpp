#include "synthmarket/clusters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "synthmarket/errors.hpp"
#include "synthmarket/metrics.hpp"

namespace synthmarket {

Eigen::MatrixXd scale_factors(const Eigen::MatrixXd& factors, const Eigen::VectorXd& eigvals, double exponent) {
    if (eigvals.size() < factors.cols()) throw InputError("scale_factors: fewer eigenvalues than factors");
    Eigen::MatrixXd out(factors.rows(), factors.cols());
    for (Eigen::Index i = 0; i < factors.cols(); ++i) {
        if (!(eigvals(i) > 0.0)) {
            throw InputError("scale_factors: eigenvalue of factor " + std::to_string(i + 1) + " is not positive");
        }
        out.col(i) = factors.col(i) * std::pow(eigvals(i), -exponent);
    }
    return out;
}

Eigen::MatrixXd scale_factors(const Decomposition& decomposition, const FactorModel& model, double exponent) {
    return scale_factors(decomposition.factors, model.eigvals.head(model.m), exponent);
}

Eigen::MatrixXd unscale_factors(const Eigen::MatrixXd& scaled, const Eigen::VectorXd& eigvals, double exponent) {
    if (eigvals.size() < scaled.cols()) throw InputError("unscale_factors: fewer eigenvalues than factors");
    Eigen::MatrixXd out(scaled.rows(), scaled.cols());
    for (Eigen::Index i = 0; i < scaled.cols(); ++i) out.col(i) = scaled.col(i) * std::pow(eigvals(i), exponent);
    return out;
}

Eigen::VectorXd FactorFeatures::as_vector() const {
    Eigen::VectorXd v(5);
    v << skewness, kurtosis, eigenvalue, volatility_clustering, leverage;
    return v;
}

FactorFeatures features(const Eigen::Ref<const Eigen::VectorXd>& scaled_col, double eigenvalue) {
    if (scaled_col.size() <= 64) throw InputError("features: need more than 64 observations");
    FactorFeatures f;
    f.skewness = skewness(scaled_col);
    f.kurtosis = excess_kurtosis(scaled_col);
    f.eigenvalue = eigenvalue;
    f.volatility_clustering = clustering_score(scaled_col, ScoreKind::volatility_clustering);
    f.leverage = clustering_score(scaled_col, ScoreKind::leverage);
    const auto v = f.as_vector();
    if (!v.allFinite()) throw ComputationError("features: degenerate factor series (non-finite feature)");
    return f;
}

Eigen::MatrixXd feature_matrix(const Eigen::MatrixXd& scaled, const Eigen::VectorXd& eigvals) {
    Eigen::MatrixXd out(scaled.cols(), 5);
    for (Eigen::Index i = 0; i < scaled.cols(); ++i) out.row(i) = features(scaled.col(i), eigvals(i)).as_vector().transpose();
    return out;
}

std::vector<int> Clustering::members(int c) const {
    std::vector<int> out;
    for (int i = 0; i < n_factors(); ++i)
        if (assignment[static_cast<std::size_t>(i)] == c) out.push_back(i);
    return out;
}

Clustering cluster(const Eigen::MatrixXd& features, int n_clusters) {
    const int m = static_cast<int>(features.rows());
    if (n_clusters < 1 || n_clusters > m) {
        throw InputError("cluster: n_c = " + std::to_string(n_clusters) + " outside [1, " + std::to_string(m) + "]");
    }
    Eigen::MatrixXd z = features;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double mu = z.col(c).mean();
        const double sd = std::sqrt((z.col(c).array() - mu).square().mean());
        z.col(c) = sd > 0.0 ? Eigen::VectorXd((z.col(c).array() - mu) / sd) : Eigen::VectorXd::Zero(z.rows());
    }

    struct Node {
        std::vector<int> members;  // sorted
        Eigen::VectorXd centroid;
    };
    std::vector<Node> nodes;
    for (int i = 0; i < m; ++i) nodes.push_back(Node{{i}, z.row(i).transpose()});

    while (static_cast<int>(nodes.size()) > n_clusters) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 1;
        // Nodes stay ordered by smallest member, so scanning (i < j) in order
        // and keeping the first strict minimum applies the index tie-break.
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            for (std::size_t j = i + 1; j < nodes.size(); ++j) {
                const double na = static_cast<double>(nodes[i].members.size());
                const double nb = static_cast<double>(nodes[j].members.size());
                const double cost = na * nb / (na + nb) * (nodes[i].centroid - nodes[j].centroid).squaredNorm();
                if (std::isinf(best) || cost < best - 1e-12 * std::max(1.0, best)) {
                    best = cost;
                    bi = i;
                    bj = j;
                }
            }
        }
        Node& a = nodes[bi];
        Node& b = nodes[bj];
        const double na = static_cast<double>(a.members.size());
        const double nb = static_cast<double>(b.members.size());
        a.centroid = (na * a.centroid + nb * b.centroid) / (na + nb);
        a.members.insert(a.members.end(), b.members.begin(), b.members.end());
        std::sort(a.members.begin(), a.members.end());
        nodes.erase(nodes.begin() + static_cast<std::ptrdiff_t>(bj));
        std::sort(nodes.begin(), nodes.end(),
                  [](const Node& x, const Node& y) { return x.members.front() < y.members.front(); });
    }

    Clustering out;
    out.n_clusters = n_clusters;
    out.assignment.assign(static_cast<std::size_t>(m), -1);
    for (std::size_t c = 0; c < nodes.size(); ++c)
        for (int f : nodes[c].members) out.assignment[static_cast<std::size_t>(f)] = static_cast<int>(c);
    return out;
}

Eigen::MatrixXd sliding_windows(const Eigen::Ref<const Eigen::VectorXd>& series, Eigen::Index s) {
    const Eigen::Index n = series.size();
    if (s < 1 || n < s) throw InputError("sliding_windows: series of length " + std::to_string(n) + " shorter than window " + std::to_string(s));
    Eigen::MatrixXd out(n - s + 1, s);
    for (Eigen::Index r = 0; r < n - s + 1; ++r) out.row(r) = series.segment(r, s).transpose();
    return out;
}

std::vector<Eigen::MatrixXd> build_training_sets(const Eigen::MatrixXd& scaled, const Clustering& clustering,
                                                 Eigen::Index s) {
    if (clustering.n_factors() != scaled.cols()) throw InputError("build_training_sets: clustering/factor count mismatch");
    const Eigen::Index n = scaled.rows();
    if (n < s) throw InputError("build_training_sets: n = " + std::to_string(n) + " < s = " + std::to_string(s));
    const Eigen::Index per_factor = n - s + 1;
    std::vector<Eigen::MatrixXd> sets;
    for (int c = 0; c < clustering.n_clusters; ++c) {
        const auto members = clustering.members(c);
        Eigen::MatrixXd set(per_factor * static_cast<Eigen::Index>(members.size()), s);
        for (std::size_t k = 0; k < members.size(); ++k) {
            set.middleRows(static_cast<Eigen::Index>(k) * per_factor, per_factor) = sliding_windows(scaled.col(members[k]), s);
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

nlohmann::json to_json(const Clustering& clustering) {
    nlohmann::json j = nlohmann::json::object();
    for (int c = 0; c < clustering.n_clusters; ++c) {
        std::vector<int> one_based;
        for (int f : clustering.members(c)) one_based.push_back(f + 1);
        j[std::to_string(c + 1)] = one_based;
    }
    return j;
}

Clustering clustering_from_json(const nlohmann::json& j, int n_factors) {
    if (!j.is_object()) throw InputError("clustering document must be an object");
    Clustering out;
    out.n_clusters = static_cast<int>(j.size());
    out.assignment.assign(static_cast<std::size_t>(n_factors), -1);
    for (int c = 0; c < out.n_clusters; ++c) {
        const auto key = std::to_string(c + 1);
        if (!j.contains(key)) throw InputError("clustering document is missing cluster " + key);
        const auto& list = j.at(key);
        if (list.empty()) throw InputError("cluster " + key + " is empty");
        for (int f : list.get<std::vector<int>>()) {
            if (f < 1 || f > n_factors || out.assignment[static_cast<std::size_t>(f - 1)] != -1) {
                throw InputError("clustering document is not a partition of 1.." + std::to_string(n_factors));
            }
            out.assignment[static_cast<std::size_t>(f - 1)] = c;
        }
    }
    for (int a : out.assignment)
        if (a < 0) throw InputError("clustering document is not a partition of 1.." + std::to_string(n_factors));
    return out;
}

}  // namespace synthmarket
