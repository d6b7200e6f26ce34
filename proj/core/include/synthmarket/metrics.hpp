#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace synthmarket {

enum class Transform { identity, abs, square };

struct AcfSpec {
    Transform g1 = Transform::identity;
    Transform g2 = Transform::identity;
    int max_lag = 63;
};

/// Pearson correlation of g1(x_t) and g2(x_{t+lag}) over the n - lag aligned
/// pairs. Returns NaN when either transformed subseries has zero variance.
double acf(const Eigen::Ref<const Eigen::VectorXd>& x, Transform g1, Transform g2, int lag);

/// acf for lags 1..spec.max_lag.
std::vector<double> acf_curve(const Eigen::Ref<const Eigen::VectorXd>& x, const AcfSpec& spec);

enum class ScoreKind { volatility_clustering, leverage };

struct ScoreOptions {
    int max_lag = 63;
    /// The score is signed by the mean autocorrelation over lags 1..sign_window.
    int sign_window = 10;
};

/// Sum of squared autocorrelations over lags 1..max_lag, using (square, square)
/// for volatility clustering and (identity, square) for leverage, signed by
/// the short-lag mean. NaN when any lag is degenerate.
double clustering_score(const Eigen::Ref<const Eigen::VectorXd>& x, ScoreKind kind, const ScoreOptions& options = {});

/// Hill estimator on the left tail. Returns xi; the tail index is 1/xi
/// (infinite when all selected losses coincide and xi == 0).
double hill_xi(const Eigen::Ref<const Eigen::VectorXd>& returns, int k);

/// 1-Wasserstein distance between two empirical distributions.
double wasserstein1(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

struct VarEs {
    double var = 0.0;
    double es = 0.0;
};

/// Empirical VaR/ES of losses L = -returns, as positive loss magnitudes.
/// VaR is the ceil(alpha n)-th smallest loss; ES averages the
/// ceil((1 - alpha) n) largest losses.
VarEs var_es(const Eigen::Ref<const Eigen::VectorXd>& returns, double alpha);

/// Sum of squared differences over the strict lower triangle.
double corr_distance(const Eigen::MatrixXd& c_sim, const Eigen::MatrixXd& c_hist);

/// Pearson correlation matrix of the columns (unit diagonal).
Eigen::MatrixXd sample_correlation(const Eigen::MatrixXd& returns);
/// Covariance with divisor n.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& returns);
Eigen::MatrixXd covariance_to_correlation(const Eigen::MatrixXd& covariance);

struct Shrinkage {
    Eigen::MatrixXd covariance;
    double gamma = 0.0;
};

/// Ledoit-Wolf shrinkage of the sample covariance toward (tr/d) I with the
/// optimal-intensity estimator, gamma clipped to [0, 1].
Shrinkage ledoit_wolf(const Eigen::MatrixXd& returns);
/// Same target with a fixed intensity.
Eigen::MatrixXd shrink_to_identity(const Eigen::MatrixXd& covariance, double gamma);

/// Equicorrelation matrix at the mean pairwise in-sample correlation.
Eigen::MatrixXd one_factor_corr(const Eigen::MatrixXd& returns);

/// Mean strict-lower-triangle correlation over each trailing window; one value
/// per window end, n - window + 1 values.
Eigen::VectorXd rolling_mean_corr(const Eigen::MatrixXd& returns, Eigen::Index window = 252);

double skewness(const Eigen::Ref<const Eigen::VectorXd>& x);
double excess_kurtosis(const Eigen::Ref<const Eigen::VectorXd>& x);

/// Largest peak-to-trough loss of the compounded wealth path starting at 1.
double max_drawdown(const Eigen::Ref<const Eigen::VectorXd>& returns);

/// Annualized mean / sd ratio. Zero volatility gives +-inf (0 for a zero mean).
double sharpe_ratio(const Eigen::Ref<const Eigen::VectorXd>& returns, double periods_per_year = 252.0);

/// Non-overlapping compounded returns over blocks of `block` periods; a
/// trailing partial block is dropped.
Eigen::VectorXd aggregate_returns(const Eigen::Ref<const Eigen::VectorXd>& returns, Eigen::Index block);

struct MetricReport {
    std::map<std::string, double> scalars;
    std::map<std::string, std::vector<double>> series;
    std::set<std::string> degenerate;

    void set(const std::string& key, double value);
    double at(const std::string& key) const { return scalars.at(key); }
    bool is_degenerate(const std::string& key) const { return degenerate.count(key) != 0; }
};

nlohmann::json to_json(const MetricReport& report);

/// Equal-weight-portfolio style summary: annualized return/vol, Sharpe,
/// skewness, excess kurtosis, max drawdown, VaR/ES 95/99 at daily, weekly (5)
/// and monthly (21) horizons, volatility clustering and leverage scores.
MetricReport portfolio_stats(const Eigen::Ref<const Eigen::VectorXd>& returns, double periods_per_year = 252.0);

/// Ordered names of the portfolio_stats scalars (table row order).
const std::vector<std::string>& portfolio_stat_keys();

}  // namespace synthmarket
