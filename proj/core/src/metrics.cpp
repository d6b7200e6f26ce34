#include "synthmarket/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "synthmarket/errors.hpp"
#include "synthmarket/json_util.hpp"

namespace synthmarket {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double apply(Transform g, double x) {
    switch (g) {
        case Transform::identity: return x;
        case Transform::abs: return std::abs(x);
        case Transform::square: return x * x;
    }
    return x;
}

// ceil() that ignores floating noise just above an integer (0.2 * 5 = 1.0000000000000002).
Eigen::Index robust_ceil(double x) {
    const double r = std::round(x);
    if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<Eigen::Index>(r);
    return static_cast<Eigen::Index>(std::ceil(x));
}

}  // namespace

double acf(const Eigen::Ref<const Eigen::VectorXd>& x, Transform g1, Transform g2, int lag) {
    const Eigen::Index n = x.size();
    if (lag < 1 || lag >= n - 1) throw InputError("acf: lag " + std::to_string(lag) + " out of range for length " + std::to_string(n));
    const Eigen::Index m = n - lag;
    Eigen::ArrayXd a(m), b(m);
    for (Eigen::Index t = 0; t < m; ++t) {
        a(t) = apply(g1, x(t));
        b(t) = apply(g2, x(t + lag));
    }
    a -= a.mean();
    b -= b.mean();
    const double saa = a.square().sum();
    const double sbb = b.square().sum();
    if (!(saa > 0.0) || !(sbb > 0.0)) return kNaN;
    return (a * b).sum() / std::sqrt(saa * sbb);
}

std::vector<double> acf_curve(const Eigen::Ref<const Eigen::VectorXd>& x, const AcfSpec& spec) {
    if (spec.max_lag < 1 || spec.max_lag >= x.size() - 1) throw InputError("acf: max_lag must be < series length - 1");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(spec.max_lag));
    for (int tau = 1; tau <= spec.max_lag; ++tau) out.push_back(acf(x, spec.g1, spec.g2, tau));
    return out;
}

double clustering_score(const Eigen::Ref<const Eigen::VectorXd>& x, ScoreKind kind, const ScoreOptions& options) {
    if (x.size() <= options.max_lag + 1) {
        throw InputError("clustering_score: series length " + std::to_string(x.size()) + " must exceed max_lag + 1");
    }
    const Transform g1 = kind == ScoreKind::volatility_clustering ? Transform::square : Transform::identity;
    const auto curve = acf_curve(x, AcfSpec{g1, Transform::square, options.max_lag});
    double sum_sq = 0.0;
    for (double r : curve) {
        if (std::isnan(r)) return kNaN;
        sum_sq += r * r;
    }
    const int window = std::min(options.sign_window, options.max_lag);
    double short_mean = 0.0;
    for (int i = 0; i < window; ++i) short_mean += curve[static_cast<std::size_t>(i)];
    return short_mean < 0.0 ? -sum_sq : sum_sq;
}

double hill_xi(const Eigen::Ref<const Eigen::VectorXd>& returns, int k) {
    if (k < 1) throw InputError("hill_xi: k must be >= 1");
    std::vector<double> neg;
    for (Eigen::Index i = 0; i < returns.size(); ++i)
        if (returns(i) < 0.0) neg.push_back(returns(i));
    if (static_cast<int>(neg.size()) < k + 1) {
        throw InputError("hill_xi: need at least k+1 = " + std::to_string(k + 1) + " negative returns, got " +
                         std::to_string(neg.size()));
    }
    std::partial_sort(neg.begin(), neg.begin() + k, neg.end());
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += std::log(-neg[static_cast<std::size_t>(i)]);
    return acc / k - std::log(-neg[static_cast<std::size_t>(k - 1)]);
}

double wasserstein1(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    if (a.size() == 0 || b.size() == 0) throw InputError("wasserstein1: empty sample");
    std::vector<double> sa(a.data(), a.data() + a.size());
    std::vector<double> sb(b.data(), b.data() + b.size());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    const std::size_t na = sa.size(), nb = sb.size();
    if (na == nb) {
        double acc = 0.0;
        for (std::size_t i = 0; i < na; ++i) acc += std::abs(sa[i] - sb[i]);
        return acc / static_cast<double>(na);
    }
    // Integrate |Qa(u) - Qb(u)| over the merged grid of quantile breakpoints
    // i/na and j/nb, using integer arithmetic on the common denominator na*nb.
    std::size_t i = 0, j = 0;
    std::size_t pos = 0;  // current u times na*nb
    const std::size_t total = na * nb;
    double acc = 0.0;
    while (pos < total) {
        const std::size_t next_a = (i + 1) * nb;
        const std::size_t next_b = (j + 1) * na;
        const std::size_t next = std::min(next_a, next_b);
        acc += static_cast<double>(next - pos) * std::abs(sa[i] - sb[j]);
        pos = next;
        if (next == next_a) ++i;
        if (next == next_b) ++j;
    }
    return acc / static_cast<double>(total);
}

VarEs var_es(const Eigen::Ref<const Eigen::VectorXd>& returns, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("var_es: alpha must lie in (0,1)");
    const Eigen::Index n = returns.size();
    const Eigen::Index min_n = robust_ceil(1.0 / (1.0 - alpha));
    if (n < min_n) {
        throw InputError("var_es: sample of " + std::to_string(n) + " is too small for level " +
                         std::to_string(alpha) + " (need " + std::to_string(min_n) + ")");
    }
    std::vector<double> losses(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) losses[static_cast<std::size_t>(i)] = -returns(i);
    std::sort(losses.begin(), losses.end());
    const Eigen::Index var_rank = std::clamp<Eigen::Index>(robust_ceil(alpha * static_cast<double>(n)), 1, n);
    const Eigen::Index tail = std::clamp<Eigen::Index>(robust_ceil((1.0 - alpha) * static_cast<double>(n)), 1, n);
    VarEs out;
    out.var = losses[static_cast<std::size_t>(var_rank - 1)];
    double acc = 0.0;
    for (Eigen::Index i = n - tail; i < n; ++i) acc += losses[static_cast<std::size_t>(i)];
    out.es = acc / static_cast<double>(tail);
    return out;
}

double corr_distance(const Eigen::MatrixXd& c_sim, const Eigen::MatrixXd& c_hist) {
    if (c_sim.rows() != c_hist.rows() || c_sim.cols() != c_hist.cols() || c_sim.rows() != c_sim.cols()) {
        throw InputError("corr_distance: shape mismatch");
    }
    double acc = 0.0;
    for (Eigen::Index i = 1; i < c_sim.rows(); ++i)
        for (Eigen::Index j = 0; j < i; ++j) {
            const double diff = c_sim(i, j) - c_hist(i, j);
            acc += diff * diff;
        }
    return acc;
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& returns) {
    if (returns.rows() < 2) throw InputError("covariance needs at least 2 rows");
    const Eigen::MatrixXd centered = returns.rowwise() - returns.colwise().mean();
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(returns.rows());
    return (cov + cov.transpose()) * 0.5;
}

Eigen::MatrixXd covariance_to_correlation(const Eigen::MatrixXd& covariance) {
    const Eigen::VectorXd inv_sd = covariance.diagonal().array().sqrt().inverse();
    Eigen::MatrixXd corr = inv_sd.asDiagonal() * covariance * inv_sd.asDiagonal();
    corr.diagonal().setOnes();
    return corr;
}

Eigen::MatrixXd sample_correlation(const Eigen::MatrixXd& returns) {
    return covariance_to_correlation(sample_covariance(returns));
}

Eigen::MatrixXd shrink_to_identity(const Eigen::MatrixXd& covariance, double gamma) {
    const Eigen::Index d = covariance.rows();
    const double mu = covariance.trace() / static_cast<double>(d);
    Eigen::MatrixXd out = (1.0 - gamma) * covariance;
    out.diagonal().array() += gamma * mu;
    return out;
}

Shrinkage ledoit_wolf(const Eigen::MatrixXd& returns) {
    const Eigen::Index n = returns.rows();
    const Eigen::Index d = returns.cols();
    if (n < 2 || d < 1) throw InputError("ledoit_wolf: need n >= 2 and d >= 1");
    const Eigen::MatrixXd x = returns.rowwise() - returns.colwise().mean();
    const Eigen::MatrixXd s = sample_covariance(returns);
    const double mu = s.trace() / static_cast<double>(d);
    Eigen::MatrixXd diff = s;
    diff.diagonal().array() -= mu;
    const double delta2 = diff.squaredNorm() / static_cast<double>(d);
    // beta_bar^2 = (1/n^2) sum_t ||x_t x_t' - S||_F^2 / d, expanded to avoid d x d temporaries:
    // ||x x' - S||^2 = (x'x)^2 - 2 x'Sx + ||S||^2.
    const double s_norm2 = s.squaredNorm();
    double beta_acc = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const Eigen::VectorXd xt = x.row(t).transpose();
        const double xx = xt.squaredNorm();
        beta_acc += xx * xx - 2.0 * xt.dot(s * xt) + s_norm2;
    }
    const double beta2_bar = beta_acc / (static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(d));
    double gamma = 0.0;
    if (delta2 > 0.0) gamma = std::min(beta2_bar, delta2) / delta2;
    gamma = std::clamp(gamma, 0.0, 1.0);
    return Shrinkage{shrink_to_identity(s, gamma), gamma};
}

Eigen::MatrixXd one_factor_corr(const Eigen::MatrixXd& returns) {
    const Eigen::Index d = returns.cols();
    if (d < 2) throw InputError("one_factor_corr: need at least 2 assets");
    const Eigen::MatrixXd c = sample_correlation(returns);
    double acc = 0.0;
    for (Eigen::Index i = 1; i < d; ++i)
        for (Eigen::Index j = 0; j < i; ++j) acc += c(i, j);
    const double rho = acc / (0.5 * static_cast<double>(d) * static_cast<double>(d - 1));
    Eigen::MatrixXd out = Eigen::MatrixXd::Constant(d, d, rho);
    out.diagonal().setOnes();
    return out;
}

Eigen::VectorXd rolling_mean_corr(const Eigen::MatrixXd& returns, Eigen::Index window) {
    const Eigen::Index n = returns.rows();
    const Eigen::Index d = returns.cols();
    if (d < 2) throw InputError("rolling_mean_corr: need at least 2 assets");
    if (window < 2 || window > n) {
        throw InputError("rolling_mean_corr: window " + std::to_string(window) + " too long for " + std::to_string(n) + " rows");
    }
    Eigen::VectorXd out(n - window + 1);
    const double pairs = 0.5 * static_cast<double>(d) * static_cast<double>(d - 1);
    for (Eigen::Index e = window - 1; e < n; ++e) {
        const Eigen::MatrixXd c = sample_correlation(returns.middleRows(e - window + 1, window));
        double acc = 0.0;
        for (Eigen::Index i = 1; i < d; ++i)
            for (Eigen::Index j = 0; j < i; ++j) acc += c(i, j);
        out(e - window + 1) = acc / pairs;
    }
    return out;
}

double skewness(const Eigen::Ref<const Eigen::VectorXd>& x) {
    const Eigen::ArrayXd c = x.array() - x.mean();
    const double m2 = c.square().mean();
    if (!(m2 > 0.0)) return kNaN;
    return c.cube().mean() / std::pow(m2, 1.5);
}

double excess_kurtosis(const Eigen::Ref<const Eigen::VectorXd>& x) {
    const Eigen::ArrayXd c = x.array() - x.mean();
    const double m2 = c.square().mean();
    if (!(m2 > 0.0)) return kNaN;
    return c.square().square().mean() / (m2 * m2) - 3.0;
}

double max_drawdown(const Eigen::Ref<const Eigen::VectorXd>& returns) {
    double wealth = 1.0, peak = 1.0, worst = 0.0;
    for (Eigen::Index i = 0; i < returns.size(); ++i) {
        wealth *= 1.0 + returns(i);
        peak = std::max(peak, wealth);
        worst = std::max(worst, 1.0 - wealth / peak);
    }
    return worst;
}

double sharpe_ratio(const Eigen::Ref<const Eigen::VectorXd>& returns, double periods_per_year) {
    if (returns.size() < 2) throw InputError("sharpe_ratio: need at least 2 observations");
    const double m = returns.mean();
    const double sd = std::sqrt((returns.array() - m).square().mean());
    if (!(sd > 1e-15 * std::max(1.0, std::abs(m)))) {
        if (m > 0) return std::numeric_limits<double>::infinity();
        if (m < 0) return -std::numeric_limits<double>::infinity();
        return 0.0;
    }
    return m / sd * std::sqrt(periods_per_year);
}

Eigen::VectorXd aggregate_returns(const Eigen::Ref<const Eigen::VectorXd>& returns, Eigen::Index block) {
    const Eigen::Index blocks = returns.size() / block;
    Eigen::VectorXd out(blocks);
    for (Eigen::Index b = 0; b < blocks; ++b) {
        double w = 1.0;
        for (Eigen::Index i = 0; i < block; ++i) w *= 1.0 + returns(b * block + i);
        out(b) = w - 1.0;
    }
    return out;
}

void MetricReport::set(const std::string& key, double value) {
    scalars[key] = value;
    if (!std::isfinite(value)) degenerate.insert(key);
    else degenerate.erase(key);
}

nlohmann::json to_json(const MetricReport& report) {
    nlohmann::json j;
    nlohmann::json scalars = nlohmann::json::object();
    for (const auto& [k, v] : report.scalars) scalars[k] = json_util::number_or_null(v);
    j["scalars"] = scalars;
    nlohmann::json series = nlohmann::json::object();
    for (const auto& [k, v] : report.series) {
        nlohmann::json a = nlohmann::json::array();
        for (double x : v) a.push_back(json_util::number_or_null(x));
        series[k] = a;
    }
    j["series"] = series;
    j["degenerate"] = std::vector<std::string>(report.degenerate.begin(), report.degenerate.end());
    return j;
}

const std::vector<std::string>& portfolio_stat_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k = {"ann_return", "ann_volatility", "sharpe", "skewness", "kurtosis", "max_drawdown"};
        for (const char* kind : {"var", "es"})
            for (const char* level : {"95", "99"})
                for (const char* horizon : {"daily", "weekly", "monthly"})
                    k.push_back(std::string(kind) + level + "_" + horizon);
        k.push_back("volatility_clustering");
        k.push_back("leverage");
        return k;
    }();
    return keys;
}

MetricReport portfolio_stats(const Eigen::Ref<const Eigen::VectorXd>& returns, double periods_per_year) {
    if (returns.size() < 2) throw InputError("portfolio_stats: need at least 2 observations");
    MetricReport report;
    const double m = returns.mean();
    const double sd = std::sqrt((returns.array() - m).square().mean());
    report.set("ann_return", m * periods_per_year);
    report.set("ann_volatility", sd * std::sqrt(periods_per_year));
    const bool flat = sd == 0.0 || sd <= 1e-12 * std::abs(m);
    report.set("sharpe", flat ? kNaN : m / sd * std::sqrt(periods_per_year));
    report.set("skewness", skewness(returns));
    report.set("kurtosis", excess_kurtosis(returns));
    report.set("max_drawdown", max_drawdown(returns));
    const std::pair<const char*, Eigen::Index> horizons[] = {{"daily", 1}, {"weekly", 5}, {"monthly", 21}};
    for (const auto& [name, block] : horizons) {
        const Eigen::VectorXd agg = block == 1 ? Eigen::VectorXd(returns) : aggregate_returns(returns, block);
        for (const auto& [level, alpha] : {std::pair<const char*, double>{"95", 0.95}, {"99", 0.99}}) {
            double v = kNaN, e = kNaN;
            try {
                const auto r = var_es(agg, alpha);
                v = r.var;
                e = r.es;
            } catch (const InputError&) {
                // too few aggregated periods for this level
            }
            report.set(std::string("var") + level + "_" + name, v);
            report.set(std::string("es") + level + "_" + name, e);
        }
    }
    double vc = kNaN, lev = kNaN;
    if (returns.size() > 64) {
        vc = clustering_score(returns, ScoreKind::volatility_clustering);
        lev = clustering_score(returns, ScoreKind::leverage);
    }
    report.set("volatility_clustering", vc);
    report.set("leverage", lev);
    return report;
}

}  // namespace synthmarket
