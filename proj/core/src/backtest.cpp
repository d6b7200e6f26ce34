#include "synthmarket/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "synthmarket/errors.hpp"
#include "synthmarket/metrics.hpp"
#include "synthmarket/random.hpp"

namespace synthmarket {

namespace {

Eigen::Index leg_size(Eigen::Index d, double quintile) {
    return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(quintile * static_cast<double>(d) - 1e-9)));
}

}  // namespace

std::string to_string(Legs legs) { return legs == Legs::long_only ? "long_only" : "long_short"; }

Legs legs_from_string(const std::string& name) {
    if (name == "long_only") return Legs::long_only;
    if (name == "long_short") return Legs::long_short;
    throw InputError("unknown strategy legs '" + name + "' (expected long_only or long_short)");
}

void StrategySpec::validate() const {
    if (h < 1) throw InputError("StrategySpec: h must be at least 1");
    if (!(quintile > 0.0 && quintile <= 0.5)) throw InputError("StrategySpec: quintile fraction must lie in (0, 0.5]");
}

std::vector<int> default_h_grid() {
    std::vector<int> grid;
    for (int h = 1; h <= 65; h += 2) grid.push_back(h);
    return grid;
}

Eigen::VectorXd strategy_weights(const Eigen::VectorXd& signal, const StrategySpec& spec) {
    const Eigen::Index d = signal.size();
    const Eigen::Index q = leg_size(d, spec.quintile);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return signal(a) > signal(b); });
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    const double unit = 1.0 / static_cast<double>(q);
    for (Eigen::Index i = 0; i < q; ++i) {
        w(order[static_cast<std::size_t>(d - 1 - i)]) += unit;
        if (spec.legs == Legs::long_short) w(order[static_cast<std::size_t>(i)]) -= unit;
    }
    return w;
}

BacktestResult backtest_mean_reversion(const Eigen::MatrixXd& returns, const StrategySpec& spec) {
    spec.validate();
    const Eigen::Index n = returns.rows();
    const Eigen::Index d = returns.cols();
    const int lag = spec.lag();
    if (d < 5) throw InputError("backtest: need at least 5 assets, got " + std::to_string(d));
    if (n <= spec.h + lag + 1) {
        throw InputError("backtest: insufficient history for h = " + std::to_string(spec.h) + " (" + std::to_string(n) +
                         " rows, need more than " + std::to_string(spec.h + lag + 1) + ")");
    }
    // Prefix sums of log(1 + r) give the compounded window return in O(1);
    // returns <= -1 are counted separately and wipe the window out.
    Eigen::MatrixXd cum = Eigen::MatrixXd::Zero(n + 1, d);
    Eigen::MatrixXi wiped = Eigen::MatrixXi::Zero(n + 1, d);
    for (Eigen::Index t = 0; t < n; ++t) {
        for (Eigen::Index j = 0; j < d; ++j) {
            const double r = returns(t, j);
            cum(t + 1, j) = cum(t, j) + (r > -1.0 ? std::log1p(r) : 0.0);
            wiped(t + 1, j) = wiped(t, j) + (r > -1.0 ? 0 : 1);
        }
    }

    const Eigen::Index first = spec.h + lag - 1;
    BacktestResult result;
    result.first_pnl_row = first + 1;
    result.pnl.resize(n - 1 - first);
    Eigen::VectorXd signal(d);
    for (Eigen::Index t = first; t <= n - 2; ++t) {
        const Eigen::Index end = t - lag;  // inclusive
        const Eigen::Index start = end - spec.h + 1;
        for (Eigen::Index j = 0; j < d; ++j) {
            signal(j) = wiped(end + 1, j) > wiped(start, j) ? -1.0 : std::expm1(cum(end + 1, j) - cum(start, j));
        }
        if (spec.h == 1) signal = returns.row(end).transpose();
        const Eigen::VectorXd w = strategy_weights(signal, spec);
        result.pnl(t - first) = w.dot(returns.row(t + 1));
    }
    result.sharpe = sharpe_ratio(result.pnl);
    return result;
}

BacktestResult backtest_mean_reversion(const ReturnsPanel& panel, const StrategySpec& spec) {
    return backtest_mean_reversion(panel.values(), spec);
}

Eigen::MatrixXd block_bootstrap(const Eigen::MatrixXd& returns, Eigen::Index block_len, Eigen::Index target_len,
                                std::uint64_t seed) {
    const Eigen::Index n = returns.rows();
    if (block_len < 1) throw InputError("block_bootstrap: block length must be positive");
    if (block_len > n) {
        throw InputError("block_bootstrap: block length " + std::to_string(block_len) + " exceeds panel length " +
                         std::to_string(n));
    }
    if (target_len < 1) throw InputError("block_bootstrap: target length must be positive");
    Rng rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - block_len);
    Eigen::MatrixXd out(target_len, returns.cols());
    for (Eigen::Index filled = 0; filled < target_len;) {
        const Eigen::Index start = pick(rng);
        const Eigen::Index take = std::min(block_len, target_len - filled);
        out.middleRows(filled, take) = returns.middleRows(start, take);
        filled += take;
    }
    return out;
}

ReturnsPanel block_bootstrap(const ReturnsPanel& panel, Eigen::Index block_len, Eigen::Index target_len,
                             std::uint64_t seed) {
    if (target_len < 2) throw InputError("block_bootstrap: a panel needs at least 2 rows");
    return ReturnsPanel(business_days(panel.dates().front(), static_cast<std::size_t>(target_len)), panel.tickers(),
                        block_bootstrap(panel.values(), block_len, target_len, seed));
}

double nearest_rank(std::vector<double> values, double p) {
    if (values.empty()) throw InputError("nearest_rank: empty sample");
    if (!(p > 0.0 && p <= 1.0)) throw InputError("nearest_rank: p must lie in (0, 1]");
    std::sort(values.begin(), values.end(), [](double a, double b) {
        // NaN sorts last.
        if (std::isnan(a)) return false;
        if (std::isnan(b)) return true;
        return a < b;
    });
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

SharpeProfile sharpe_profile(const std::vector<Eigen::MatrixXd>& scenarios, const std::vector<int>& h_grid, Legs legs,
                             const Eigen::MatrixXd* in_sample, const Eigen::MatrixXd* out_of_sample) {
    if (scenarios.empty()) throw InputError("sharpe_profile: empty scenario family");
    if (h_grid.empty()) throw InputError("sharpe_profile: empty h grid");
    for (std::size_t i = 1; i < h_grid.size(); ++i) {
        if (h_grid[i] <= h_grid[i - 1]) throw InputError("sharpe_profile: h grid must be strictly increasing");
    }
    constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
    SharpeProfile profile;
    profile.legs = legs;
    for (int h : h_grid) {
        StrategySpec spec;
        spec.h = h;
        spec.legs = legs;
        std::vector<double> values;
        values.reserve(scenarios.size());
        for (const auto& sc : scenarios) values.push_back(backtest_mean_reversion(sc, spec).sharpe);
        SharpeProfileRow row;
        row.h = h;
        row.median = nearest_rank(values, 0.5);
        row.lo = nearest_rank(values, 0.025);
        row.hi = nearest_rank(values, 0.975);
        row.in_sample = in_sample != nullptr ? backtest_mean_reversion(*in_sample, spec).sharpe : kNaN;
        row.out_of_sample = out_of_sample != nullptr ? backtest_mean_reversion(*out_of_sample, spec).sharpe : kNaN;
        profile.rows.push_back(row);
        profile.sharpes.push_back(std::move(values));
    }
    return profile;
}

void write_profile_csv(const SharpeProfile& profile, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "h,median,lo,hi,in_sample,out_of_sample\n";
    for (const auto& r : profile.rows) {
        out << r.h << ',' << format_double(r.median) << ',' << format_double(r.lo) << ',' << format_double(r.hi) << ','
            << format_double(r.in_sample) << ',' << format_double(r.out_of_sample) << '\n';
    }
}

}  // namespace synthmarket
