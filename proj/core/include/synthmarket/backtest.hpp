#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "synthmarket/panel.hpp"

namespace synthmarket {

enum class Legs { long_only, long_short };

std::string to_string(Legs legs);
Legs legs_from_string(const std::string& name);

/// Daily-rebalanced cross-sectional mean-reversion strategy with zero costs.
struct StrategySpec {
    int h = 1;
    Legs legs = Legs::long_short;
    double quintile = 0.2;

    /// max(floor(h / 10), 1).
    int lag() const { return std::max(h / 10, 1); }
    void validate() const;
};

/// Default look-back grid 1, 3, ..., 65.
std::vector<int> default_h_grid();

struct BacktestResult {
    /// pnl(i) is earned on row first_pnl_row + i.
    Eigen::VectorXd pnl;
    Eigen::Index first_pnl_row = 0;
    double sharpe = 0.0;
};

/// Positions for one day from the signal vector: descending rank, ties by
/// column order; short the top ceil(q d), long the bottom ceil(q d).
Eigen::VectorXd strategy_weights(const Eigen::VectorXd& signal, const StrategySpec& spec);

/// Signal on day t is the compounded return over rows t-lag-h+1 .. t-lag;
/// the position set on day t earns row t+1.
BacktestResult backtest_mean_reversion(const ReturnsPanel& panel, const StrategySpec& spec);
BacktestResult backtest_mean_reversion(const Eigen::MatrixXd& returns, const StrategySpec& spec);

/// Moving-blocks bootstrap of whole rows. Output dates are consecutive
/// business days from the panel's first date.
ReturnsPanel block_bootstrap(const ReturnsPanel& panel, Eigen::Index block_len, Eigen::Index target_len,
                             std::uint64_t seed);
Eigen::MatrixXd block_bootstrap(const Eigen::MatrixXd& returns, Eigen::Index block_len, Eigen::Index target_len,
                                std::uint64_t seed);

/// Nearest-rank percentile: the ceil(p N)-th smallest value (p in (0, 1]).
double nearest_rank(std::vector<double> values, double p);

struct SharpeProfileRow {
    int h = 0;
    double median = 0.0;
    double lo = 0.0;  // 2.5%
    double hi = 0.0;  // 97.5%
    double in_sample = 0.0;
    double out_of_sample = 0.0;
};

struct SharpeProfile {
    Legs legs = Legs::long_short;
    std::vector<SharpeProfileRow> rows;
    /// sharpes[i][j]: scenario j at grid point i.
    std::vector<std::vector<double>> sharpes;
};

/// Per-h Sharpe bands across a scenario family. The overlays are NaN when
/// the corresponding panel is not supplied.
SharpeProfile sharpe_profile(const std::vector<Eigen::MatrixXd>& scenarios, const std::vector<int>& h_grid, Legs legs,
                             const Eigen::MatrixXd* in_sample = nullptr, const Eigen::MatrixXd* out_of_sample = nullptr);

/// CSV with header h,median,lo,hi,in_sample,out_of_sample.
void write_profile_csv(const SharpeProfile& profile, const std::filesystem::path& path);

}  // namespace synthmarket
