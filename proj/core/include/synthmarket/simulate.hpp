#pragma once

#include <cstdint>

#include "synthmarket/panel.hpp"

namespace synthmarket {

/// Factor model with GJR-GARCH(1,1) Student-t shocks on both the factors
/// and the idiosyncratic parts: a market factor on every asset plus one
/// sector factor per block of assets.
struct FactorGarchSpec {
    Eigen::Index assets = 20;
    Eigen::Index rows = 1826;
    int sectors = 3;
    Date start{std::chrono::year{2010}, std::chrono::month{1}, std::chrono::day{4}};
    double market_loading = 0.6;
    double sector_loading = 0.5;
    double daily_vol = 0.015;
    double daily_drift = 3e-4;
    double t_dof = 5.0;
    std::uint64_t seed = 20240101;
};

ReturnsPanel simulate_factor_garch(const FactorGarchSpec& spec);

/// Returns r_t = scale * (0.5 m_t + e_t - theta e_{t-2}) with i.i.d. normal
/// market m and idiosyncratic e: the lag-2 idiosyncratic autocorrelation
/// rewards short-horizon cross-sectional reversal.
ReturnsPanel simulate_mean_reversion(Eigen::Index rows, Eigen::Index assets, double theta, std::uint64_t seed,
                                     double scale = 0.01);

}  // namespace synthmarket
