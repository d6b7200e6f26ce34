#include "synthmarket/simulate.hpp"

#include <cmath>
#include <random>
#include <string>

#include "synthmarket/errors.hpp"
#include "synthmarket/random.hpp"

namespace synthmarket {

namespace {

/// GJR-GARCH(1,1) with unit unconditional variance and standardized t shocks.
class GarchProcess {
public:
    explicit GarchProcess(double dof) : t_(dof), scale_(std::sqrt((dof - 2.0) / dof)) {}

    double next(Rng& rng) {
        const double eps = std::sqrt(h_) * scale_ * t_(rng);
        h_ = kOmega + (kAlpha + (eps < 0.0 ? kGamma : 0.0)) * eps * eps + kBeta * h_;
        return eps;
    }

private:
    static constexpr double kAlpha = 0.05;
    static constexpr double kGamma = 0.08;
    static constexpr double kBeta = 0.88;
    static constexpr double kOmega = 1.0 - kAlpha - 0.5 * kGamma - kBeta;
    std::student_t_distribution<double> t_;
    double scale_;
    double h_ = 1.0;
};

}  // namespace

ReturnsPanel simulate_factor_garch(const FactorGarchSpec& spec) {
    if (spec.assets < 1 || spec.rows < 2 || spec.sectors < 1 || !(spec.t_dof > 2.0)) {
        throw InputError("simulate_factor_garch: invalid specification");
    }
    const double idio_loading =
        std::sqrt(std::max(0.05, 1.0 - spec.market_loading * spec.market_loading - spec.sector_loading * spec.sector_loading));
    Rng rng(spec.seed);
    GarchProcess market(spec.t_dof);
    std::vector<GarchProcess> sectors(static_cast<std::size_t>(spec.sectors), GarchProcess(spec.t_dof));
    std::vector<GarchProcess> idio(static_cast<std::size_t>(spec.assets), GarchProcess(spec.t_dof));
    // Burn in the variance recursions.
    for (int t = 0; t < 250; ++t) {
        market.next(rng);
        for (auto& s : sectors) s.next(rng);
        for (auto& e : idio) e.next(rng);
    }
    Eigen::MatrixXd values(spec.rows, spec.assets);
    std::vector<double> sector_shock(static_cast<std::size_t>(spec.sectors));
    for (Eigen::Index t = 0; t < spec.rows; ++t) {
        const double m = market.next(rng);
        for (std::size_t s = 0; s < sectors.size(); ++s) sector_shock[s] = sectors[s].next(rng);
        for (Eigen::Index j = 0; j < spec.assets; ++j) {
            const auto sector = static_cast<std::size_t>(j * spec.sectors / spec.assets);
            const double z = spec.market_loading * m + spec.sector_loading * sector_shock[sector] +
                             idio_loading * idio[static_cast<std::size_t>(j)].next(rng);
            values(t, j) = spec.daily_drift + spec.daily_vol * z;
        }
    }
    std::vector<std::string> tickers;
    for (Eigen::Index j = 0; j < spec.assets; ++j) {
        const std::string num = std::to_string(j + 1);
        tickers.push_back("SYN" + std::string(num.size() < 2 ? 2 - num.size() : 0, '0') + num);
    }
    return ReturnsPanel(business_days(spec.start, static_cast<std::size_t>(spec.rows)), std::move(tickers), std::move(values));
}

ReturnsPanel simulate_mean_reversion(Eigen::Index rows, Eigen::Index assets, double theta, std::uint64_t seed,
                                     double scale) {
    if (rows < 2 || assets < 1) throw InputError("simulate_mean_reversion: invalid shape");
    Rng rng(seed);
    const Eigen::MatrixXd e = standard_normal(rng, rows + 2, assets);
    const Eigen::VectorXd m = standard_normal(rng, rows, 1);
    Eigen::MatrixXd values(rows, assets);
    for (Eigen::Index t = 0; t < rows; ++t) {
        values.row(t) = scale * (0.5 * m(t) + e.row(t + 2).array() - theta * e.row(t).array()).matrix();
    }
    std::vector<std::string> tickers;
    for (Eigen::Index j = 0; j < assets; ++j) tickers.push_back("MR" + std::to_string(j + 1));
    return ReturnsPanel(business_days(Date{std::chrono::year{2000}, std::chrono::month{1}, std::chrono::day{3}},
                                      static_cast<std::size_t>(rows)),
                        std::move(tickers), std::move(values));
}

}  // namespace synthmarket
