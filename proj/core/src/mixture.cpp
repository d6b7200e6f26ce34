#include "synthmarket/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include "synthmarket/errors.hpp"
#include "synthmarket/json_util.hpp"
#include "synthmarket/random.hpp"

namespace synthmarket {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// log of the t density normalizing constant, excluding the scale.
double t_log_const(double nu) {
    if (std::isinf(nu)) return -0.5 * std::log(2.0 * std::numbers::pi);
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
}

double t_log_kernel(double z2, double nu) {
    if (std::isinf(nu)) return -0.5 * z2;
    return -0.5 * (nu + 1.0) * std::log1p(z2 / nu);
}

double log_add(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double standard_cdf(double z, double nu) {
    if (std::isinf(nu)) return boost::math::cdf(boost::math::normal_distribution<double>(), z);
    return boost::math::cdf(boost::math::students_t_distribution<double>(nu), z);
}

double standard_quantile(double u, double nu) {
    if (std::isinf(nu)) return boost::math::quantile(boost::math::normal_distribution<double>(), u);
    return boost::math::quantile(boost::math::students_t_distribution<double>(nu), u);
}

/// Per-component pieces reused across an EM pass.
struct ComponentTerms {
    double log_weight;
    double log_norm;  // t_log_const - log s
    double mu, s, nu;

    ComponentTerms(double weight, const TComponent& c)
        : log_weight(weight > 0.0 ? std::log(weight) : -kInf),
          log_norm(t_log_const(c.nu) - std::log(c.s)),
          mu(c.mu),
          s(c.s),
          nu(c.nu) {}

    double log_density(double x, double& z2) const {
        const double z = (x - mu) / s;
        z2 = z * z;
        return log_weight + log_norm + t_log_kernel(z2, nu);
    }
};

double solve_nu(double constant, double nu_min, double nu_max) {
    // Root of log(nu/2) - digamma(nu/2) + constant, decreasing in nu.
    auto f = [constant](double nu) { return std::log(0.5 * nu) - boost::math::digamma(0.5 * nu) + constant; };
    if (f(nu_max) >= 0.0) return nu_max;
    if (f(nu_min) <= 0.0) return nu_min;
    double lo = nu_min, hi = nu_max;
    for (int i = 0; i < 200 && hi - lo > 1e-10 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct EmRun {
    MixtureParams params;
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
};

EmRun run_em(const Eigen::Ref<const Eigen::VectorXd>& x, MixtureMode mode, MixtureParams start,
             const EmOptions& opt) {
    const Eigen::Index n = x.size();
    const bool two = mode == MixtureMode::two_t;
    const bool gaussian = mode == MixtureMode::gaussian;
    const double scale_floor = 1e-12 * std::sqrt((x.array() - x.mean()).square().mean());
    Eigen::ArrayXd w1(n), u1(n), u2(n);

    EmRun run;
    run.params = start;
    double prev = mean_log_likelihood(x, start);
    for (int it = 1; it <= opt.max_iterations; ++it) {
        MixtureParams& p = run.params;
        // E-step.
        const ComponentTerms c1(two ? p.p : 1.0, p.first);
        const ComponentTerms c2(two ? 1.0 - p.p : 0.0, p.second);
        for (Eigen::Index i = 0; i < n; ++i) {
            double z1 = 0.0, z2 = 0.0;
            const double l1 = c1.log_density(x(i), z1);
            const double l2 = two ? c2.log_density(x(i), z2) : -kInf;
            w1(i) = two ? std::exp(l1 - log_add(l1, l2)) : 1.0;
            u1(i) = std::isinf(c1.nu) ? 1.0 : (c1.nu + 1.0) / (c1.nu + z1);
            u2(i) = (!two || std::isinf(c2.nu)) ? 1.0 : (c2.nu + 1.0) / (c2.nu + z2);
        }
        // M-step, one component at a time.
        auto update = [&](const Eigen::ArrayXd& w, const Eigen::ArrayXd& u, TComponent& c) {
            const double nk = w.sum();
            if (!(nk > 0.0)) return;
            const Eigen::ArrayXd wu = w * u;
            c.mu = (wu * x.array()).sum() / wu.sum();
            c.s = std::max(std::sqrt((wu * (x.array() - c.mu).square()).sum() / nk), scale_floor);
            if (!gaussian && !std::isinf(c.nu)) {
                const double half = 0.5 * (c.nu + 1.0);
                const double constant = 1.0 + (w * (u.log() - u)).sum() / nk + boost::math::digamma(half) - std::log(half);
                c.nu = solve_nu(constant, opt.nu_min, opt.nu_max);
            }
        };
        if (two) {
            p.p = w1.mean();
            update(w1, u1, p.first);
            update(1.0 - w1, u2, p.second);
        } else {
            update(w1, u1, p.first);
        }
        const double ll = mean_log_likelihood(x, p);
        run.trace.push_back(ll);
        run.iterations = it;
        if (ll - prev < opt.tolerance) {
            run.converged = true;
            break;
        }
        prev = ll;
    }
    return run;
}

MixtureParams moment_start(const Eigen::Ref<const Eigen::VectorXd>& x, bool gaussian) {
    const double mu = x.mean();
    const double var = (x.array() - mu).square().mean();
    const double kurt = (x.array() - mu).pow(4).mean() / (var * var) - 3.0;
    MixtureParams p;
    p.p = 1.0;
    if (gaussian) {
        p.first = {mu, std::sqrt(var), kInf};
    } else {
        const double nu = kurt > 0.2 ? std::clamp(4.0 + 6.0 / kurt, 2.5, 100.0) : 30.0;
        p.first = {mu, std::sqrt(var * (nu - 2.0) / nu), nu};
    }
    p.second = p.first;
    return p;
}

/// 1-D Lloyd iterations from two centers; returns the split into a mixture start.
MixtureParams two_means_start(const Eigen::Ref<const Eigen::VectorXd>& x, double c_lo, double c_hi) {
    const Eigen::Index n = x.size();
    std::vector<char> high(static_cast<std::size_t>(n));
    for (int it = 0; it < 100; ++it) {
        double s0 = 0, s1 = 0;
        Eigen::Index n0 = 0, n1 = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool h = std::abs(x(i) - c_hi) < std::abs(x(i) - c_lo);
            high[static_cast<std::size_t>(i)] = h;
            if (h) { s1 += x(i); ++n1; } else { s0 += x(i); ++n0; }
        }
        if (n0 == 0 || n1 == 0) break;
        const double lo = s0 / static_cast<double>(n0), hi = s1 / static_cast<double>(n1);
        if (lo == c_lo && hi == c_hi) break;
        c_lo = lo;
        c_hi = hi;
    }
    double v0 = 0, v1 = 0;
    Eigen::Index n0 = 0, n1 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (high[static_cast<std::size_t>(i)]) { v1 += (x(i) - c_hi) * (x(i) - c_hi); ++n1; }
        else { v0 += (x(i) - c_lo) * (x(i) - c_lo); ++n0; }
    }
    const double sd = std::sqrt((x.array() - x.mean()).square().mean());
    MixtureParams p;
    if (n0 < 2 || n1 < 2) {
        p.p = 0.5;
        p.first = {x.mean() - 0.1 * sd, sd, 10.0};
        p.second = {x.mean() + 0.1 * sd, sd, 10.0};
        return p;
    }
    p.p = static_cast<double>(n0) / static_cast<double>(n);
    p.first = {c_lo, std::max(std::sqrt(v0 / static_cast<double>(n0)), 1e-3 * sd), 10.0};
    p.second = {c_hi, std::max(std::sqrt(v1 / static_cast<double>(n1)), 1e-3 * sd), 10.0};
    return p;
}

}  // namespace

void MixtureParams::validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("mixture weight p must lie in [0,1]");
    for (const TComponent* c : {&first, &second}) {
        if (!std::isfinite(c->mu)) throw InputError("mixture location must be finite");
        if (!(c->s > 0.0) || !std::isfinite(c->s)) throw InputError("mixture scale must be positive");
        if (!(c->nu > 1.0)) throw InputError("mixture degrees of freedom must exceed 1");
    }
}

MixtureMode mixture_mode_from_string(const std::string& name) {
    if (name == "two_t") return MixtureMode::two_t;
    if (name == "single_t") return MixtureMode::single_t;
    if (name == "gaussian") return MixtureMode::gaussian;
    throw InputError("unknown residual mode '" + name + "' (expected two_t, single_t or gaussian)");
}

std::string to_string(MixtureMode mode) {
    switch (mode) {
        case MixtureMode::two_t: return "two_t";
        case MixtureMode::single_t: return "single_t";
        case MixtureMode::gaussian: return "gaussian";
    }
    return "unknown";
}

double student_t_pdf(double x, const TComponent& c) {
    const double z = (x - c.mu) / c.s;
    return std::exp(t_log_const(c.nu) + t_log_kernel(z * z, c.nu)) / c.s;
}

double student_t_cdf(double x, const TComponent& c) { return standard_cdf((x - c.mu) / c.s, c.nu); }

double student_t_quantile(double u, const TComponent& c) { return c.mu + c.s * standard_quantile(u, c.nu); }

double pdf(double x, const MixtureParams& params) {
    double out = 0.0;
    if (params.p > 0.0) out += params.p * student_t_pdf(x, params.first);
    if (params.p < 1.0) out += (1.0 - params.p) * student_t_pdf(x, params.second);
    return out;
}

double log_pdf(double x, const MixtureParams& params) {
    double z2 = 0.0;
    const double l1 = ComponentTerms(params.p, params.first).log_density(x, z2);
    const double l2 = ComponentTerms(1.0 - params.p, params.second).log_density(x, z2);
    return log_add(l1, l2);
}

double cdf(double x, const MixtureParams& params) {
    double out = 0.0;
    if (params.p > 0.0) out += params.p * student_t_cdf(x, params.first);
    if (params.p < 1.0) out += (1.0 - params.p) * student_t_cdf(x, params.second);
    return out;
}

double inverse_cdf(double u, const MixtureParams& params) {
    if (!(u > 0.0 && u < 1.0)) throw InputError("inverse_cdf: u must lie in (0,1)");
    if (params.p >= 1.0) return student_t_quantile(u, params.first);
    if (params.p <= 0.0) return student_t_quantile(u, params.second);
    // The mixture quantile lies between the component quantiles.
    const double q1 = student_t_quantile(u, params.first);
    const double q2 = student_t_quantile(u, params.second);
    double lo = std::min(q1, q2), hi = std::max(q1, q2);
    double x = params.p * q1 + (1.0 - params.p) * q2;
    for (int it = 0; it < 200; ++it) {
        const double f = cdf(x, params) - u;
        if (std::abs(f) <= 1e-13 || hi - lo <= 1e-15 * std::max(1.0, std::abs(x))) break;
        (f < 0.0 ? lo : hi) = x;
        const double d = pdf(x, params);
        const double step = d > 0.0 ? x - f / d : lo - 1.0;
        x = (step > lo && step < hi) ? step : 0.5 * (lo + hi);
    }
    return x;
}

double mean_log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& x, const MixtureParams& params) {
    const ComponentTerms c1(params.p, params.first);
    const ComponentTerms c2(1.0 - params.p, params.second);
    double total = 0.0;
    double z2 = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) total += log_add(c1.log_density(x(i), z2), c2.log_density(x(i), z2));
    return total / static_cast<double>(x.size());
}

MixtureFit fit_em(const Eigen::Ref<const Eigen::VectorXd>& x, MixtureMode mode, const EmOptions& options) {
    const Eigen::Index n = x.size();
    if (n < options.min_observations) {
        throw InputError("fit_em: " + std::to_string(n) + " observations, need at least " +
                         std::to_string(options.min_observations));
    }
    if (!x.allFinite()) throw InputError("fit_em: non-finite observation");
    const double var = (x.array() - x.mean()).square().mean();
    if (!(var > 0.0)) throw ComputationError("fit_em: zero-variance column");

    std::vector<MixtureParams> starts;
    if (mode == MixtureMode::two_t) {
        std::vector<double> sorted(x.data(), x.data() + n);
        std::sort(sorted.begin(), sorted.end());
        starts.push_back(two_means_start(x, sorted[static_cast<std::size_t>(n / 4)],
                                         sorted[static_cast<std::size_t>(3 * n / 4)]));
        Rng rng(derive_seed(options.seed, "em_restart", 0));
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        for (int r = 0; r < options.restarts; ++r) {
            double a = x(pick(rng)), b = x(pick(rng));
            if (a > b) std::swap(a, b);
            starts.push_back(two_means_start(x, a, b));
        }
    } else {
        starts.push_back(moment_start(x, mode == MixtureMode::gaussian));
    }

    MixtureFit best;
    double best_ll = -kInf;
    for (const auto& start : starts) {
        EmRun run = run_em(x, mode, start, options);
        const double ll = run.trace.empty() ? mean_log_likelihood(x, run.params) : run.trace.back();
        if (ll > best_ll) {
            best_ll = ll;
            best.params = run.params;
            best.loglik_trace = std::move(run.trace);
            best.iterations = run.iterations;
            best.converged = run.converged;
        }
    }
    if (mode != MixtureMode::two_t) {
        best.params.p = 1.0;
        best.params.second = best.params.first;
    } else if (best.params.second.mu < best.params.first.mu) {
        std::swap(best.params.first, best.params.second);
        best.params.p = 1.0 - best.params.p;
    }
    if (!best.converged) {
        best.warning = "EM did not converge within " + std::to_string(options.max_iterations) +
                       " iterations; returning the last iterate";
    }
    return best;
}

nlohmann::json to_json(const MixtureParams& params) {
    auto comp = [](const TComponent& c) {
        return nlohmann::json{{"mu", c.mu}, {"s", c.s}, {"nu", json_util::number_or_null(c.nu)}};
    };
    return {{"p", params.p}, {"first", comp(params.first)}, {"second", comp(params.second)}};
}

MixtureParams mixture_from_json(const nlohmann::json& j) {
    auto comp = [](const nlohmann::json& c) {
        const auto& nu = c.at("nu");
        return TComponent{c.at("mu").get<double>(), c.at("s").get<double>(), nu.is_null() ? kInf : nu.get<double>()};
    };
    MixtureParams p{j.at("p").get<double>(), comp(j.at("first")), comp(j.at("second"))};
    p.validate();
    return p;
}

}  // namespace synthmarket
