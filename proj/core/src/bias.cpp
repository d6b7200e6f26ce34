#include "synthmarket/bias.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "synthmarket/errors.hpp"
#include "synthmarket/panel.hpp"
#include "synthmarket/random.hpp"

namespace synthmarket {

namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

Kernel kernel_from_string(const std::string& name) {
    if (name == "mean") return Kernel::mean;
    if (name == "variance") return Kernel::variance;
    throw InputError("unknown kernel '" + name + "' (expected mean or variance)");
}

std::string to_string(Kernel kernel) { return kernel == Kernel::mean ? "mean" : "variance"; }

void UStatSpec::validate() const {
    if (r < 1) throw InputError("UStatSpec: r must be at least 1");
    if (!(sigma1 > 0.0)) throw InputError("UStatSpec: sigma1 must be positive");
    if (!(beta > 2.0 && beta <= 3.0)) throw InputError("UStatSpec: beta must lie in (2, 3]");
    if (!(c_hat > 0.0)) throw InputError("UStatSpec: c_hat must be positive");
}

UStatSpec UStatSpec::for_normal(Kernel kernel, const NormalLaw& law, double beta, double c_hat) {
    UStatSpec spec;
    spec.kernel = kernel;
    spec.beta = beta;
    spec.c_hat = c_hat;
    if (kernel == Kernel::mean) {
        spec.r = 1;
        spec.sigma1 = law.sd;
    } else {
        // g(x) = ((x - mu)^2 + sigma^2) / 2 has variance sigma^4 / 2.
        spec.r = 2;
        spec.sigma1 = law.sd * law.sd / std::numbers::sqrt2;
    }
    spec.validate();
    return spec;
}

void BiasScenario::validate(const UStatSpec& spec) const {
    if (!(b > 0.0)) throw InputError("BiasScenario: b must be positive");
    if (!(n_tilde > spec.r)) throw InputError("BiasScenario: n_tilde must exceed the kernel order");
}

double envelope_term(double x, double y, double z, const UStatSpec& spec) {
    const double scaled = std::abs((y - x) * std::sqrt(z) / (spec.r * spec.sigma1));
    return spec.c_hat / (std::pow(1.0 + scaled, spec.beta) * std::sqrt(z - spec.r + 1.0));
}

ProbabilityBracket probability_bracket(const BiasScenario& s, const UStatSpec& spec) {
    spec.validate();
    s.validate(spec);
    const double k = std::sqrt(s.n_tilde) / (spec.r * spec.sigma1);
    ProbabilityBracket out;
    out.center = phi((s.a_n + s.b) * k) - phi((s.a_n - s.b) * k);
    out.envelope = envelope_term(s.a_n, s.b, s.n_tilde, spec) + envelope_term(s.a_n, -s.b, s.n_tilde, spec);
    return out;
}

double kernel_value(Kernel kernel, const NormalLaw& law) {
    return kernel == Kernel::mean ? law.mean : law.sd * law.sd;
}

double u_statistic(Kernel kernel, const Eigen::Ref<const Eigen::VectorXd>& sample) {
    const Eigen::Index n = sample.size();
    if (n < (kernel == Kernel::mean ? 1 : 2)) throw InputError("u_statistic: sample smaller than the kernel order");
    const double m = sample.mean();
    if (kernel == Kernel::mean) return m;
    return (sample.array() - m).square().sum() / static_cast<double>(n - 1);
}

double u_statistic_enumerated(Kernel kernel, const Eigen::Ref<const Eigen::VectorXd>& sample) {
    const Eigen::Index n = sample.size();
    if (kernel == Kernel::mean) {
        if (n < 1) throw InputError("u_statistic: sample smaller than the kernel order");
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) total += sample(i);
        return total / static_cast<double>(n);
    }
    if (n < 2) throw InputError("u_statistic: sample smaller than the kernel order");
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) total += 0.5 * (sample(i) - sample(j)) * (sample(i) - sample(j));
    return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

CoverageEstimate monte_carlo_coverage(const NormalLaw& true_law, const NormalLaw& learned_law, Kernel kernel,
                                      double b, Eigen::Index n_tilde, int trials, std::uint64_t seed) {
    if (trials < 100) throw InputError("monte_carlo_coverage: need at least 100 trials");
    if (!(b > 0.0)) throw InputError("monte_carlo_coverage: b must be positive");
    if (n_tilde < (kernel == Kernel::mean ? 1 : 2)) throw InputError("monte_carlo_coverage: n_tilde too small");
    if (!(learned_law.sd > 0.0) || !(true_law.sd > 0.0)) throw InputError("monte_carlo_coverage: sd must be positive");
    const double theta = kernel_value(kernel, true_law);
    Eigen::VectorXd sample(n_tilde);
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, "coverage_trial", static_cast<std::uint64_t>(t)));
        std::normal_distribution<double> draw(learned_law.mean, learned_law.sd);
        for (Eigen::Index i = 0; i < n_tilde; ++i) sample(i) = draw(rng);
        if (std::abs(u_statistic(kernel, sample) - theta) <= b) ++hits;
    }
    CoverageEstimate est;
    est.trials = trials;
    est.coverage = static_cast<double>(hits) / trials;
    est.std_error = std::sqrt(est.coverage * (1.0 - est.coverage) / trials);
    return est;
}

std::vector<CoverageRow> coverage_table(const NormalLaw& true_law, const NormalLaw& learned_law, Kernel kernel,
                                        double b, const std::vector<Eigen::Index>& n_grid, int trials,
                                        std::uint64_t seed, double beta, double c_hat) {
    const UStatSpec spec = UStatSpec::for_normal(kernel, learned_law, beta, c_hat);
    const double a_n = kernel_value(kernel, learned_law) - kernel_value(kernel, true_law);
    std::vector<CoverageRow> rows;
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
        CoverageRow row;
        row.n_tilde = n_grid[i];
        row.estimate = monte_carlo_coverage(true_law, learned_law, kernel, b, n_grid[i], trials,
                                            derive_seed(seed, "coverage_row", i));
        row.bracket = probability_bracket({a_n, b, static_cast<double>(n_grid[i])}, spec);
        rows.push_back(row);
    }
    return rows;
}

void write_coverage_csv(const std::vector<CoverageRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "n_tilde,coverage,std_error,center,envelope\n";
    for (const auto& r : rows) {
        out << r.n_tilde << ',' << format_double(r.estimate.coverage) << ',' << format_double(r.estimate.std_error)
            << ',' << format_double(r.bracket.center) << ',' << format_double(r.bracket.envelope) << '\n';
    }
}

}  // namespace synthmarket
