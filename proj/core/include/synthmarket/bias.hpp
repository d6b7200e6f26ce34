#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace synthmarket {

enum class Kernel { mean, variance };

Kernel kernel_from_string(const std::string& name);
std::string to_string(Kernel kernel);

struct NormalLaw {
    double mean = 0.0;
    double sd = 1.0;
};

/// Kernel order r, first-projection standard deviation sigma1, moment order
/// beta in (2, 3] and the envelope constant c_hat.
struct UStatSpec {
    Kernel kernel = Kernel::mean;
    int r = 1;
    double sigma1 = 1.0;
    double beta = 3.0;
    double c_hat = 1.0;

    void validate() const;
    /// r and sigma1 for the kernel under a normal law.
    static UStatSpec for_normal(Kernel kernel, const NormalLaw& law, double beta = 3.0, double c_hat = 1.0);
};

struct BiasScenario {
    double a_n = 0.0;  // learned value minus true value
    double b = 0.05;   // tolerance
    double n_tilde = 100.0;

    void validate(const UStatSpec& spec) const;
};

struct ProbabilityBracket {
    double center = 0.0;
    double envelope = 0.0;
};

/// Normal-approximation coverage of |U - theta| <= b and the Berry-Esseen
/// style envelope around it. The envelope is a shape with c_hat as scale,
/// not a calibrated bound.
ProbabilityBracket probability_bracket(const BiasScenario& scenario, const UStatSpec& spec);

/// c_hat / ((1 + |(y - x) sqrt(z) / (r sigma1)|)^beta sqrt(z - r + 1)).
double envelope_term(double x, double y, double z, const UStatSpec& spec);

/// Kernel value of the law: its mean or its variance.
double kernel_value(Kernel kernel, const NormalLaw& law);

/// U-statistic of a sample: the mean, or the unbiased variance.
double u_statistic(Kernel kernel, const Eigen::Ref<const Eigen::VectorXd>& sample);
/// Average of the kernel over all r-subsets (reference implementation).
double u_statistic_enumerated(Kernel kernel, const Eigen::Ref<const Eigen::VectorXd>& sample);

struct CoverageEstimate {
    double coverage = 0.0;
    double std_error = 0.0;
    int trials = 0;
};

/// Fraction of trials in which the U-statistic of an n_tilde sample from
/// `learned` lies within b of the true law's value.
CoverageEstimate monte_carlo_coverage(const NormalLaw& true_law, const NormalLaw& learned_law, Kernel kernel,
                                      double b, Eigen::Index n_tilde, int trials, std::uint64_t seed);

struct CoverageRow {
    Eigen::Index n_tilde = 0;
    CoverageEstimate estimate;
    ProbabilityBracket bracket;
};

/// One row per n_tilde; trial streams are derived from seed and the row index.
std::vector<CoverageRow> coverage_table(const NormalLaw& true_law, const NormalLaw& learned_law, Kernel kernel,
                                        double b, const std::vector<Eigen::Index>& n_grid, int trials,
                                        std::uint64_t seed, double beta = 3.0, double c_hat = 1.0);

/// CSV with header n_tilde,coverage,std_error,center,envelope.
void write_coverage_csv(const std::vector<CoverageRow>& rows, const std::filesystem::path& path);

}  // namespace synthmarket
