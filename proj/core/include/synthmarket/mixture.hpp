#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace synthmarket {

/// Location-scale Student-t; nu = +inf is the Gaussian limit.
struct TComponent {
    double mu = 0.0;
    double s = 1.0;
    double nu = 5.0;

    bool operator==(const TComponent&) const = default;
};

/// p * t(mu1, s1, nu1) + (1 - p) * t(mu2, s2, nu2).
struct MixtureParams {
    double p = 1.0;
    TComponent first;
    TComponent second;

    /// Throws InputError unless p in [0,1], s > 0, nu > 1.
    void validate() const;
    bool operator==(const MixtureParams&) const = default;
};

enum class MixtureMode { two_t, single_t, gaussian };

MixtureMode mixture_mode_from_string(const std::string& name);
std::string to_string(MixtureMode mode);

double student_t_pdf(double x, const TComponent& c);
double student_t_cdf(double x, const TComponent& c);
double student_t_quantile(double u, const TComponent& c);

double pdf(double x, const MixtureParams& params);
double log_pdf(double x, const MixtureParams& params);
double cdf(double x, const MixtureParams& params);
/// Root of cdf(x) = u with |cdf(x) - u| <= 1e-10. u must lie in (0,1).
double inverse_cdf(double u, const MixtureParams& params);

struct EmOptions {
    int max_iterations = 500;
    /// Stop when the mean per-observation log-likelihood gains less than this.
    double tolerance = 1e-8;
    Eigen::Index min_observations = 50;
    /// Extra random-start fits for two_t, on top of the 2-means start.
    int restarts = 4;
    std::uint64_t seed = 0;
    double nu_min = 1.001;
    double nu_max = 200.0;
};

struct MixtureFit {
    MixtureParams params;
    /// Mean per-observation log-likelihood after each EM iteration of the kept fit.
    std::vector<double> loglik_trace;
    int iterations = 0;
    bool converged = false;
    std::string warning;
};

/// Expectation-maximization fit. single_t fixes p = 1; gaussian additionally
/// fixes nu = inf. Throws ComputationError on a zero-variance column.
MixtureFit fit_em(const Eigen::Ref<const Eigen::VectorXd>& x, MixtureMode mode, const EmOptions& options = {});

/// Mean per-observation log-likelihood.
double mean_log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& x, const MixtureParams& params);

nlohmann::json to_json(const MixtureParams& params);
MixtureParams mixture_from_json(const nlohmann::json& j);

}  // namespace synthmarket
