#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "synthmarket/clusters.hpp"
#include "synthmarket/gan.hpp"
#include "synthmarket/mixture.hpp"
#include "synthmarket/panel.hpp"
#include "synthmarket/spectral.hpp"

namespace synthmarket {

/// Source of scaled factor paths for one cluster.
class FactorSource {
public:
    virtual ~FactorSource() = default;
    /// count x s paths, deterministic in seed.
    virtual Eigen::MatrixXd generate(Eigen::Index s, Eigen::Index count, std::uint64_t seed) const = 0;
    virtual std::string kind() const = 0;
    virtual nlohmann::json to_json() const = 0;
};

class GanFactorSource final : public FactorSource {
public:
    explicit GanFactorSource(GanModel model) : model_(std::move(model)) {}
    Eigen::MatrixXd generate(Eigen::Index s, Eigen::Index count, std::uint64_t seed) const override;
    std::string kind() const override { return "tcn_gan"; }
    nlohmann::json to_json() const override { return synthmarket::to_json(model_); }
    const GanModel& model() const { return model_; }

private:
    GanModel model_;
};

/// I.i.d. N(mean, sd) paths. Fitting estimates mean and sd from the window
/// values, so the class can recover its own members.
class GaussianStubSource final : public FactorSource {
public:
    GaussianStubSource(double mean, double sd);
    static GaussianStubSource fit(const Eigen::MatrixXd& windows);
    Eigen::MatrixXd generate(Eigen::Index s, Eigen::Index count, std::uint64_t seed) const override;
    std::string kind() const override { return "gaussian_stub"; }
    nlohmann::json to_json() const override;
    double mean() const { return mean_; }
    double sd() const { return sd_; }

private:
    double mean_, sd_;
};

/// Replays one recorded path (its first s values) for every request.
class RecordedSource final : public FactorSource {
public:
    explicit RecordedSource(Eigen::VectorXd path) : path_(std::move(path)) {}
    Eigen::MatrixXd generate(Eigen::Index s, Eigen::Index count, std::uint64_t seed) const override;
    std::string kind() const override { return "recorded"; }
    nlohmann::json to_json() const override;

private:
    Eigen::VectorXd path_;
};

std::shared_ptr<const FactorSource> factor_source_from_json(const nlohmann::json& j);

struct GeneratorBundle {
    FactorModel factor_model;
    Clustering clustering;
    /// One source per cluster, indexed by cluster id.
    std::vector<std::shared_ptr<const FactorSource>> sources;
    /// One per asset, in ticker order.
    std::vector<MixtureParams> mixtures;
    double scaling_exponent = 0.5;
    /// Synthetic panels are dated from the first business day after this.
    Date last_train_date{std::chrono::year{1999}, std::chrono::month{12}, std::chrono::day{31}};

    /// Throws InputError when the parts disagree.
    void validate() const;
};

/// Draws u uniformly from the open interval (0, 1).
double open_uniform(Rng& rng);

/// One synthetic panel of n_tilde rows. Factor k uses the source of its
/// cluster with its own derived seed; residual cells use independent
/// uniforms pushed through each asset's mixture quantile.
ReturnsPanel synthesize(const GeneratorBundle& bundle, Eigen::Index n_tilde, std::uint64_t seed);

/// Factor contribution only (standardized units, before sigma and mu).
Eigen::MatrixXd synthesize_factor_part(const GeneratorBundle& bundle, Eigen::Index n_tilde, std::uint64_t seed);

struct ScenarioSet {
    std::vector<ReturnsPanel> scenarios;
    std::vector<std::uint64_t> seeds;
    std::uint64_t master_seed = 0;
    std::string bundle_hash;
};

/// Seed of scenario i: derive_seed(master_seed, "scenario", i).
std::uint64_t scenario_seed(std::uint64_t master_seed, std::size_t index);

/// Scenarios are generated on up to `workers` threads; each depends only on
/// its own seed, so the result does not depend on the worker count.
ScenarioSet scenario_set(const GeneratorBundle& bundle, Eigen::Index n_tilde, std::size_t count,
                         std::uint64_t master_seed, unsigned workers = 1);

/// Runs fn(i) for i in [0, count) on up to `workers` threads. The first
/// exception thrown is rethrown after all threads join.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn);

/// Writes bundle.json plus one source file per cluster into dir; returns
/// the bundle hash (FNV-1a over the written files, in order).
std::string save_bundle(const GeneratorBundle& bundle, const std::filesystem::path& dir);
GeneratorBundle load_bundle(const std::filesystem::path& dir);
/// Hash of a saved bundle directory.
std::string bundle_hash(const std::filesystem::path& dir);

/// scenario_000.csv ... plus manifest.json listing seeds and provenance.
void save_scenario_set(const ScenarioSet& set, const std::filesystem::path& dir, const nlohmann::json& extra = {});
ScenarioSet load_scenario_set(const std::filesystem::path& dir);

std::string hex64(std::uint64_t value);

}  // namespace synthmarket
