#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthmarket/backtest.hpp"
#include "synthmarket/bias.hpp"
#include "synthmarket/gan.hpp"
#include "synthmarket/generator.hpp"
#include "synthmarket/mixture.hpp"
#include "synthmarket/panel.hpp"

namespace synthmarket {

inline constexpr const char* kVersion = "0.1.0";

struct BiasLabConfig {
    Kernel kernel = Kernel::mean;
    NormalLaw true_law{0.0, 1.0};
    NormalLaw learned_law{0.1, 1.0};
    double b = 0.05;
    std::vector<Eigen::Index> n_grid{100, 1000, 10000};
    int trials = 10000;
    double beta = 3.0;
    double c_hat = 1.0;
};

/// JSON run configuration. Relative paths resolve against the directory of
/// the config file.
struct PipelineConfig {
    std::filesystem::path data;
    Date split{std::chrono::year{2015}, std::chrono::month{12}, std::chrono::day{31}};
    Eigen::Index window = 63;
    int n_clusters = 3;
    double scaling_exponent = 0.5;
    /// "tcn_gan" or "gaussian_stub".
    std::string factor_generator = "tcn_gan";
    TrainConfig gan = TrainConfig::desk();
    MixtureMode residual_mode = MixtureMode::two_t;
    std::size_t scenario_count = 100;
    /// 0 means the training length.
    Eigen::Index scenario_length = 0;
    std::vector<int> h_grid = default_h_grid();
    Eigen::Index block_len = 63;
    std::size_t bootstrap_count = 100;
    /// Rows used to estimate the reference generator's own Sharpe profile.
    Eigen::Index truth_length = 30240;
    /// Warn when count * length exceeds this multiple of the training length.
    double guardrail_multiple = 10.0;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::filesystem::path out = "runs/default";
    BiasLabConfig biaslab;

    /// The JSON this config was read from, with overrides applied.
    nlohmann::json source;

    void validate() const;
};

/// Accepts a config document or a command manifest (whose "config" member is used).
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json to_json(const PipelineConfig& config);

/// Message for the sample-size guardrail, or nothing when within bounds.
std::optional<std::string> guardrail_warning(std::size_t count, Eigen::Index length, Eigen::Index train_length,
                                             double multiple);

struct FitOutcome {
    GeneratorBundle bundle;
    std::vector<std::string> warnings;
    nlohmann::json summary;
};

/// Standardize, extract factors, cluster, train one factor source per
/// cluster and fit residual laws on an in-sample panel.
FitOutcome fit_bundle(const ReturnsPanel& train, const PipelineConfig& config, std::uint64_t seed, unsigned workers,
                      std::ostream* log = nullptr);

/// Evaluation report of a scenario family against the reference (in-sample)
/// panel, with an optional out-of-sample panel for the portfolio table.
nlohmann::json evaluate_scenarios(const std::vector<ReturnsPanel>& scenarios, const ReturnsPanel& reference,
                                  const ReturnsPanel* out_of_sample, std::uint64_t seed, unsigned workers = 1);

/// Writes the report's per-asset and portfolio tables as CSV next to it.
void write_report_tables(const nlohmann::json& report, const std::filesystem::path& dir);

/// Result of a command: exit status 0 plus files written under config.out.
struct CommandResult {
    std::vector<std::string> warnings;
    std::vector<std::filesystem::path> outputs;
    nlohmann::json manifest;
};

CommandResult cmd_fit(const PipelineConfig& config, std::ostream& log);
CommandResult cmd_generate(const PipelineConfig& config, std::ostream& log);
CommandResult cmd_evaluate(const PipelineConfig& config, std::ostream& log);
CommandResult cmd_backtest(const PipelineConfig& config, std::ostream& log);
CommandResult cmd_regurgitate(const PipelineConfig& config, std::ostream& log);
CommandResult cmd_biaslab(const PipelineConfig& config, std::ostream& log);

/// Loads the data file and splits it at the configured boundary.
std::pair<ReturnsPanel, ReturnsPanel> load_split(const PipelineConfig& config);

}  // namespace synthmarket
