#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "synthmarket/tcn.hpp"

namespace synthmarket {

struct TrainConfig {
    Eigen::Index batch = 128;
    double lr_generator = 5e-6;
    double lr_discriminator = 5e-5;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.9;
    double adam_eps = 1e-8;
    int iterations = 50000;
    /// Discriminator updates per generator update.
    int d_steps = 1;
    int log_every = 100;
    int width = 100;
    std::uint64_t seed = 0;
    /// Written when training aborts on a non-finite loss; empty disables.
    std::filesystem::path snapshot_path;

    /// Full-size architecture and schedule.
    static TrainConfig paper();
    /// Reduced width and schedule sized for a single CPU core.
    static TrainConfig desk();

    void validate() const;
};

/// Named profile ("paper" or "desk").
TrainConfig train_profile(const std::string& name);

nlohmann::json to_json(const TrainConfig& config);
/// Starts from the profile named by "profile" (default "desk") and applies
/// any explicitly given fields.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainLogEntry {
    int iteration = 0;
    double g_loss = 0.0;
    double d_loss = 0.0;
};

struct GanModel {
    Tcn generator;
    Tcn discriminator;
    std::vector<TrainLogEntry> log;
    std::uint64_t seed = 0;

    /// Window length seen by the discriminator (its receptive field).
    Eigen::Index window() const { return discriminator.spec().receptive_field(); }
};

/// Freshly initialized generator/discriminator pair of the given width.
GanModel make_gan(int width, std::uint64_t seed);
GanModel make_gan(const TcnSpec& generator, const TcnSpec& discriminator, std::uint64_t seed);

/// count x s matrix of generated paths. Noise is i.i.d. N(0,1) over
/// 3 channels and s + rf - 1 steps per path; batch norm runs on running
/// averages, so paths are independent of each other.
Eigen::MatrixXd generate(const GanModel& model, Eigen::Index s, Eigen::Index count, std::uint64_t seed);

/// Generator output for explicit noise (noise_channels x ((s + rf - 1) * count), time-major).
Eigen::MatrixXd generate_from_noise(const GanModel& model, const Eigen::MatrixXd& noise, Eigen::Index count);

/// Discriminator probability that a window is real.
double discriminate(const GanModel& model, const Eigen::Ref<const Eigen::VectorXd>& window);
/// One probability per row.
Eigen::VectorXd discriminate_rows(const GanModel& model, const Eigen::MatrixXd& windows);

/// Adversarial training on the rows of `dataset` (each a window of length 63,
/// the discriminator's receptive field). One iteration runs d_steps
/// discriminator steps and one generator step with the non-saturating loss.
/// Throws ComputationError on a non-finite loss.
GanModel train(const Eigen::MatrixXd& dataset, const TrainConfig& config);
GanModel train(const Eigen::MatrixXd& dataset, const TrainConfig& config, GanModel initial);

nlohmann::json to_json(const GanModel& model);
GanModel gan_from_json(const nlohmann::json& j);

/// CSV with header iteration,g_loss,d_loss.
void write_training_log(const GanModel& model, const std::filesystem::path& path);

/// Convert between row-per-sample matrices (B x L) and time-major 1 x (L * B) activations.
Eigen::MatrixXd rows_to_time_major(const Eigen::MatrixXd& rows);
Eigen::MatrixXd time_major_to_rows(const Eigen::MatrixXd& activations, Eigen::Index batch);

}  // namespace synthmarket
