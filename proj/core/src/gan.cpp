#include "synthmarket/gan.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "synthmarket/errors.hpp"
#include "synthmarket/json_util.hpp"
#include "synthmarket/panel.hpp"

namespace synthmarket {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

class Adam {
public:
    Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
        : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
        ++t_;
        m_ = b1_ * m_ + (1.0 - b1_) * grad;
        v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
    }

private:
    Eigen::VectorXd m_, v_;
    double lr_, b1_, b2_, eps_;
    int t_ = 0;
};

nlohmann::json tcn_to_json(const Tcn& net) {
    return {{"spec", to_json(net.spec())},
            {"params", json_util::to_array(net.params())},
            {"state", json_util::to_array(net.state())}};
}

Tcn tcn_from_json(const nlohmann::json& j) {
    Tcn net(tcn_spec_from_json(j.at("spec")));
    net.params() = json_util::vector_from(j.at("params"), net.n_params());
    net.state() = json_util::vector_from(j.at("state"), net.state().size());
    return net;
}

}  // namespace

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.width = 32;
    c.iterations = 5000;
    c.batch = 8;
    c.lr_generator = 2e-4;
    c.lr_discriminator = 2e-4;
    return c;
}

void TrainConfig::validate() const {
    if (batch < 1) throw InputError("TrainConfig: batch must be positive");
    if (!(lr_generator > 0.0) || !(lr_discriminator > 0.0)) throw InputError("TrainConfig: learning rates must be positive");
    if (iterations < 1) throw InputError("TrainConfig: iterations must be at least 1");
    if (d_steps < 1) throw InputError("TrainConfig: d_steps must be at least 1");
    if (log_every < 1) throw InputError("TrainConfig: log_every must be at least 1");
    if (width < 1) throw InputError("TrainConfig: width must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
        throw InputError("TrainConfig: invalid Adam parameters");
    }
}

TrainConfig train_profile(const std::string& name) {
    if (name == "paper") return TrainConfig::paper();
    if (name == "desk") return TrainConfig::desk();
    throw InputError("unknown training profile '" + name + "' (expected paper or desk)");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"batch", c.batch},
            {"lr_generator", c.lr_generator},
            {"lr_discriminator", c.lr_discriminator},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_eps", c.adam_eps},
            {"iterations", c.iterations},
            {"d_steps", c.d_steps},
            {"log_every", c.log_every},
            {"width", c.width},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c = train_profile(j.value("profile", std::string("desk")));
    c.batch = j.value("batch", c.batch);
    c.lr_generator = j.value("lr_generator", c.lr_generator);
    c.lr_discriminator = j.value("lr_discriminator", c.lr_discriminator);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.iterations = j.value("iterations", c.iterations);
    c.d_steps = j.value("d_steps", c.d_steps);
    c.log_every = j.value("log_every", c.log_every);
    c.width = j.value("width", c.width);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

GanModel make_gan(const TcnSpec& generator, const TcnSpec& discriminator, std::uint64_t seed) {
    if (discriminator.in_channels != generator.out_channels || discriminator.out_channels != 1) {
        throw InputError("make_gan: discriminator must read the generator's output channels and emit one logit");
    }
    GanModel model;
    model.seed = seed;
    model.generator = Tcn(generator);
    model.discriminator = Tcn(discriminator);
    Rng g(derive_seed(seed, "generator", 0));
    Rng d(derive_seed(seed, "discriminator", 0));
    model.generator.initialize(g);
    model.discriminator.initialize(d);
    return model;
}

GanModel make_gan(int width, std::uint64_t seed) {
    return make_gan(TcnSpec::generator(width), TcnSpec::discriminator(width), seed);
}

Eigen::MatrixXd rows_to_time_major(const Eigen::MatrixXd& rows) {
    return Eigen::Map<const Eigen::MatrixXd>(rows.data(), 1, rows.size());
}

Eigen::MatrixXd time_major_to_rows(const Eigen::MatrixXd& activations, Eigen::Index batch) {
    if (activations.rows() != 1 || activations.size() % batch != 0) {
        throw InputError("time_major_to_rows: expected a single-channel activation");
    }
    return Eigen::Map<const Eigen::MatrixXd>(activations.data(), batch, activations.size() / batch);
}

Eigen::MatrixXd generate_from_noise(const GanModel& model, const Eigen::MatrixXd& noise, Eigen::Index count) {
    return time_major_to_rows(model.generator.infer(noise, count), count);
}

Eigen::MatrixXd generate(const GanModel& model, Eigen::Index s, Eigen::Index count, std::uint64_t seed) {
    if (s < 1 || count < 1) throw InputError("generate: s and count must be positive");
    const auto& spec = model.generator.spec();
    Rng rng(seed);
    const Eigen::MatrixXd noise = standard_normal(rng, spec.in_channels, (s + spec.receptive_field() - 1) * count);
    return generate_from_noise(model, noise, count);
}

Eigen::VectorXd discriminate_rows(const GanModel& model, const Eigen::MatrixXd& windows) {
    if (windows.cols() != model.window()) {
        throw InputError("discriminate: window length " + std::to_string(windows.cols()) + " != " +
                         std::to_string(model.window()));
    }
    const Eigen::MatrixXd logits = model.discriminator.infer(rows_to_time_major(windows), windows.rows());
    Eigen::VectorXd p(windows.rows());
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = sigmoid(logits(0, i));
    return p;
}

double discriminate(const GanModel& model, const Eigen::Ref<const Eigen::VectorXd>& window) {
    const Eigen::MatrixXd row = window.transpose();
    return discriminate_rows(model, row)(0);
}

GanModel train(const Eigen::MatrixXd& dataset, const TrainConfig& config) {
    config.validate();
    return train(dataset, config, make_gan(config.width, config.seed));
}

GanModel train(const Eigen::MatrixXd& dataset, const TrainConfig& config, GanModel model) {
    config.validate();
    const Eigen::Index window = model.window();
    const Eigen::Index batch = config.batch;
    if (dataset.cols() != window) {
        throw InputError("train: dataset rows must have length " + std::to_string(window));
    }
    if (dataset.rows() < batch) {
        throw InputError("train: dataset has " + std::to_string(dataset.rows()) + " rows, fewer than one batch of " +
                         std::to_string(batch));
    }
    if (!dataset.allFinite()) throw InputError("train: dataset contains non-finite values");

    Tcn& gen = model.generator;
    Tcn& disc = model.discriminator;
    const auto& gspec = gen.spec();
    const Eigen::Index noise_len = (window + gspec.receptive_field() - 1) * batch;

    Adam adam_g(gen.n_params(), config.lr_generator, config.adam_beta1, config.adam_beta2, config.adam_eps);
    Adam adam_d(disc.n_params(), config.lr_discriminator, config.adam_beta1, config.adam_beta2, config.adam_eps);
    Eigen::VectorXd grad_g(gen.n_params());
    Eigen::VectorXd grad_d(disc.n_params());

    Rng rng(derive_seed(config.seed, "train", 0));
    std::uniform_int_distribution<Eigen::Index> pick(0, dataset.rows() - 1);
    Eigen::MatrixXd real_rows(batch, window);
    Tcn::Cache cache_real, cache_fake, cache_gen;
    Eigen::MatrixXd d_logits(1, batch);
    Eigen::MatrixXd fake;
    const double inv_b = 1.0 / static_cast<double>(batch);

    model.log.clear();
    for (int it = 1; it <= config.iterations; ++it) {
        double d_loss = 0.0;
        for (int k = 0; k < config.d_steps; ++k) {
            for (Eigen::Index b = 0; b < batch; ++b) real_rows.row(b) = dataset.row(pick(rng));
            const Eigen::MatrixXd z = standard_normal(rng, gspec.in_channels, noise_len);
            // The generator is unchanged until its own step, so the last
            // fake batch is reused there.
            const bool last = k + 1 == config.d_steps;
            fake = gen.forward(z, batch, Tcn::Mode::train, last ? &cache_gen : nullptr);
            const Eigen::MatrixXd lr = disc.forward(rows_to_time_major(real_rows), batch, Tcn::Mode::train, &cache_real);
            const Eigen::MatrixXd lf = disc.forward(fake, batch, Tcn::Mode::train, &cache_fake);
            d_loss = 0.0;
            grad_d.setZero();
            for (Eigen::Index b = 0; b < batch; ++b) {
                d_loss += inv_b * (softplus(-lr(0, b)) + softplus(lf(0, b)));
                d_logits(0, b) = inv_b * (sigmoid(lr(0, b)) - 1.0);
            }
            disc.backward(cache_real, d_logits, grad_d);
            for (Eigen::Index b = 0; b < batch; ++b) d_logits(0, b) = inv_b * sigmoid(lf(0, b));
            disc.backward(cache_fake, d_logits, grad_d);
            adam_d.step(disc.params(), grad_d);
        }

        const Eigen::MatrixXd lf = disc.forward(fake, batch, Tcn::Mode::train, &cache_fake);
        double g_loss = 0.0;
        for (Eigen::Index b = 0; b < batch; ++b) {
            g_loss += inv_b * softplus(-lf(0, b));
            d_logits(0, b) = inv_b * (sigmoid(lf(0, b)) - 1.0);
        }
        const Eigen::MatrixXd d_fake = disc.backward_input(cache_fake, d_logits);
        grad_g.setZero();
        gen.backward(cache_gen, d_fake, grad_g);
        adam_g.step(gen.params(), grad_g);

        if (!std::isfinite(d_loss) || !std::isfinite(g_loss) || !gen.params().allFinite() || !disc.params().allFinite()) {
            model.log.push_back({it, g_loss, d_loss});
            std::ostringstream msg;
            msg << "GAN training diverged at iteration " << it << ": g_loss=" << g_loss << " d_loss=" << d_loss
                << " |theta_g|=" << gen.params().norm() << " |theta_d|=" << disc.params().norm()
                << " |grad_g|=" << grad_g.norm() << " |grad_d|=" << grad_d.norm();
            if (!config.snapshot_path.empty()) {
                json_util::write_file(to_json(model), config.snapshot_path);
                msg << "; snapshot written to " << config.snapshot_path.string();
            }
            throw ComputationError(msg.str());
        }
        if (it % config.log_every == 0 || it == config.iterations) model.log.push_back({it, g_loss, d_loss});
    }
    return model;
}

nlohmann::json to_json(const GanModel& model) {
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : model.log) {
        log.push_back({e.iteration, json_util::number_or_null(e.g_loss), json_util::number_or_null(e.d_loss)});
    }
    return {{"format", "synthmarket.gan"},
            {"version", 1},
            {"seed", model.seed},
            {"generator", tcn_to_json(model.generator)},
            {"discriminator", tcn_to_json(model.discriminator)},
            {"log", log}};
}

GanModel gan_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string()) != "synthmarket.gan" || j.value("version", 0) != 1) {
        throw InputError("not a synthmarket.gan version 1 document");
    }
    GanModel model;
    model.seed = j.at("seed").get<std::uint64_t>();
    model.generator = tcn_from_json(j.at("generator"));
    model.discriminator = tcn_from_json(j.at("discriminator"));
    for (const auto& e : j.at("log")) {
        model.log.push_back({e.at(0).get<int>(), json_util::number_or_nan(e.at(1)), json_util::number_or_nan(e.at(2))});
    }
    return model;
}

void write_training_log(const GanModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "iteration,g_loss,d_loss\n";
    for (const auto& e : model.log) {
        out << e.iteration << ',' << format_double(e.g_loss) << ',' << format_double(e.d_loss) << '\n';
    }
}

}  // namespace synthmarket
