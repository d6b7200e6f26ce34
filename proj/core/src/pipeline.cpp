#include "synthmarket/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "synthmarket/clusters.hpp"
#include "synthmarket/errors.hpp"
#include "synthmarket/json_util.hpp"
#include "synthmarket/metrics.hpp"
#include "synthmarket/random.hpp"
#include "synthmarket/schema.hpp"
#include "synthmarket/spectral.hpp"

namespace synthmarket {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Re-throws a stage failure with the command and stage names, keeping the
// error category so the exit code is preserved.
template <class F>
auto run_stage(const std::string& command, const std::string& stage, F&& fn) {
    const auto prefix = [&] { return command + ": stage '" + stage + "' failed: "; };
    try {
        return fn();
    } catch (const InputError& e) {
        throw InputError(prefix() + e.what());
    } catch (const ComputationError& e) {
        throw ComputationError(prefix() + e.what());
    } catch (const json::exception& e) {
        throw InputError(prefix() + e.what());
    } catch (const std::exception& e) {
        throw ComputationError(prefix() + e.what());
    }
}

void note(std::ostream* log, const std::string& text) {
    if (log) *log << text << '\n' << std::flush;
}

// Median and 2.5%/97.5% nearest-rank percentiles of the finite values.
json band(const std::vector<double>& values) {
    std::vector<double> v;
    v.reserve(values.size());
    for (double x : values)
        if (std::isfinite(x)) v.push_back(x);
    if (v.empty()) return {{"median", nullptr}, {"lo", nullptr}, {"hi", nullptr}, {"count", 0}};
    return {{"median", nearest_rank(v, 0.5)},
            {"lo", nearest_rank(v, 0.025)},
            {"hi", nearest_rank(v, 0.975)},
            {"count", v.size()}};
}

// Degenerate series (constant, too short for a lag window) report NaN.
template <class F>
double guarded(F&& fn) {
    try {
        return fn();
    } catch (const ComputationError&) {
        return kNaN;
    } catch (const InputError&) {
        return kNaN;
    }
}

const std::vector<std::string>& fact_keys() {
    static const std::vector<std::string> keys = {"skewness", "excess_kurtosis", "volatility_clustering", "leverage",
                                                  "var95",    "es95",            "var99",                 "es99"};
    return keys;
}

std::vector<double> stylized_facts(const Eigen::Ref<const Eigen::VectorXd>& x) {
    std::vector<double> out;
    out.push_back(guarded([&] { return skewness(x); }));
    out.push_back(guarded([&] { return excess_kurtosis(x); }));
    out.push_back(guarded([&] { return clustering_score(x, ScoreKind::volatility_clustering); }));
    out.push_back(guarded([&] { return clustering_score(x, ScoreKind::leverage); }));
    for (double alpha : {0.95, 0.99}) {
        const VarEs r = [&] {
            try {
                return var_es(x, alpha);
            } catch (const InputError&) {
                return VarEs{kNaN, kNaN};
            }
        }();
        out.push_back(r.var);
        out.push_back(r.es);
    }
    return out;
}

json portfolio_json(const Eigen::VectorXd& returns) {
    const MetricReport r = portfolio_stats(returns);
    json out = json::object();
    for (const auto& key : portfolio_stat_keys()) out[key] = json_util::number_or_null(r.scalars.at(key));
    return out;
}

// The output directory does not change results, so it stays out of the hash.
std::string config_hash(const PipelineConfig& config) {
    json j = to_json(config);
    j.erase("out");
    return hex64(fnv1a64(j.dump()));
}

json base_manifest(const std::string& command, const PipelineConfig& config) {
    return {{"format", "synthmarket.manifest"},
            {"version", 1},
            {"command", command},
            {"synthmarket_version", kVersion},
            {"config", to_json(config)},
            {"config_hash", config_hash(config)},
            {"seed", config.seed}};
}

std::string relative_name(const fs::path& p, const fs::path& base) { return p.lexically_relative(base).generic_string(); }

void finish(CommandResult& result, const std::string& command, const PipelineConfig& config, std::ostream& log) {
    result.manifest["warnings"] = result.warnings;
    json outputs = json::array();
    for (const auto& p : result.outputs) outputs.push_back(relative_name(p, config.out));
    result.manifest["outputs"] = outputs;
    const fs::path path = config.out / (command + "_manifest.json");
    json_util::write_file(result.manifest, path);
    result.outputs.push_back(path);
    for (const auto& w : result.warnings) log << "warning: " << w << '\n';
    log << command << ": wrote " << path.string() << '\n' << std::flush;
}

std::vector<Eigen::MatrixXd> value_matrices(const std::vector<ReturnsPanel>& panels) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(panels.size());
    for (const auto& p : panels) out.push_back(p.values());
    return out;
}

int largest_h(const std::vector<int>& grid) { return *std::max_element(grid.begin(), grid.end()); }

void require_history(const std::string& what, Eigen::Index rows, const std::vector<int>& grid) {
    const StrategySpec spec{largest_h(grid), Legs::long_short, 0.2};
    const Eigen::Index need = spec.h + spec.lag() + 2;
    if (rows < need) {
        throw InputError(what + " has " + std::to_string(rows) + " rows; the largest look-back h=" +
                         std::to_string(spec.h) + " needs at least " + std::to_string(need));
    }
}

fs::path bundle_dir(const PipelineConfig& c) { return c.out / "bundle"; }
fs::path scenario_dir(const PipelineConfig& c) { return c.out / "scenarios"; }

GeneratorBundle load_fitted_bundle(const PipelineConfig& c) {
    if (!fs::exists(bundle_dir(c) / "bundle.json")) {
        throw InputError("no fitted bundle under " + bundle_dir(c).string() + "; run fit first");
    }
    return load_bundle(bundle_dir(c));
}

template <class T>
T get_as(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) throw InputError("unknown key '" + k + "' in " + where);
    }
}

NormalLaw law_from_json(const json& j, NormalLaw fallback) {
    reject_unknown(j, {"mean", "sd"}, "biaslab law");
    return {get_as(j, "mean", fallback.mean), get_as(j, "sd", fallback.sd)};
}

json profile_json(const SharpeProfile& p) {
    json rows = json::array();
    for (const auto& r : p.rows) {
        rows.push_back({{"h", r.h},
                        {"median", json_util::number_or_null(r.median)},
                        {"lo", json_util::number_or_null(r.lo)},
                        {"hi", json_util::number_or_null(r.hi)},
                        {"in_sample", json_util::number_or_null(r.in_sample)},
                        {"out_of_sample", json_util::number_or_null(r.out_of_sample)}});
    }
    return {{"legs", to_string(p.legs)}, {"rows", rows}};
}

}  // namespace

void PipelineConfig::validate() const {
    if (window < 2) throw InputError("config: window must be at least 2");
    if (n_clusters < 1) throw InputError("config: n_clusters must be positive");
    if (!(scaling_exponent >= 0.0) || !std::isfinite(scaling_exponent)) {
        throw InputError("config: scaling_exponent must be finite and non-negative");
    }
    if (factor_generator != "tcn_gan" && factor_generator != "gaussian_stub") {
        throw InputError("config: factor_generator must be 'tcn_gan' or 'gaussian_stub'");
    }
    if (factor_generator == "tcn_gan") {
        gan.validate();
        const Eigen::Index rf = TcnSpec::discriminator(gan.width).receptive_field();
        if (window != rf) {
            throw InputError("config: window " + std::to_string(window) + " must equal the discriminator receptive field " +
                             std::to_string(rf));
        }
    }
    if (scenario_count < 1) throw InputError("config: scenarios.count must be positive");
    if (scenario_length < 0 || scenario_length == 1) throw InputError("config: scenarios.length must be 0 or at least 2");
    if (h_grid.empty()) throw InputError("config: h_grid must not be empty");
    for (int h : h_grid)
        if (h < 1) throw InputError("config: h_grid values must be positive");
    if (block_len < 1) throw InputError("config: block_len must be positive");
    if (bootstrap_count < 1) throw InputError("config: bootstrap_count must be positive");
    if (truth_length < 2) throw InputError("config: truth_length must be at least 2");
    if (!(guardrail_multiple > 0.0)) throw InputError("config: guardrail_multiple must be positive");
    if (workers < 1) throw InputError("config: workers must be positive");
    if (biaslab.trials < 100) throw InputError("config: biaslab.trials must be at least 100");
    if (biaslab.n_grid.empty()) throw InputError("config: biaslab.n_grid must not be empty");
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw InputError("config must be a JSON object");
    try {
        reject_unknown(j,
                       {"data", "split", "window", "n_clusters", "scaling_exponent", "factor_generator", "gan",
                        "residual_mode", "scenarios", "h_grid", "block_len", "bootstrap_count", "truth_length",
                        "guardrail_multiple", "seed", "workers", "out", "biaslab", "comment"},
                       "config");
        PipelineConfig c;
        const auto resolve = [&](const std::string& p) {
            const fs::path path(p);
            return (path.is_absolute() ? path : base_dir / path).lexically_normal();
        };
        if (j.contains("data")) c.data = resolve(j.at("data").get<std::string>());
        if (j.contains("split")) c.split = parse_date(j.at("split").get<std::string>());
        c.window = get_as(j, "window", c.window);
        c.n_clusters = get_as(j, "n_clusters", c.n_clusters);
        c.scaling_exponent = get_as(j, "scaling_exponent", c.scaling_exponent);
        c.factor_generator = get_as(j, "factor_generator", c.factor_generator);
        if (j.contains("gan")) {
            const json& g = j.at("gan");
            reject_unknown(g,
                           {"profile", "batch", "lr_generator", "lr_discriminator", "adam_beta1", "adam_beta2",
                            "adam_eps", "iterations", "d_steps", "log_every", "width", "seed"},
                           "gan");
            c.gan = train_config_from_json(g);
        }
        if (j.contains("residual_mode")) c.residual_mode = mixture_mode_from_string(j.at("residual_mode").get<std::string>());
        if (j.contains("scenarios")) {
            const json& s = j.at("scenarios");
            reject_unknown(s, {"count", "length"}, "scenarios");
            c.scenario_count = get_as(s, "count", c.scenario_count);
            c.scenario_length = get_as(s, "length", c.scenario_length);
        }
        c.h_grid = get_as(j, "h_grid", c.h_grid);
        c.block_len = get_as(j, "block_len", c.block_len);
        c.bootstrap_count = get_as(j, "bootstrap_count", c.bootstrap_count);
        c.truth_length = get_as(j, "truth_length", c.truth_length);
        c.guardrail_multiple = get_as(j, "guardrail_multiple", c.guardrail_multiple);
        c.seed = get_as(j, "seed", c.seed);
        c.workers = get_as(j, "workers", c.workers);
        if (j.contains("out")) c.out = resolve(j.at("out").get<std::string>());
        else c.out = resolve(c.out.string());
        if (j.contains("biaslab")) {
            const json& b = j.at("biaslab");
            reject_unknown(b, {"kernel", "true_law", "learned_law", "b", "n_grid", "trials", "beta", "c_hat"}, "biaslab");
            auto& bl = c.biaslab;
            if (b.contains("kernel")) bl.kernel = kernel_from_string(b.at("kernel").get<std::string>());
            if (b.contains("true_law")) bl.true_law = law_from_json(b.at("true_law"), bl.true_law);
            if (b.contains("learned_law")) bl.learned_law = law_from_json(b.at("learned_law"), bl.learned_law);
            bl.b = get_as(b, "b", bl.b);
            bl.n_grid = get_as(b, "n_grid", bl.n_grid);
            bl.trials = get_as(b, "trials", bl.trials);
            bl.beta = get_as(b, "beta", bl.beta);
            bl.c_hat = get_as(b, "c_hat", bl.c_hat);
        }
        c.source = j;
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
}

PipelineConfig load_config(const fs::path& path) {
    const json j = json_util::read_file(path);
    const fs::path base = fs::absolute(path).parent_path();
    if (j.is_object() && j.value("format", std::string()) == "synthmarket.manifest") {
        if (!j.contains("config")) throw InputError(path.string() + ": manifest has no config");
        return config_from_json(j.at("config"), base);
    }
    return config_from_json(j, base);
}

// Workers are excluded: results do not depend on them.
json to_json(const PipelineConfig& c) {
    json gan = to_json(c.gan);
    gan.erase("seed");
    return {{"data", c.data.generic_string()},
            {"split", format_date(c.split)},
            {"window", c.window},
            {"n_clusters", c.n_clusters},
            {"scaling_exponent", c.scaling_exponent},
            {"factor_generator", c.factor_generator},
            {"gan", gan},
            {"residual_mode", to_string(c.residual_mode)},
            {"scenarios", {{"count", c.scenario_count}, {"length", c.scenario_length}}},
            {"h_grid", c.h_grid},
            {"block_len", c.block_len},
            {"bootstrap_count", c.bootstrap_count},
            {"truth_length", c.truth_length},
            {"guardrail_multiple", c.guardrail_multiple},
            {"seed", c.seed},
            {"out", c.out.generic_string()},
            {"biaslab",
             {{"kernel", to_string(c.biaslab.kernel)},
              {"true_law", {{"mean", c.biaslab.true_law.mean}, {"sd", c.biaslab.true_law.sd}}},
              {"learned_law", {{"mean", c.biaslab.learned_law.mean}, {"sd", c.biaslab.learned_law.sd}}},
              {"b", c.biaslab.b},
              {"n_grid", c.biaslab.n_grid},
              {"trials", c.biaslab.trials},
              {"beta", c.biaslab.beta},
              {"c_hat", c.biaslab.c_hat}}}};
}

std::optional<std::string> guardrail_warning(std::size_t count, Eigen::Index length, Eigen::Index train_length,
                                             double multiple) {
    const double total = static_cast<double>(count) * static_cast<double>(length);
    const double limit = multiple * static_cast<double>(train_length);
    if (total <= limit) return std::nullopt;
    std::ostringstream os;
    os << "sample-size guardrail: " << count << " scenarios x " << length << " rows = " << static_cast<long long>(total)
       << " synthetic rows, more than " << multiple << " times the " << train_length
       << " training rows. The generator was learned from a finite sample, so its statistics carry a fixed learning "
          "error. Drawing more synthetic data only shrinks the sampling noise around the generator's own value, not "
          "that error, so estimates become confidently biased and error bands stop covering the true value.";
    return os.str();
}

std::pair<ReturnsPanel, ReturnsPanel> load_split(const PipelineConfig& config) {
    if (config.data.empty()) throw InputError("config: no data file given");
    if (!fs::exists(config.data)) throw InputError("data file not found: " + config.data.string());
    return split(load_csv(config.data), config.split);
}

FitOutcome fit_bundle(const ReturnsPanel& train, const PipelineConfig& config, std::uint64_t seed, unsigned workers,
                      std::ostream* log) {
    const std::string cmd = "fit";
    FitOutcome outcome;
    auto& bundle = outcome.bundle;
    bundle.scaling_exponent = config.scaling_exponent;
    bundle.last_train_date = train.dates().back();

    const StandardizedPanel sp = run_stage(cmd, "data_panel", [&] { return standardize(train); });
    const auto [model, dec] = run_stage(cmd, "spectral_factors", [&] {
        FactorModel fm = fit_factor_model(sp);
        Decomposition d = decompose(sp, fm);
        return std::pair{std::move(fm), std::move(d)};
    });
    bundle.factor_model = model;
    note(log, "fit: " + std::to_string(model.m) + " factors above the noise edge " + std::to_string(model.lambda_plus));

    const Eigen::MatrixXd scaled = scale_factors(dec, model, config.scaling_exponent);
    int n_c = config.n_clusters;
    if (n_c > model.m) {
        outcome.warnings.push_back("n_clusters " + std::to_string(n_c) + " exceeds the " + std::to_string(model.m) +
                                   " retained factors; using " + std::to_string(model.m));
        n_c = model.m;
    }
    const auto [feats, clustering, sets] = run_stage(cmd, "factor_clusters", [&] {
        Eigen::MatrixXd f = feature_matrix(scaled, model.eigvals.head(model.m));
        Clustering cl = cluster(f, n_c);
        std::vector<Eigen::MatrixXd> s = build_training_sets(scaled, cl, config.window);
        return std::tuple{std::move(f), std::move(cl), std::move(s)};
    });
    bundle.clustering = clustering;

    bundle.sources.resize(static_cast<std::size_t>(clustering.n_clusters));
    std::vector<std::uint64_t> gan_seeds;
    for (int c = 0; c < clustering.n_clusters; ++c) gan_seeds.push_back(derive_seed(seed, "gan", static_cast<std::uint64_t>(c)));
    run_stage(cmd, "factor_generators", [&] {
        parallel_for(bundle.sources.size(), workers, [&](std::size_t c) {
            if (config.factor_generator == "gaussian_stub") {
                bundle.sources[c] = std::make_shared<GaussianStubSource>(GaussianStubSource::fit(sets[c]));
                return;
            }
            TrainConfig tc = config.gan;
            tc.seed = gan_seeds[c];
            if (!config.out.empty()) tc.snapshot_path = config.out / ("nan_snapshot_" + std::to_string(c) + ".json");
            note(log, "fit: training cluster " + std::to_string(c) + " on " + std::to_string(sets[c].rows()) +
                          " windows for " + std::to_string(tc.iterations) + " iterations");
            bundle.sources[c] = std::make_shared<GanFactorSource>(synthmarket::train(sets[c], tc));
        });
        return 0;
    });

    const Eigen::Index d = train.cols();
    bundle.mixtures.resize(static_cast<std::size_t>(d));
    std::vector<std::string> em_warnings(static_cast<std::size_t>(d));
    std::vector<std::uint64_t> em_seeds;
    for (Eigen::Index j = 0; j < d; ++j) em_seeds.push_back(derive_seed(seed, "em", static_cast<std::uint64_t>(j)));
    run_stage(cmd, "residual_mixture", [&] {
        parallel_for(static_cast<std::size_t>(d), workers, [&](std::size_t j) {
            EmOptions opt;
            opt.seed = em_seeds[j];
            const MixtureFit fit = fit_em(dec.residuals.col(static_cast<Eigen::Index>(j)), config.residual_mode, opt);
            bundle.mixtures[j] = fit.params;
            if (!fit.warning.empty()) em_warnings[j] = train.tickers()[j] + ": " + fit.warning;
        });
        return 0;
    });
    for (auto& w : em_warnings)
        if (!w.empty()) outcome.warnings.push_back(std::move(w));
    run_stage(cmd, "bundle", [&] {
        bundle.validate();
        return 0;
    });

    json clusters_rows = json::array();
    for (int c = 0; c < clustering.n_clusters; ++c) {
        clusters_rows.push_back({{"cluster", c + 1}, {"training_windows", sets[static_cast<std::size_t>(c)].rows()}});
    }
    outcome.summary = {{"train_rows", train.rows()},
                       {"assets", d},
                       {"lambda_plus", model.lambda_plus},
                       {"factors", model.m},
                       {"eigenvalues", json_util::to_array(model.eigvals.head(model.m))},
                       {"features", json_util::to_row_major(feats)},
                       {"clustering", to_json(clustering)},
                       {"clusters", clusters_rows},
                       {"seeds", {{"gan", gan_seeds}, {"em", em_seeds}}}};
    return outcome;
}

json evaluate_scenarios(const std::vector<ReturnsPanel>& scenarios, const ReturnsPanel& reference,
                        const ReturnsPanel* out_of_sample, std::uint64_t seed, unsigned workers) {
    if (scenarios.empty()) throw InputError("evaluate: no scenarios");
    const Eigen::Index d = reference.cols();
    const Eigen::MatrixXd& ref = reference.values();
    for (const auto& s : scenarios) {
        if (s.cols() != d || s.tickers() != reference.tickers()) {
            throw InputError("evaluate: scenario columns do not match the reference tickers");
        }
        if (s.rows() < 2) throw InputError("evaluate: scenarios need at least two rows");
    }
    if (out_of_sample && out_of_sample->tickers() != reference.tickers()) {
        throw InputError("evaluate: out-of-sample columns do not match the reference tickers");
    }
    const std::size_t n_s = scenarios.size();
    const auto& keys = fact_keys();

    // Per-asset baselines fitted in-sample.
    std::vector<double> g_mean(d), g_sd(d);
    std::vector<TComponent> t_fit(d);
    parallel_for(static_cast<std::size_t>(d), workers, [&](std::size_t j) {
        const auto col = ref.col(static_cast<Eigen::Index>(j));
        g_mean[j] = col.mean();
        g_sd[j] = population_sd(col);
        EmOptions opt;
        opt.seed = derive_seed(seed, "baseline_student_t", j);
        t_fit[j] = fit_em(col, MixtureMode::single_t, opt).params.first;
    });

    std::vector<std::vector<double>> hist_facts(d);
    for (Eigen::Index j = 0; j < d; ++j) hist_facts[j] = stylized_facts(ref.col(j));

    struct PerScenario {
        std::vector<double> w_gen, w_gauss, w_t;
        std::vector<std::vector<double>> facts;
        double corr_dist = kNaN;
        double rolling = kNaN;
        json portfolio;
    };
    std::vector<PerScenario> per(n_s);
    const Eigen::MatrixXd c_ref = sample_correlation(ref);
    const Eigen::Index roll_window = 252;

    parallel_for(n_s, workers, [&](std::size_t i) {
        const Eigen::MatrixXd& x = scenarios[i].values();
        const Eigen::Index n = x.rows();
        PerScenario& p = per[i];
        for (Eigen::Index j = 0; j < d; ++j) {
            p.w_gen.push_back(wasserstein1(x.col(j), ref.col(j)));
            Rng rng(derive_seed(seed, "baseline_draw", i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)));
            const Eigen::VectorXd gauss = (standard_normal(rng, n, 1).array() * g_sd[j] + g_mean[j]).matrix();
            Eigen::VectorXd tdraw(n);
            for (Eigen::Index t = 0; t < n; ++t) tdraw(t) = student_t_quantile(open_uniform(rng), t_fit[j]);
            p.w_gauss.push_back(wasserstein1(gauss, ref.col(j)));
            p.w_t.push_back(wasserstein1(tdraw, ref.col(j)));
            p.facts.push_back(stylized_facts(x.col(j)));
        }
        p.corr_dist = guarded([&] { return corr_distance(sample_correlation(x), c_ref); });
        if (n >= roll_window) p.rolling = guarded([&] { return rolling_mean_corr(x, roll_window).mean(); });
        p.portfolio = portfolio_json(x.rowwise().mean());
    });

    json per_asset_w = json::array(), per_asset_f = json::array();
    std::vector<double> all_gen, all_gauss, all_t;
    std::vector<std::vector<double>> fact_hist_all(keys.size()), fact_gen_all(keys.size());
    for (Eigen::Index j = 0; j < d; ++j) {
        std::vector<double> wg, wn, wt;
        std::vector<std::vector<double>> fg(keys.size());
        for (std::size_t i = 0; i < n_s; ++i) {
            wg.push_back(per[i].w_gen[j]);
            wn.push_back(per[i].w_gauss[j]);
            wt.push_back(per[i].w_t[j]);
            for (std::size_t k = 0; k < keys.size(); ++k) fg[k].push_back(per[i].facts[j][k]);
        }
        all_gen.insert(all_gen.end(), wg.begin(), wg.end());
        all_gauss.insert(all_gauss.end(), wn.begin(), wn.end());
        all_t.insert(all_t.end(), wt.begin(), wt.end());
        const std::string& ticker = reference.tickers()[j];
        per_asset_w.push_back({{"ticker", ticker}, {"generator", band(wg)}, {"gaussian", band(wn)}, {"student_t", band(wt)}});
        json hist = json::object(), gen = json::object();
        for (std::size_t k = 0; k < keys.size(); ++k) {
            hist[keys[k]] = json_util::number_or_null(hist_facts[j][k]);
            gen[keys[k]] = band(fg[k]);
            fact_hist_all[k].push_back(hist_facts[j][k]);
            fact_gen_all[k].insert(fact_gen_all[k].end(), fg[k].begin(), fg[k].end());
        }
        per_asset_f.push_back({{"ticker", ticker}, {"historical", hist}, {"generator", gen}});
    }
    json fact_summary = json::object();
    for (std::size_t k = 0; k < keys.size(); ++k) {
        fact_summary[keys[k]] = {{"historical", band(fact_hist_all[k])}, {"generator", band(fact_gen_all[k])}};
    }

    std::vector<double> corr_d, roll;
    for (const auto& p : per) {
        corr_d.push_back(p.corr_dist);
        roll.push_back(p.rolling);
    }
    const Shrinkage lw = ledoit_wolf(ref);
    json rolling_hist = band({});
    if (ref.rows() >= roll_window) {
        const Eigen::VectorXd r = rolling_mean_corr(ref, roll_window);
        rolling_hist = band(std::vector<double>(r.data(), r.data() + r.size()));
    }

    json gen_port = json::object();
    for (const auto& key : portfolio_stat_keys()) {
        std::vector<double> v;
        for (const auto& p : per) v.push_back(json_util::number_or_nan(p.portfolio.at(key)));
        gen_port[key] = band(v);
    }
    json oos = nullptr;
    if (out_of_sample && out_of_sample->rows() >= 2) oos = portfolio_json(out_of_sample->values().rowwise().mean());

    json baselines_g = json::array(), baselines_t = json::array();
    for (Eigen::Index j = 0; j < d; ++j) {
        baselines_g.push_back({{"ticker", reference.tickers()[j]}, {"mean", g_mean[j]}, {"sd", g_sd[j]}});
        baselines_t.push_back({{"ticker", reference.tickers()[j]},
                               {"mu", t_fit[j].mu},
                               {"s", t_fit[j].s},
                               {"nu", json_util::number_or_null(t_fit[j].nu)}});
    }

    return {{"format", "synthmarket.evaluation_report"},
            {"version", 1},
            {"n_scenarios", n_s},
            {"n_assets", d},
            {"reference_rows", reference.rows()},
            {"scenario_rows", scenarios.front().rows()},
            {"tickers", reference.tickers()},
            {"wasserstein",
             {{"summary", {{"generator", band(all_gen)}, {"gaussian", band(all_gauss)}, {"student_t", band(all_t)}}},
              {"per_asset", per_asset_w}}},
            {"stylized_facts", {{"summary", fact_summary}, {"per_asset", per_asset_f}}},
            {"correlation",
             {{"distance",
               {{"one_factor", corr_distance(one_factor_corr(ref), c_ref)},
                {"ledoit_wolf", corr_distance(covariance_to_correlation(lw.covariance), c_ref)},
                {"generator", band(corr_d)}}},
              {"ledoit_wolf_shrinkage", lw.gamma},
              {"rolling_mean", {{"window", roll_window}, {"historical", rolling_hist}, {"generator", band(roll)}}}}},
            {"portfolio",
             {{"in_sample", portfolio_json(ref.rowwise().mean())}, {"out_of_sample", oos}, {"generator", gen_port}}},
            {"baselines", {{"gaussian", baselines_g}, {"student_t", baselines_t}}}};
}

void write_report_tables(const json& report, const fs::path& dir) {
    fs::create_directories(dir);
    const auto cell = [](const json& v) { return v.is_null() ? std::string() : format_double(v.get<double>()); };
    {
        std::ofstream out(dir / "wasserstein.csv");
        out << "ticker";
        for (const char* src : {"generator", "gaussian", "student_t"})
            for (const char* part : {"median", "lo", "hi"}) out << ',' << src << '_' << part;
        out << '\n';
        for (const auto& row : report.at("wasserstein").at("per_asset")) {
            out << row.at("ticker").get<std::string>();
            for (const char* src : {"generator", "gaussian", "student_t"})
                for (const char* part : {"median", "lo", "hi"}) out << ',' << cell(row.at(src).at(part));
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "stylized_facts.csv");
        out << "ticker,metric,historical,generator_median,generator_lo,generator_hi\n";
        for (const auto& row : report.at("stylized_facts").at("per_asset")) {
            for (const auto& key : fact_keys()) {
                const json& g = row.at("generator").at(key);
                out << row.at("ticker").get<std::string>() << ',' << key << ',' << cell(row.at("historical").at(key))
                    << ',' << cell(g.at("median")) << ',' << cell(g.at("lo")) << ',' << cell(g.at("hi")) << '\n';
            }
        }
    }
    {
        std::ofstream out(dir / "portfolio.csv");
        out << "metric,in_sample,out_of_sample,generator_median,generator_lo,generator_hi\n";
        const json& p = report.at("portfolio");
        for (const auto& key : portfolio_stat_keys()) {
            const json& g = p.at("generator").at(key);
            out << key << ',' << cell(p.at("in_sample").at(key)) << ','
                << (p.at("out_of_sample").is_null() ? std::string() : cell(p.at("out_of_sample").at(key))) << ','
                << cell(g.at("median")) << ',' << cell(g.at("lo")) << ',' << cell(g.at("hi")) << '\n';
        }
    }
}

CommandResult cmd_fit(const PipelineConfig& config, std::ostream& log) {
    CommandResult result;
    result.manifest = base_manifest("fit", config);
    const auto [train, test] = run_stage("fit", "data_panel", [&] { return load_split(config); });
    log << "fit: " << train.rows() << " in-sample rows, " << test.rows() << " out-of-sample rows, " << train.cols()
        << " assets\n";
    FitOutcome outcome = fit_bundle(train, config, config.seed, config.workers, &log);
    const fs::path dir = bundle_dir(config);
    const std::string hash = run_stage("fit", "write_bundle", [&] {
        fs::create_directories(dir);
        std::string h = save_bundle(outcome.bundle, dir);
        for (std::size_t c = 0; c < outcome.bundle.sources.size(); ++c) {
            if (const auto* g = dynamic_cast<const GanFactorSource*>(outcome.bundle.sources[c].get())) {
                const fs::path p = dir / ("training_log_" + std::to_string(c + 1) + ".csv");
                write_training_log(g->model(), p);
                result.outputs.push_back(p);
            }
        }
        return h;
    });
    result.outputs.insert(result.outputs.begin(), dir / "bundle.json");
    result.warnings = outcome.warnings;
    result.manifest["bundle_hash"] = hash;
    result.manifest["summary"] = outcome.summary;
    log << "fit: bundle hash " << hash << '\n';
    finish(result, "fit", config, log);
    return result;
}

CommandResult cmd_generate(const PipelineConfig& config, std::ostream& log) {
    CommandResult result;
    result.manifest = base_manifest("generate", config);
    const GeneratorBundle bundle = run_stage("generate", "load_bundle", [&] { return load_fitted_bundle(config); });
    const Eigen::Index train_len = bundle.factor_model.n_obs;
    const Eigen::Index length = config.scenario_length > 0 ? config.scenario_length : train_len;
    if (auto w = guardrail_warning(config.scenario_count, length, train_len, config.guardrail_multiple)) {
        result.warnings.push_back(*w);
    }
    const std::uint64_t master = derive_seed(config.seed, "generate", 0);
    log << "generate: " << config.scenario_count << " scenarios of " << length << " rows\n" << std::flush;
    ScenarioSet set = run_stage("generate", "market_generator", [&] {
        return scenario_set(bundle, length, config.scenario_count, master, config.workers);
    });
    set.bundle_hash = bundle_hash(bundle_dir(config));
    const fs::path dir = scenario_dir(config);
    run_stage("generate", "write_scenarios", [&] {
        save_scenario_set(set, dir, {{"config_hash", config_hash(config)}, {"synthmarket_version", kVersion}});
        return 0;
    });
    result.outputs.push_back(dir / "manifest.json");
    result.manifest["bundle_hash"] = set.bundle_hash;
    result.manifest["master_seed"] = master;
    result.manifest["seed_rule"] = "derive_seed(master_seed, \"scenario\", index)";
    result.manifest["scenario_seeds"] = set.seeds;
    result.manifest["scenario_length"] = length;
    finish(result, "generate", config, log);
    return result;
}

CommandResult cmd_evaluate(const PipelineConfig& config, std::ostream& log) {
    CommandResult result;
    result.manifest = base_manifest("evaluate", config);
    const auto [train, test] = run_stage("evaluate", "data_panel", [&] { return load_split(config); });
    const ScenarioSet set = run_stage("evaluate", "load_scenarios", [&] { return load_scenario_set(scenario_dir(config)); });
    const std::uint64_t seed = derive_seed(config.seed, "evaluate", 0);
    log << "evaluate: " << set.scenarios.size() << " scenarios against " << train.rows() << " in-sample rows\n"
        << std::flush;
    const json report = run_stage("evaluate", "metrics", [&] {
        return evaluate_scenarios(set.scenarios, train, test.rows() >= 2 ? &test : nullptr, seed, config.workers);
    });
    run_stage("evaluate", "schema", [&] {
        const auto errors = validate_schema(report, evaluation_report_schema());
        if (!errors.empty()) throw ComputationError("report does not match its schema: " + errors.front());
        return 0;
    });
    const fs::path dir = config.out / "report";
    fs::create_directories(dir);
    json_util::write_file(report, dir / "report.json");
    write_report_tables(report, dir);
    for (const char* f : {"report.json", "wasserstein.csv", "stylized_facts.csv", "portfolio.csv"}) result.outputs.push_back(dir / f);
    result.manifest["bundle_hash"] = set.bundle_hash;
    result.manifest["derived_seeds"] = {{"evaluate", seed}};
    finish(result, "evaluate", config, log);
    return result;
}

CommandResult cmd_backtest(const PipelineConfig& config, std::ostream& log) {
    CommandResult result;
    result.manifest = base_manifest("backtest", config);
    const auto [train, test] = run_stage("backtest", "data_panel", [&] { return load_split(config); });
    const ScenarioSet set = run_stage("backtest", "load_scenarios", [&] { return load_scenario_set(scenario_dir(config)); });
    run_stage("backtest", "history", [&] {
        require_history("in-sample panel", train.rows(), config.h_grid);
        require_history("out-of-sample panel", test.rows(), config.h_grid);
        require_history("scenario panels", set.scenarios.front().rows(), config.h_grid);
        return 0;
    });
    std::vector<std::uint64_t> boot_seeds;
    for (std::size_t i = 0; i < config.bootstrap_count; ++i) boot_seeds.push_back(derive_seed(config.seed, "bootstrap", i));
    std::vector<Eigen::MatrixXd> boot(config.bootstrap_count);
    run_stage("backtest", "block_bootstrap", [&] {
        parallel_for(boot.size(), config.workers, [&](std::size_t i) {
            boot[i] = block_bootstrap(train.values(), config.block_len, train.rows(), boot_seeds[i]);
        });
        return 0;
    });
    const std::vector<Eigen::MatrixXd> gen = value_matrices(set.scenarios);
    const fs::path dir = config.out / "backtest";
    fs::create_directories(dir);
    json summary = {{"format", "synthmarket.backtest_summary"}, {"version", 1}, {"h_grid", config.h_grid}};
    for (const auto& [source, panels] : {std::pair<const char*, const std::vector<Eigen::MatrixXd>*>{"generator", &gen},
                                         {"bootstrap", &boot}}) {
        for (Legs legs : {Legs::long_only, Legs::long_short}) {
            log << "backtest: " << source << ' ' << to_string(legs) << '\n' << std::flush;
            const SharpeProfile profile = run_stage("backtest", "sharpe_profile", [&, panels = panels] {
                return sharpe_profile(*panels, config.h_grid, legs, &train.values(), &test.values());
            });
            const fs::path p = dir / (std::string(source) + "_" + to_string(legs) + ".csv");
            write_profile_csv(profile, p);
            result.outputs.push_back(p);
            summary[source][to_string(legs)] = profile_json(profile);
        }
    }
    json_util::write_file(summary, dir / "summary.json");
    result.outputs.push_back(dir / "summary.json");
    result.manifest["bundle_hash"] = set.bundle_hash;
    result.manifest["derived_seeds"] = {{"bootstrap", boot_seeds}};
    finish(result, "backtest", config, log);
    return result;
}

CommandResult cmd_regurgitate(const PipelineConfig& config, std::ostream& log) {
    const std::string cmd = "regurgitate";
    CommandResult result;
    result.manifest = base_manifest(cmd, config);
    const GeneratorBundle reference = run_stage(cmd, "load_bundle", [&] { return load_fitted_bundle(config); });
    const Eigen::Index n = reference.factor_model.n_obs;
    run_stage(cmd, "history", [&] {
        require_history("regurgitation sample", n, config.h_grid);
        require_history("truth sample", config.truth_length, config.h_grid);
        return 0;
    });
    const fs::path dir = config.out / "regurgitate";
    fs::create_directories(dir);

    const std::uint64_t sample_seed = derive_seed(config.seed, "regurgitate_sample", 0);
    const std::uint64_t fit_seed = derive_seed(config.seed, "regurgitate_fit", 0);
    const std::uint64_t truth_seed = derive_seed(config.seed, "truth", 0);
    const std::uint64_t gen_seed = derive_seed(config.seed, "regurgitate_generate", 0);

    log << cmd << ": sampling " << n << " rows from the reference generator\n" << std::flush;
    const ReturnsPanel sample = run_stage(cmd, "sample", [&] { return synthesize(reference, n, sample_seed); });
    save_csv(sample, dir / "sample.csv");
    result.outputs.push_back(dir / "sample.csv");

    log << cmd << ": fitting the regurgitative generator\n" << std::flush;
    PipelineConfig inner = config;
    inner.out = dir;
    FitOutcome refit = fit_bundle(sample, inner, fit_seed, config.workers, &log);
    for (auto& w : refit.warnings) result.warnings.push_back("regurgitative fit: " + w);
    const std::string refit_hash = save_bundle(refit.bundle, dir / "bundle");
    result.outputs.push_back(dir / "bundle" / "bundle.json");

    log << cmd << ": estimating the reference profile from " << config.truth_length << " rows\n" << std::flush;
    const ReturnsPanel truth = run_stage(cmd, "truth", [&] { return synthesize(reference, config.truth_length, truth_seed); });

    std::vector<std::uint64_t> boot_seeds;
    for (std::size_t i = 0; i < config.bootstrap_count; ++i) {
        boot_seeds.push_back(derive_seed(config.seed, "regurgitate_bootstrap", i));
    }
    std::vector<Eigen::MatrixXd> boot(config.bootstrap_count);
    run_stage(cmd, "block_bootstrap", [&] {
        parallel_for(boot.size(), config.workers, [&](std::size_t i) {
            boot[i] = block_bootstrap(sample.values(), config.block_len, n, boot_seeds[i]);
        });
        return 0;
    });
    const ScenarioSet regen = run_stage(cmd, "regurgitative_scenarios", [&] {
        return scenario_set(refit.bundle, n, config.scenario_count, gen_seed, config.workers);
    });
    const std::vector<Eigen::MatrixXd> regen_values = value_matrices(regen.scenarios);

    json report = {{"format", "synthmarket.regurgitation_report"},
                   {"version", 1},
                   {"sample_rows", n},
                   {"truth_rows", config.truth_length},
                   {"bootstrap_count", config.bootstrap_count},
                   {"scenario_count", config.scenario_count},
                   {"h_grid", config.h_grid},
                   {"reference_bundle_hash", bundle_hash(bundle_dir(config))},
                   {"regurgitative_bundle_hash", refit_hash},
                   {"legs", json::object()}};
    std::ofstream csv(dir / "profiles.csv");
    csv << "legs,h,truth,bootstrap_median,bootstrap_lo,bootstrap_hi,regurgitative_median,regurgitative_lo,"
           "regurgitative_hi,bootstrap_covers,regurgitative_covers\n";
    for (Legs legs : {Legs::long_only, Legs::long_short}) {
        const auto [bp, rp] = run_stage(cmd, "sharpe_profile", [&] {
            return std::pair{sharpe_profile(boot, config.h_grid, legs, &sample.values()),
                             sharpe_profile(regen_values, config.h_grid, legs, &sample.values())};
        });
        json rows = json::array();
        std::size_t boot_cover = 0, regen_cover = 0;
        for (std::size_t k = 0; k < config.h_grid.size(); ++k) {
            const int h = config.h_grid[k];
            const double t = backtest_mean_reversion(truth.values(), StrategySpec{h, legs, 0.2}).sharpe;
            const auto& b = bp.rows[k];
            const auto& r = rp.rows[k];
            const bool bc = b.lo <= t && t <= b.hi;
            const bool rc = r.lo <= t && t <= r.hi;
            boot_cover += bc;
            regen_cover += rc;
            rows.push_back({{"h", h},
                            {"truth", json_util::number_or_null(t)},
                            {"in_sample", json_util::number_or_null(b.in_sample)},
                            {"bootstrap", {{"median", b.median}, {"lo", b.lo}, {"hi", b.hi}}},
                            {"regurgitative", {{"median", r.median}, {"lo", r.lo}, {"hi", r.hi}}},
                            {"bootstrap_covers", bc},
                            {"regurgitative_covers", rc}});
            csv << to_string(legs) << ',' << h << ',' << format_double(t) << ',' << format_double(b.median) << ','
                << format_double(b.lo) << ',' << format_double(b.hi) << ',' << format_double(r.median) << ','
                << format_double(r.lo) << ',' << format_double(r.hi) << ',' << (bc ? 1 : 0) << ',' << (rc ? 1 : 0)
                << '\n';
        }
        const double m = static_cast<double>(config.h_grid.size());
        report["legs"][to_string(legs)] = {{"rows", rows},
                                           {"bootstrap_coverage", boot_cover / m},
                                           {"regurgitative_coverage", regen_cover / m},
                                           {"regurgitative_covers_all", regen_cover == config.h_grid.size()}};
        if (regen_cover < config.h_grid.size()) {
            result.warnings.push_back("regurgitative bands miss the reference profile at " +
                                      std::to_string(config.h_grid.size() - regen_cover) + " of " +
                                      std::to_string(config.h_grid.size()) + " look-backs (" + to_string(legs) +
                                      "): the generator does not recover itself there");
        }
    }
    csv.close();
    result.outputs.push_back(dir / "profiles.csv");
    run_stage(cmd, "schema", [&] {
        const auto errors = validate_schema(report, regurgitation_report_schema());
        if (!errors.empty()) throw ComputationError("report does not match its schema: " + errors.front());
        return 0;
    });
    json_util::write_file(report, dir / "report.json");
    result.outputs.push_back(dir / "report.json");
    result.manifest["derived_seeds"] = {{"sample", sample_seed},
                                        {"fit", fit_seed},
                                        {"truth", truth_seed},
                                        {"generate", gen_seed},
                                        {"bootstrap", boot_seeds},
                                        {"scenario_seeds", regen.seeds},
                                        {"refit", refit.summary.at("seeds")}};
    finish(result, cmd, config, log);
    return result;
}

CommandResult cmd_biaslab(const PipelineConfig& config, std::ostream& log) {
    CommandResult result;
    result.manifest = base_manifest("biaslab", config);
    const auto& b = config.biaslab;
    const std::uint64_t seed = derive_seed(config.seed, "biaslab", 0);
    log << "biaslab: " << b.trials << " trials per sample size\n" << std::flush;
    const auto rows = run_stage("biaslab", "coverage", [&] {
        return coverage_table(b.true_law, b.learned_law, b.kernel, b.b, b.n_grid, b.trials, seed, b.beta, b.c_hat);
    });
    const fs::path dir = config.out / "biaslab";
    fs::create_directories(dir);
    write_coverage_csv(rows, dir / "coverage.csv");
    result.outputs.push_back(dir / "coverage.csv");
    result.manifest["derived_seeds"] = {{"biaslab", seed}};
    finish(result, "biaslab", config, log);
    return result;
}

}  // namespace synthmarket
