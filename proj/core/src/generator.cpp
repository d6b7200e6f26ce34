#include "synthmarket/generator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iterator>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "synthmarket/errors.hpp"
#include "synthmarket/json_util.hpp"

namespace synthmarket {

Eigen::MatrixXd GanFactorSource::generate(Eigen::Index s, Eigen::Index count, std::uint64_t seed) const {
    return synthmarket::generate(model_, s, count, seed);
}

GaussianStubSource::GaussianStubSource(double mean, double sd) : mean_(mean), sd_(sd) {
    if (!std::isfinite(mean) || !(sd > 0.0)) throw InputError("GaussianStubSource: need finite mean and positive sd");
}

GaussianStubSource GaussianStubSource::fit(const Eigen::MatrixXd& windows) {
    if (windows.size() < 2) throw InputError("GaussianStubSource: need at least two values");
    const double m = windows.mean();
    const double sd = std::sqrt((windows.array() - m).square().mean());
    return GaussianStubSource(m, sd);
}

Eigen::MatrixXd GaussianStubSource::generate(Eigen::Index s, Eigen::Index count, std::uint64_t seed) const {
    if (s < 1 || count < 1) throw InputError("generate: s and count must be positive");
    Rng rng(seed);
    return (standard_normal(rng, count, s).array() * sd_ + mean_).matrix();
}

nlohmann::json GaussianStubSource::to_json() const {
    return {{"format", "synthmarket.gaussian_stub"}, {"version", 1}, {"mean", mean_}, {"sd", sd_}};
}

Eigen::MatrixXd RecordedSource::generate(Eigen::Index s, Eigen::Index count, std::uint64_t) const {
    if (s < 1 || count < 1) throw InputError("generate: s and count must be positive");
    if (s > path_.size()) throw InputError("RecordedSource: requested length exceeds the recorded path");
    Eigen::MatrixXd out(count, s);
    out.rowwise() = path_.head(s).transpose();
    return out;
}

nlohmann::json RecordedSource::to_json() const {
    return {{"format", "synthmarket.recorded"}, {"version", 1}, {"path", json_util::to_array(path_)}};
}

std::shared_ptr<const FactorSource> factor_source_from_json(const nlohmann::json& j) {
    const auto format = j.value("format", std::string());
    if (format == "synthmarket.gan") return std::make_shared<GanFactorSource>(gan_from_json(j));
    if (format == "synthmarket.gaussian_stub") {
        return std::make_shared<GaussianStubSource>(j.at("mean").get<double>(), j.at("sd").get<double>());
    }
    if (format == "synthmarket.recorded") return std::make_shared<RecordedSource>(json_util::vector_from(j.at("path")));
    throw InputError("unknown factor source format '" + format + "'");
}

void GeneratorBundle::validate() const {
    const auto& fm = factor_model;
    if (fm.m < 1 || fm.eigvecs.cols() < fm.m) throw InputError("bundle: factor model has no factors");
    if (clustering.n_factors() != fm.m) throw InputError("bundle: clustering does not cover every factor");
    if (static_cast<int>(sources.size()) != clustering.n_clusters) {
        throw InputError("bundle: " + std::to_string(sources.size()) + " generators for " +
                         std::to_string(clustering.n_clusters) + " clusters");
    }
    for (const auto& s : sources)
        if (!s) throw InputError("bundle: missing generator");
    for (int a : clustering.assignment)
        if (a < 0 || a >= clustering.n_clusters) throw InputError("bundle: factor assigned to no cluster");
    if (static_cast<Eigen::Index>(mixtures.size()) != fm.dim()) {
        throw InputError("bundle: " + std::to_string(mixtures.size()) + " residual laws for " + std::to_string(fm.dim()) +
                         " assets");
    }
    for (const auto& mx : mixtures) mx.validate();
    if (fm.mu_hat.size() != fm.dim() || fm.sigma_hat.size() != fm.dim()) {
        throw InputError("bundle: mean/volatility vectors do not match the asset count");
    }
}

double open_uniform(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

Eigen::MatrixXd synthesize_factor_part(const GeneratorBundle& bundle, Eigen::Index n_tilde, std::uint64_t seed) {
    bundle.validate();
    if (n_tilde < 1) throw InputError("synthesize: n_tilde must be positive");
    const auto& fm = bundle.factor_model;
    Eigen::MatrixXd factors(n_tilde, fm.m);
    for (int k = 0; k < fm.m; ++k) {
        const auto& source = bundle.sources[static_cast<std::size_t>(bundle.clustering.assignment[static_cast<std::size_t>(k)])];
        const Eigen::MatrixXd path = source->generate(n_tilde, 1, derive_seed(seed, "factor", static_cast<std::uint64_t>(k)));
        factors.col(k) = path.row(0).transpose() * std::pow(fm.eigvals(k), bundle.scaling_exponent);
    }
    return factors * fm.loadings().transpose();
}

ReturnsPanel synthesize(const GeneratorBundle& bundle, Eigen::Index n_tilde, std::uint64_t seed) {
    if (n_tilde < 2) throw InputError("synthesize: a panel needs at least 2 rows");
    Eigen::MatrixXd x = synthesize_factor_part(bundle, n_tilde, seed);
    const auto& fm = bundle.factor_model;
    for (Eigen::Index j = 0; j < fm.dim(); ++j) {
        Rng rng(derive_seed(seed, "residual", static_cast<std::uint64_t>(j)));
        const auto& law = bundle.mixtures[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < n_tilde; ++i) x(i, j) += inverse_cdf(open_uniform(rng), law);
    }
    x = destandardize(x, fm.mu_hat, fm.sigma_hat);
    if (!x.allFinite()) throw ComputationError("synthesize: generated non-finite returns");
    return ReturnsPanel(business_days(next_business_day(bundle.last_train_date), static_cast<std::size_t>(n_tilde)),
                        fm.tickers, std::move(x));
}

std::uint64_t scenario_seed(std::uint64_t master_seed, std::size_t index) {
    return derive_seed(master_seed, "scenario", index);
}

void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

ScenarioSet scenario_set(const GeneratorBundle& bundle, Eigen::Index n_tilde, std::size_t count,
                         std::uint64_t master_seed, unsigned workers) {
    if (count < 1) throw InputError("scenario_set: count must be at least 1");
    bundle.validate();
    ScenarioSet set;
    set.master_seed = master_seed;
    std::vector<std::optional<ReturnsPanel>> panels(count);
    for (std::size_t i = 0; i < count; ++i) set.seeds.push_back(scenario_seed(master_seed, i));
    parallel_for(count, workers, [&](std::size_t i) { panels[i] = synthesize(bundle, n_tilde, set.seeds[i]); });
    for (auto& p : panels) set.scenarios.push_back(std::move(*p));
    return set;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

namespace {

std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string save_bundle(const GeneratorBundle& bundle, const std::filesystem::path& dir) {
    bundle.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json sources = nlohmann::json::array();
    for (std::size_t c = 0; c < bundle.sources.size(); ++c) {
        const std::string file = "source_" + std::to_string(c + 1) + ".json";
        json_util::write_file(bundle.sources[c]->to_json(), dir / file);
        sources.push_back({{"cluster", c + 1}, {"kind", bundle.sources[c]->kind()}, {"file", file}});
    }
    nlohmann::json mixtures = nlohmann::json::array();
    for (const auto& m : bundle.mixtures) mixtures.push_back(to_json(m));
    const nlohmann::json doc = {{"format", "synthmarket.bundle"},
                                {"version", 1},
                                {"factor_model", to_json(bundle.factor_model)},
                                {"clustering", to_json(bundle.clustering)},
                                {"sources", sources},
                                {"mixtures", mixtures},
                                {"scaling_exponent", bundle.scaling_exponent},
                                {"last_train_date", format_date(bundle.last_train_date)}};
    json_util::write_file(doc, dir / "bundle.json");
    return bundle_hash(dir);
}

std::string bundle_hash(const std::filesystem::path& dir) {
    const std::string main = read_bytes(dir / "bundle.json");
    std::uint64_t h = fnv1a64(main);
    for (const auto& s : nlohmann::json::parse(main).at("sources")) {
        h = fnv1a64(read_bytes(dir / s.at("file").get<std::string>()), h);
    }
    return hex64(h);
}

GeneratorBundle load_bundle(const std::filesystem::path& dir) {
    const auto doc = json_util::read_file(dir / "bundle.json");
    if (doc.value("format", std::string()) != "synthmarket.bundle" || doc.value("version", 0) != 1) {
        throw InputError(dir.string() + " is not a synthmarket bundle");
    }
    GeneratorBundle b;
    b.factor_model = factor_model_from_json(doc.at("factor_model"));
    b.clustering = clustering_from_json(doc.at("clustering"), b.factor_model.m);
    for (const auto& s : doc.at("sources")) {
        b.sources.push_back(factor_source_from_json(json_util::read_file(dir / s.at("file").get<std::string>())));
    }
    for (const auto& m : doc.at("mixtures")) b.mixtures.push_back(mixture_from_json(m));
    b.scaling_exponent = doc.at("scaling_exponent").get<double>();
    b.last_train_date = parse_date(doc.at("last_train_date").get<std::string>());
    b.validate();
    return b;
}

void save_scenario_set(const ScenarioSet& set, const std::filesystem::path& dir, const nlohmann::json& extra) {
    std::filesystem::create_directories(dir);
    nlohmann::json files = nlohmann::json::array();
    nlohmann::json seeds = nlohmann::json::array();
    for (std::size_t i = 0; i < set.scenarios.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "scenario_%03zu.csv", i);
        save_csv(set.scenarios[i], dir / name);
        files.push_back(name);
        seeds.push_back(set.seeds[i]);
    }
    nlohmann::json manifest = {{"format", "synthmarket.scenarios"},
                               {"version", 1},
                               {"master_seed", set.master_seed},
                               {"seed_rule", "derive_seed(master_seed, \"scenario\", index)"},
                               {"seeds", seeds},
                               {"files", files},
                               {"bundle_hash", set.bundle_hash}};
    if (extra.is_object()) {
        for (const auto& [k, v] : extra.items()) manifest[k] = v;
    }
    json_util::write_file(manifest, dir / "manifest.json");
}

ScenarioSet load_scenario_set(const std::filesystem::path& dir) {
    const auto manifest = json_util::read_file(dir / "manifest.json");
    if (manifest.value("format", std::string()) != "synthmarket.scenarios") {
        throw InputError(dir.string() + " is not a scenario set");
    }
    ScenarioSet set;
    set.master_seed = manifest.at("master_seed").get<std::uint64_t>();
    set.bundle_hash = manifest.value("bundle_hash", std::string());
    set.seeds = manifest.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& f : manifest.at("files")) set.scenarios.push_back(load_csv(dir / f.get<std::string>()));
    if (set.scenarios.empty()) throw InputError("scenario set " + dir.string() + " is empty");
    for (const auto& s : set.scenarios) {
        if (s.rows() != set.scenarios.front().rows() || s.tickers() != set.scenarios.front().tickers()) {
            throw InputError("scenario set " + dir.string() + " mixes panel shapes");
        }
    }
    return set;
}

}  // namespace synthmarket
