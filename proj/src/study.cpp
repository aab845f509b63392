#include "scrhet/study.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "scrhet/chain_io.hpp"
#include "scrhet/dataset_io.hpp"

namespace scrhet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kManifestFormat = "scrhet-study v1";

std::uint64_t label_hash(const std::string& label) { return std::stoull(fingerprint(label), nullptr, 16); }

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

const PosteriorSummary& FitSummary::get(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == name) return posterior[k];
    }
    throw std::out_of_range(fmt::format("fit has no parameter '{}'", name));
}

FitSummary summarize_fit(const ModelSpec& spec, std::span<const Chain> chains, double threshold,
                         double ess_floor, bool split_rhat) {
    if (chains.empty()) throw std::invalid_argument("no chains to summarize");
    FitSummary f;
    f.model = spec.label();
    f.kind = spec.kind;
    f.aggregation = spec.aggregation;
    f.report = assess(chains, spec.kind, threshold, ess_floor, split_rhat);
    f.names = chains.front().names;
    for (std::size_t k = 0; k < f.names.size(); ++k) {
        std::vector<double> pooled;
        for (const auto& c : chains) pooled.insert(pooled.end(), c.traces[k].begin(), c.traces[k].end());
        f.posterior.push_back(summarize_samples(pooled));
    }
    PointwiseAccumulator acc;
    SurfaceMoments surface;
    for (const auto& c : chains) {
        acc.merge(c.pointwise);
        surface.merge(c.surface);
        f.runtime += c.sampling_seconds;
    }
    try {
        f.waic = acc.result();
    } catch (const std::invalid_argument&) {
        f.waic.waic = nan();
        f.waic.p_w = nan();
        f.waic.lppd = nan();
    }
    f.surface = surface;
    f.surface_mean = surface.mean();
    return f;
}

std::vector<double> reference_surface(const Dataset& data, int aggregation, SurfaceReference ref) {
    if (!data.truth) throw std::invalid_argument("dataset has no truth block");
    const std::vector<double>& p0 = data.truth->p0;
    if (ref == SurfaceReference::per_detector || aggregation == 1) return p0;
    const ClusterMap cl = aggregate_detectors(data.grid(), aggregation);
    std::vector<double> avg(static_cast<std::size_t>(cl.n_clusters()), 0.0);
    for (int c = 0; c < cl.n_clusters(); ++c) {
        for (int j : cl.members(c)) avg[static_cast<std::size_t>(c)] += p0[static_cast<std::size_t>(j)];
        avg[static_cast<std::size_t>(c)] /= static_cast<double>(cl.members(c).size());
    }
    return cl.expand(avg);
}

std::string dataset_key(int scenario, int replicate) { return fmt::format("s{:02d}_r{:03d}", scenario, replicate); }

std::string FitRecord::key() const { return fmt::format("{}_{}", dataset_key(scenario, replicate), model); }

json to_json(const FitRecord& r) {
    return {{"scenario", r.scenario},
            {"replicate", r.replicate},
            {"model", r.model},
            {"kind", std::string(to_string(r.kind))},
            {"aggregation", r.aggregation},
            {"status", r.status},
            {"error", r.error},
            {"converged", r.converged},
            {"n_true", r.n_true},
            {"N", to_json(r.n)},
            {"rb", encode_double(r.rb)},
            {"cv", encode_double(r.cv)},
            {"covered", r.covered},
            {"sse", encode_double(r.sse)},
            {"waic", encode_double(r.waic)},
            {"p_w", encode_double(r.p_w)},
            {"diagnostics", to_json(r.report)},
            {"surface_mean", encode_vector(r.surface_mean)}};
}

FitRecord fit_record_from_json(const json& j) {
    FitRecord r;
    r.scenario = j.at("scenario").get<int>();
    r.replicate = j.at("replicate").get<int>();
    r.model = j.at("model").get<std::string>();
    r.kind = model_kind_from_string(j.at("kind").get<std::string>());
    r.aggregation = j.at("aggregation").get<int>();
    r.status = j.at("status").get<std::string>();
    r.error = j.at("error").get<std::string>();
    r.converged = j.at("converged").get<bool>();
    r.n_true = j.at("n_true").get<int>();
    r.n = summary_from_json(j.at("N"));
    r.rb = decode_double(j.at("rb"));
    r.cv = decode_double(j.at("cv"));
    r.covered = j.at("covered").get<bool>();
    r.sse = decode_double(j.at("sse"));
    r.waic = decode_double(j.at("waic"));
    r.p_w = decode_double(j.at("p_w"));
    r.report = report_from_json(j.at("diagnostics"));
    r.surface_mean = decode_vector(j.at("surface_mean"));
    r.runtime = nan();
    return r;
}

namespace {

struct Triple {
    int scenario = 0;
    int replicate = 0;
    const ModelRun* run = nullptr;
    std::string key;
    fs::path dataset_path;
    std::uint64_t seed = 0;

    std::mutex mu;
    std::shared_ptr<const ModelContext> ctx;
    std::string setup_error;
    std::vector<std::optional<Chain>> chains;
    std::vector<std::string> chain_errors;
    int remaining = 0;
    std::optional<FitRecord> record;
};

json timing_json(const FitRecord& rec, std::span<const Chain> chains) {
    json per_chain = json::array();
    for (const auto& c : chains) per_chain.push_back(chain_timing(c));
    json eff = json::object();
    for (const auto& p : rec.report.parameters) {
        eff[p.name] = encode_double(rec.runtime > 0.0 ? p.ess / rec.runtime : nan());
    }
    return {{"key", rec.key()}, {"runtime_seconds", rec.runtime}, {"efficiency", eff}, {"chains", per_chain}};
}

FitRecord score(const Triple& t, const StudyConfig& cfg, std::span<const Chain> chains) {
    const ModelContext& ctx = *t.ctx;
    FitRecord rec;
    rec.scenario = t.scenario;
    rec.replicate = t.replicate;
    rec.model = t.run->spec.label();
    rec.kind = t.run->spec.kind;
    rec.aggregation = t.run->spec.aggregation;
    rec.n_true = ctx.data().truth ? ctx.data().truth->n_true : 0;
    const FitSummary f = summarize_fit(ctx.spec(), chains, cfg.rhat_threshold, cfg.ess_floor, cfg.split_rhat);
    rec.report = f.report;
    rec.converged = f.report.converged;
    rec.n = f.get("N");
    rec.rb = rec.n_true > 0 ? relative_bias(rec.n.mean, rec.n_true) : nan();
    rec.cv = rec.n.mean != 0.0 ? rec.n.sd / rec.n.mean : nan();
    rec.covered = coverage_indicator(rec.n.q025, rec.n.q975, rec.n_true);
    rec.sse = ctx.data().truth ? f.surface.sse(reference_surface(ctx.data(), rec.aggregation, cfg.reference)) : nan();
    rec.waic = f.waic.waic;
    rec.p_w = f.waic.p_w;
    rec.surface_mean = f.surface_mean;
    rec.runtime = f.runtime;
    return rec;
}

FitRecord failed_record(const Triple& t, const std::string& error) {
    FitRecord rec;
    rec.scenario = t.scenario;
    rec.replicate = t.replicate;
    rec.model = t.run->spec.label();
    rec.kind = t.run->spec.kind;
    rec.aggregation = t.run->spec.aggregation;
    rec.status = "failed";
    rec.error = error;
    rec.rb = rec.cv = rec.sse = rec.waic = rec.p_w = nan();
    rec.n = {nan(), nan(), nan(), nan(), nan()};
    rec.report.converged = false;
    rec.report.failure = error;
    rec.runtime = nan();
    return rec;
}

json manifest_json(const StudyConfig& cfg, std::uint64_t seed, const std::set<std::string>& datasets,
                   const std::set<std::string>& completed) {
    return {{"format", kManifestFormat},
            {"version", kVersion},
            {"seed", seed},
            {"config_hash", fingerprint(canonical_config(cfg))},
            {"config", emit_study_config(cfg)},
            {"datasets", datasets},
            {"completed", completed}};
}

}  // namespace

StudyResult run_study(const StudyConfig& cfg_in, std::uint64_t seed, const fs::path& dir, const StudyOptions& opts) {
    StudyConfig cfg = cfg_in;
    cfg.validate();
    auto log = [&](const std::string& line) {
        if (opts.log) opts.log(line);
    };
    fs::create_directories(dir / "datasets");
    fs::create_directories(dir / "fits");
    fs::create_directories(dir / "timing");

    const fs::path manifest_path = dir / "manifest.json";
    const std::string config_hash = fingerprint(canonical_config(cfg));
    std::set<std::string> completed;
    std::set<std::string> dataset_keys;
    if (fs::exists(manifest_path)) {
        if (!opts.resume) {
            throw ConfigError(fmt::format("{} already holds a study; pass --resume to continue it", dir.string()));
        }
        const json m = json::parse(read_file(manifest_path));
        if (m.at("config_hash").get<std::string>() != config_hash || m.at("seed").get<std::uint64_t>() != seed) {
            throw ConfigError("cannot resume: the study on disk was run with a different config or seed");
        }
        for (const auto& k : m.at("completed")) completed.insert(k.get<std::string>());
        for (const auto& k : m.at("datasets")) dataset_keys.insert(k.get<std::string>());
    }
    std::mutex manifest_mu;
    auto write_manifest = [&] {
        write_file_atomic(manifest_path, dump_json(manifest_json(cfg, seed, dataset_keys, completed)));
    };

    StudyResult result;
    result.config = cfg;
    result.seed = seed;

    // Datasets are simulated serially; fields are shared per layout and phi.
    std::map<std::tuple<int, int, double, double>, std::unique_ptr<GaussianField>> fields;
    for (int sc : cfg.scenarios) {
        const Scenario s = cfg.scenario(sc);
        for (int rep = 1; rep <= cfg.replicates; ++rep) {
            const std::string key = dataset_key(sc, rep);
            const fs::path path = dir / "datasets" / (key + ".txt");
            const std::uint64_t dseed = replicate_seed(seed, sc, rep);
            Dataset d;
            if (fs::exists(path) && opts.resume && dataset_keys.count(key)) {
                d = read_dataset(path);
                if (d.seed != dseed || !(d.scenario == s)) {
                    throw std::runtime_error(fmt::format("{} does not match the study configuration", path.string()));
                }
            } else {
                auto& field = fields[{s.nx, s.ny, s.spacing, s.phi}];
                if (!field) {
                    field = std::make_unique<GaussianField>(
                        exponential_covariance(pairwise_detector_distances(s.grid()), s.phi));
                }
                d = simulate_scenario(s, dseed, field.get());
                write_dataset(path, d);
                dataset_keys.insert(key);
            }
            result.datasets.push_back({sc, rep, dseed, summarize_dataset(d)});
        }
    }
    fields.clear();
    write_manifest();

    std::vector<std::unique_ptr<Triple>> triples;
    for (int sc : cfg.scenarios) {
        for (int rep = 1; rep <= cfg.replicates; ++rep) {
            for (const auto& run : cfg.models) {
                if (!cfg.fits(run, sc)) continue;
                auto t = std::make_unique<Triple>();
                t->scenario = sc;
                t->replicate = rep;
                t->run = &run;
                t->key = fmt::format("{}_{}", dataset_key(sc, rep), run.spec.label());
                t->dataset_path = dir / "datasets" / (dataset_key(sc, rep) + ".txt");
                t->seed = derive_seed(seed, {static_cast<std::uint64_t>(sc), static_cast<std::uint64_t>(rep),
                                             label_hash(run.spec.label())});
                t->chains.resize(static_cast<std::size_t>(cfg.chains));
                t->chain_errors.resize(static_cast<std::size_t>(cfg.chains));
                t->remaining = cfg.chains;
                triples.push_back(std::move(t));
            }
        }
    }

    struct Task {
        Triple* triple;
        int chain;
    };
    std::vector<Task> tasks;
    for (auto& t : triples) {
        const fs::path rec_path = dir / "fits" / (t->key + ".json");
        if (completed.count(t->key) && fs::exists(rec_path)) {
            t->record = fit_record_from_json(json::parse(read_file(rec_path)));
            const fs::path timing = dir / "timing" / (t->key + ".json");
            if (fs::exists(timing)) t->record->runtime = json::parse(read_file(timing)).at("runtime_seconds").get<double>();
            continue;
        }
        for (int c = 0; c < cfg.chains; ++c) tasks.push_back({t.get(), c});
    }
    const std::size_t total = triples.size();
    std::atomic<std::size_t> done{total - tasks.size() / static_cast<std::size_t>(std::max(cfg.chains, 1))};
    if (!tasks.empty()) log(fmt::format("{} fits to run, {} already complete", total - done.load(), done.load()));

    auto finish = [&](Triple& t) {
        std::vector<Chain> chains;
        std::string error = t.setup_error;
        for (std::size_t c = 0; c < t.chains.size() && error.empty(); ++c) {
            if (!t.chain_errors[c].empty()) error = fmt::format("chain {}: {}", c, t.chain_errors[c]);
        }
        FitRecord rec;
        if (error.empty()) {
            for (auto& c : t.chains) chains.push_back(std::move(*c));
            try {
                rec = score(t, cfg, chains);
            } catch (const std::exception& e) {
                error = e.what();
            }
        }
        if (!error.empty()) rec = failed_record(t, error);
        write_file_atomic(dir / "fits" / (t.key + ".json"), dump_json(to_json(rec)));
        write_file_atomic(dir / "timing" / (t.key + ".json"), dump_json(timing_json(rec, chains)));
        {
            std::lock_guard lock(manifest_mu);
            completed.insert(t.key);
            write_manifest();
        }
        const std::size_t n = ++done;
        log(fmt::format("[{}/{}] {} {}{}", n, total, t.key,
                        rec.status == "failed" ? "failed: " + rec.error
                                               : (rec.converged ? "converged" : "not converged: " + rec.report.failure),
                        rec.status == "failed" ? "" : fmt::format(" (N mean {:.1f})", rec.n.mean)));
        t.ctx.reset();
        t.chains.clear();
        t.record = std::move(rec);
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < tasks.size(); k = next++) {
            Triple& t = *tasks[k].triple;
            const int c = tasks[k].chain;
            std::shared_ptr<const ModelContext> ctx;
            {
                std::lock_guard lock(t.mu);
                if (!t.ctx && t.setup_error.empty()) {
                    try {
                        Dataset d = read_dataset(t.dataset_path);
                        ModelSpec spec = t.run->spec;
                        if (spec.kind == ModelKind::fe && d.truth) spec.covariate = d.truth->w;
                        t.ctx = std::make_shared<const ModelContext>(std::move(d), std::move(spec));
                    } catch (const std::exception& e) {
                        t.setup_error = e.what();
                    }
                }
                ctx = t.ctx;
            }
            std::optional<Chain> chain;
            std::string error;
            if (ctx) {
                try {
                    McmcConfig mc = t.run->mcmc;
                    mc.seed = t.seed;
                    mc.n_chains = cfg.chains;
                    chain = run_chain(*ctx, mc, c);
                } catch (const std::exception& e) {
                    error = e.what();
                }
            }
            bool last = false;
            {
                std::lock_guard lock(t.mu);
                t.chains[static_cast<std::size_t>(c)] = std::move(chain);
                t.chain_errors[static_cast<std::size_t>(c)] = error;
                last = --t.remaining == 0;
            }
            if (last) finish(t);
        }
    };
    const int width = std::max(1, std::min<int>(opts.workers, static_cast<int>(tasks.size())));
    if (width == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < width; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (auto& t : triples) result.fits.push_back(std::move(*t->record));
    return result;
}

StudyResult load_study(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw FormatError(fmt::format("{} has no study manifest", dir.string()));
    json m;
    try {
        m = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("{}: {}", manifest_path.string(), e.what()));
    }
    if (m.value("format", "") != kManifestFormat) {
        throw FormatError(fmt::format("{}: not a study manifest", manifest_path.string()));
    }
    StudyResult result;
    result.config = parse_study_config(m.at("config").get<std::string>());
    result.seed = m.at("seed").get<std::uint64_t>();
    std::set<std::string> completed;
    for (const auto& k : m.at("completed")) completed.insert(k.get<std::string>());
    std::set<std::string> datasets;
    for (const auto& k : m.at("datasets")) datasets.insert(k.get<std::string>());
    const StudyConfig& cfg = result.config;
    for (int sc : cfg.scenarios) {
        for (int rep = 1; rep <= cfg.replicates; ++rep) {
            const std::string key = dataset_key(sc, rep);
            if (!datasets.count(key)) continue;
            const Dataset d = read_dataset(dir / "datasets" / (key + ".txt"));
            result.datasets.push_back({sc, rep, d.seed, summarize_dataset(d)});
            for (const auto& run : cfg.models) {
                if (!cfg.fits(run, sc)) continue;
                const std::string fkey = fmt::format("{}_{}", key, run.spec.label());
                if (!completed.count(fkey)) continue;
                FitRecord rec = fit_record_from_json(json::parse(read_file(dir / "fits" / (fkey + ".json"))));
                const fs::path timing = dir / "timing" / (fkey + ".json");
                if (fs::exists(timing)) rec.runtime = json::parse(read_file(timing)).at("runtime_seconds").get<double>();
                result.fits.push_back(std::move(rec));
            }
        }
    }
    return result;
}

}  // namespace scrhet
