// scrhet: simulate, fit, diagnose, study and report.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 file I/O or
// format error, 3 validation error, 4 convergence gate failed, 5 internal.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "scrhet/chain_io.hpp"
#include "scrhet/config.hpp"
#include "scrhet/dataset_io.hpp"
#include "scrhet/diagnostics.hpp"
#include "scrhet/report.hpp"
#include "scrhet/sampler.hpp"
#include "scrhet/study.hpp"

namespace fs = std::filesystem;
using namespace scrhet;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kValidation = 3, kNotConverged = 4, kInternal = 5 };

struct GateFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int env_workers(int fallback) {
    if (const char* v = std::getenv("SCR_WORKERS")) {
        try {
            const int n = std::stoi(v);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
        throw ConfigError(fmt::format("SCR_WORKERS must be a positive integer, got '{}'", v));
    }
    return fallback;
}

std::optional<double> parse_radius(const std::string& text) {
    if (text == "none") return std::nullopt;
    try {
        return std::stod(text);
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("--radius: expected a number or 'none', got '{}'", text));
    }
}

// simulate ------------------------------------------------------------------

struct SimulateArgs {
    int scenario = 0;
    int replicate = 1;
    std::uint64_t seed = 0;
    std::string out;
    bool desk = false;
    bool no_truth = false;
};

int cmd_simulate(const SimulateArgs& a) {
    Scenario s = catalog_scenario(a.scenario);
    if (a.desk) s = desk_scale(s);
    const Dataset d = simulate_scenario(s, replicate_seed(a.seed, a.scenario, a.replicate));
    write_dataset(a.out, d, !a.no_truth);
    const DataSummary sum = summarize_dataset(d);
    std::cout << fmt::format("scenario {} replicate {}: {} detected, {} detections, {:.3f} per detected individual\n",
                             a.scenario, a.replicate, sum.n_detected, sum.detections, sum.per_detected);
    return kOk;
}

// fit -----------------------------------------------------------------------

struct FitArgs {
    std::string data;
    std::string model = "SCR";
    int aggregation = 1;
    std::string radius = "10";
    std::uint64_t seed = 0;
    std::string out;
    std::optional<int> iterations, burn_in, thin;
    int chains = 3;
    int workers = 1;
    bool require_convergence = false;
    double rhat_threshold = 1.1;
    double ess_floor = 400.0;
    bool split_rhat = false;
};

int cmd_fit(const FitArgs& a) {
    Dataset data = read_dataset(a.data);
    ModelSpec spec;
    spec.kind = model_kind_from_string(a.model);
    spec.aggregation = a.aggregation;
    spec.radius = parse_radius(a.radius);
    if (spec.kind == ModelKind::fe) {
        if (!data.truth) throw std::invalid_argument("FE requires covariate: the dataset has no truth block with W");
        spec.covariate = data.truth->w;
    }
    McmcConfig cfg = default_mcmc_config(spec.kind, spec.aggregation);
    if (a.iterations) cfg.n_iterations = *a.iterations;
    if (a.burn_in) cfg.burn_in = *a.burn_in;
    if (a.thin) cfg.thin = *a.thin;
    cfg.n_chains = a.chains;
    cfg.seed = a.seed;
    const ModelContext ctx(data, spec);
    const std::vector<Chain> chains = run_chains(ctx, cfg, env_workers(a.workers));
    const FitSummary f = summarize_fit(ctx.spec(), chains, a.rhat_threshold, a.ess_floor, a.split_rhat);

    const fs::path out(a.out);
    fs::create_directories(out);
    json timing = json::array();
    for (const auto& c : chains) {
        write_chain(out / fmt::format("chain_{}.tsv", c.chain_id), c);
        write_file_atomic(out / fmt::format("chain_{}.json", c.chain_id), dump_json(chain_metadata(c, ctx.spec(), cfg)));
        timing.push_back(chain_timing(c));
    }
    json params = json::object();
    for (std::size_t k = 0; k < f.names.size(); ++k) params[f.names[k]] = to_json(f.posterior[k]);
    json summary{{"format", "scrhet-fit v1"},
                 {"provenance",
                  {{"version", kVersion},
                   {"seed", a.seed},
                   {"spec_hash", spec_fingerprint(ctx.spec())},
                   {"data_hash", fingerprint(format_dataset(data))}}},
                 {"model", spec.label()},
                 {"mcmc",
                  {{"n_iterations", cfg.n_iterations},
                   {"burn_in", cfg.burn_in},
                   {"thin", cfg.thin},
                   {"n_chains", cfg.n_chains}}},
                 {"parameters", params},
                 {"diagnostics", to_json(f.report)},
                 {"waic", {{"waic", encode_double(f.waic.waic)}, {"p_w", encode_double(f.waic.p_w)}, {"lppd", encode_double(f.waic.lppd)}}}};
    std::string surface = "detector,x,y,predicted_p0";
    if (data.truth) {
        const int n_true = data.truth->n_true;
        const PosteriorSummary& n = f.get("N");
        summary["truth"] = {{"n_true", n_true},
                            {"rb", encode_double(relative_bias(n.mean, n_true))},
                            {"covered", coverage_indicator(n.q025, n.q975, n_true)},
                            {"sse", encode_double(f.surface.sse(data.truth->p0))}};
        surface += ",truth_p0";
    }
    surface += "\n";
    const DetectorGrid g = data.grid();
    for (int j = 0; j < g.size(); ++j) {
        const auto idx = static_cast<std::size_t>(j);
        surface += fmt::format("{},{},{},{:.6g}", j, g[j].x, g[j].y, f.surface_mean[idx]);
        if (data.truth) surface += fmt::format(",{:.6g}", data.truth->p0[idx]);
        surface += "\n";
    }
    write_file_atomic(out / "summary.json", dump_json(summary));
    write_file_atomic(out / "surface.csv", surface);
    write_file_atomic(out / "diagnostics.tsv", f.report.to_table(false));
    write_file_atomic(out / "timing.json", dump_json({{"chains", timing}, {"runtime_seconds", f.runtime}}));

    const PosteriorSummary& n = f.get("N");
    std::cout << fmt::format("{}: N mean {:.1f} (95% CI {:.1f} to {:.1f}), WAIC {:.2f}\n", spec.label(), n.mean, n.q025,
                             n.q975, f.waic.waic);
    std::cout << f.report.to_table(true);
    if (a.require_convergence && !f.report.converged) throw GateFailed("convergence gate failed: " + f.report.failure);
    return kOk;
}

// diagnose ------------------------------------------------------------------

struct DiagnoseArgs {
    std::string fit;
    std::string out;
    double rhat_threshold = 1.1;
    double ess_floor = 400.0;
    bool split_rhat = false;
    bool require_convergence = false;
};

int cmd_diagnose(const DiagnoseArgs& a) {
    const fs::path dir(a.fit);
    std::vector<Chain> chains;
    for (int c = 0; fs::exists(dir / fmt::format("chain_{}.tsv", c)); ++c) {
        chains.push_back(read_chain(dir / fmt::format("chain_{}.tsv", c)));
    }
    if (chains.empty()) throw FormatError(fmt::format("{} contains no chain_0.tsv", dir.string()));
    const fs::path timing_path = dir / "timing.json";
    double runtime = 0.0;
    if (fs::exists(timing_path)) runtime = json::parse(read_file(timing_path)).at("runtime_seconds").get<double>();
    std::vector<NamedTraces> params;
    for (std::size_t k = 0; k < chains.front().names.size(); ++k) {
        const std::string& name = chains.front().names[k];
        if (name == "psi") continue;
        NamedTraces t{name, {}};
        for (const auto& c : chains) t.chains.push_back(std::vector<double>(c.trace(name).begin(), c.trace(name).end()));
        params.push_back(std::move(t));
    }
    const ConvergenceReport rep = assess(params, runtime, a.rhat_threshold, a.ess_floor, a.split_rhat);
    std::cout << rep.to_table(runtime > 0.0);
    if (!a.out.empty()) write_file_atomic(a.out, rep.to_table(false));
    if (a.require_convergence && !rep.converged) throw GateFailed("convergence gate failed: " + rep.failure);
    return kOk;
}

// study / report ------------------------------------------------------------

struct StudyArgs {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    bool resume = false;
    std::optional<int> workers;
};

int cmd_study(const StudyArgs& a) {
    StudyConfig cfg = parse_study_config(read_file(a.config));
    StudyOptions opts;
    opts.resume = a.resume;
    opts.workers = a.workers ? *a.workers : env_workers(cfg.workers);
    opts.log = [](const std::string& line) { std::cerr << line << '\n'; };
    const StudyResult r = run_study(cfg, a.seed, a.out, opts);
    write_report(r, a.out, fs::path(a.out) / "report");
    std::cout << fmt::format("study complete: {} datasets, {} fits; report in {}\n", r.datasets.size(), r.fits.size(),
                             (fs::path(a.out) / "report").string());
    return kOk;
}

struct ReportArgs {
    std::string study;
    std::string out;
};

int cmd_report(const ReportArgs& a) {
    const StudyResult r = load_study(a.study);
    const fs::path out = a.out.empty() ? fs::path(a.study) / "report" : fs::path(a.out);
    for (const auto& name : write_report(r, a.study, out)) std::cout << (out / name).string() << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial capture-recapture simulation and MCMC fitting"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Simulate one dataset from the scenario catalog");
    s->add_option("--scenario", sim.scenario, "Scenario id (1-10)")->required();
    s->add_option("--replicate", sim.replicate, "Replicate number")->check(CLI::PositiveNumber);
    s->add_option("--seed", sim.seed, "Base seed")->required();
    s->add_option("--out", sim.out, "Dataset file")->required();
    s->add_flag("--desk", sim.desk, "Use the desk-scale layout");
    s->add_flag("--no-truth", sim.no_truth, "Omit the truth block");

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "Fit one model to a dataset file");
    f->add_option("--data", fit.data, "Dataset file")->required();
    f->add_option("--model", fit.model, "SCR, RE, SARE, FM or FE")->required();
    f->add_option("--aggregation", fit.aggregation, "Cluster side length in detectors");
    f->add_option("--radius", fit.radius, "Local-evaluation radius in du, or 'none'");
    f->add_option("--seed", fit.seed, "Base seed")->required();
    f->add_option("--out", fit.out, "Output directory")->required();
    f->add_option("--iterations", fit.iterations, "Iterations per chain");
    f->add_option("--burn-in", fit.burn_in, "Burn-in iterations");
    f->add_option("--thin", fit.thin, "Thinning interval");
    f->add_option("--chains", fit.chains, "Number of chains")->check(CLI::PositiveNumber);
    f->add_option("--workers", fit.workers, "Parallel chains")->check(CLI::PositiveNumber);
    f->add_option("--rhat-threshold", fit.rhat_threshold, "Rhat gate");
    f->add_option("--ess-floor", fit.ess_floor, "ESS gate");
    f->add_flag("--split-rhat", fit.split_rhat, "Use split-chain Rhat");
    f->add_flag("--require-convergence", fit.require_convergence, "Exit 4 when the gate fails");

    DiagnoseArgs diag;
    auto* d = app.add_subcommand("diagnose", "Convergence diagnostics for a fit directory");
    d->add_option("--fit", diag.fit, "Directory written by fit")->required();
    d->add_option("--out", diag.out, "Write the table (without efficiency) to this file");
    d->add_option("--rhat-threshold", diag.rhat_threshold, "Rhat gate");
    d->add_option("--ess-floor", diag.ess_floor, "ESS gate");
    d->add_flag("--split-rhat", diag.split_rhat, "Use split-chain Rhat");
    d->add_flag("--require-convergence", diag.require_convergence, "Exit 4 when the gate fails");

    StudyArgs study;
    auto* st = app.add_subcommand("study", "Run a replicated simulation study");
    st->add_option("--config", study.config, "YAML study configuration")->required();
    st->add_option("--out", study.out, "Study directory")->required();
    st->add_option("--seed", study.seed, "Base seed")->required();
    st->add_flag("--resume", study.resume, "Continue a partial study");
    st->add_option("--workers", study.workers, "Worker threads (SCR_WORKERS overrides the config)")
        ->check(CLI::PositiveNumber);

    ReportArgs rep;
    auto* r = app.add_subcommand("report", "Regenerate report tables from a study directory");
    r->add_option("--study", rep.study, "Study directory")->required();
    r->add_option("--out", rep.out, "Report directory (default: <study>/report)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (s->parsed()) return cmd_simulate(sim);
        if (f->parsed()) return cmd_fit(fit);
        if (d->parsed()) return cmd_diagnose(diag);
        if (st->parsed()) return cmd_study(study);
        if (r->parsed()) return cmd_report(rep);
    } catch (const GateFailed& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNotConverged;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    }
    return kInternal;
}
