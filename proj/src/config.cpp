#include "scrhet/config.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

namespace scrhet {

namespace {

std::string where(const YAML::Node& n) {
    const YAML::Mark m = n.Mark();
    if (m.is_null()) return "";
    return fmt::format("line {}, column {}: ", m.line + 1, m.column + 1);
}

[[noreturn]] void fail(const YAML::Node& n, const std::string& key, const std::string& msg) {
    throw ConfigError(fmt::format("{}{}: {}", where(n), key, msg));
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& key) {
    if (!n.IsScalar()) fail(n, key, "expected a scalar value");
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        fail(n, key, fmt::format("cannot read '{}' as {}", n.Scalar(),
                                 std::is_same_v<T, bool> ? "a boolean"
                                 : std::is_integral_v<T> ? "an integer"
                                                         : "a number"));
    }
}

std::vector<int> int_list(const YAML::Node& n, const std::string& key) {
    if (!n.IsSequence()) fail(n, key, "expected a list of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(scalar<int>(n[i], fmt::format("{}[{}]", key, i)));
    return out;
}

void check_keys(const YAML::Node& map, const std::string& context, std::initializer_list<std::string_view> allowed) {
    if (!map.IsMap()) fail(map, context.empty() ? "config" : context, "expected a mapping");
    for (const auto& kv : map) {
        const auto key = kv.first.as<std::string>();
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            fail(kv.first, context.empty() ? key : context + "." + key, "unknown key");
        }
    }
}

void read_mcmc(const YAML::Node& n, const std::string& ctx, McmcConfig& cfg) {
    if (n["iterations"]) cfg.n_iterations = scalar<int>(n["iterations"], ctx + "iterations");
    if (n["burn_in"]) cfg.burn_in = scalar<int>(n["burn_in"], ctx + "burn_in");
    if (n["thin"]) cfg.thin = scalar<int>(n["thin"], ctx + "thin");
    if (n["target_acceptance"]) cfg.target_acceptance = scalar<double>(n["target_acceptance"], ctx + "target_acceptance");
    if (n["adapt_decay"]) cfg.adapt_decay = scalar<double>(n["adapt_decay"], ctx + "adapt_decay");
}

void read_priors(const YAML::Node& n, Priors& p) {
    check_keys(n, "priors", {"sigma_upper", "logit_p0_sd", "mu_sd", "sigma_w_upper", "log_phi_sd"});
    if (n["sigma_upper"]) p.sigma_upper = scalar<double>(n["sigma_upper"], "priors.sigma_upper");
    if (n["logit_p0_sd"]) p.logit_p0_sd = scalar<double>(n["logit_p0_sd"], "priors.logit_p0_sd");
    if (n["mu_sd"]) p.mu_sd = scalar<double>(n["mu_sd"], "priors.mu_sd");
    if (n["sigma_w_upper"]) p.sigma_w_upper = scalar<double>(n["sigma_w_upper"], "priors.sigma_w_upper");
    if (n["log_phi_sd"]) p.log_phi_sd = scalar<double>(n["log_phi_sd"], "priors.log_phi_sd");
}

}  // namespace

std::string_view to_string(SurfaceReference r) {
    return r == SurfaceReference::cluster ? "cluster" : "per_detector";
}

std::vector<ModelRun> default_model_runs() {
    std::vector<ModelRun> out;
    auto add = [&](ModelKind kind, int agg) {
        ModelRun r;
        r.spec.kind = kind;
        r.spec.aggregation = agg;
        r.mcmc = default_mcmc_config(kind, agg);
        out.push_back(std::move(r));
    };
    add(ModelKind::scr, 1);
    add(ModelKind::re, 1);
    add(ModelKind::re, 4);
    add(ModelKind::sare, 1);
    add(ModelKind::sare, 4);
    add(ModelKind::fm, 1);
    add(ModelKind::fm, 4);
    add(ModelKind::fe, 1);
    return out;
}

Scenario StudyConfig::scenario(int id) const {
    Scenario s = catalog_scenario(id);
    if (profile == "desk") s = desk_scale(s);
    if (scale.nx) s.nx = *scale.nx;
    if (scale.ny) s.ny = *scale.ny;
    if (scale.n_true) s.n_true = *scale.n_true;
    if (scale.m) s.m = *scale.m;
    if (scale.sigma) s.sigma = *scale.sigma;
    if (scale.spacing) s.spacing = *scale.spacing;
    if (scale.buffer) s.buffer = *scale.buffer;
    return s;
}

bool StudyConfig::fits(const ModelRun& run, int scenario_id) const {
    return run.scenarios.empty() ||
           std::find(run.scenarios.begin(), run.scenarios.end(), scenario_id) != run.scenarios.end();
}

void StudyConfig::validate() const {
    if (profile != "paper" && profile != "desk") {
        throw ConfigError(fmt::format("profile: expected 'paper' or 'desk', got '{}'", profile));
    }
    if (replicates < 0) throw ConfigError("replicates: must be >= 0");
    if (chains < 1) throw ConfigError("chains: must be >= 1");
    if (workers < 1) throw ConfigError("workers: must be >= 1");
    if (!(rhat_threshold >= 1.0)) throw ConfigError("rhat_threshold: must be >= 1");
    if (!(ess_floor >= 0.0)) throw ConfigError("ess_floor: must be >= 0");
    std::set<int> seen;
    for (int id : scenarios) {
        if (!seen.insert(id).second) throw ConfigError(fmt::format("scenarios: {} is listed twice", id));
        Scenario s;
        try {
            s = scenario(id);
            s.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(fmt::format("scenarios: {}", e.what()));
        }
        for (std::size_t k = 0; k < models.size(); ++k) {
            const ModelRun& run = models[k];
            if (!fits(run, id)) continue;
            ModelSpec spec = run.spec;
            if (spec.kind == ModelKind::fe) spec.covariate.assign(static_cast<std::size_t>(s.nx * s.ny), 0.0);
            try {
                spec.validate(s.grid());
            } catch (const std::invalid_argument& e) {
                throw ConfigError(fmt::format("models[{}]: {}", k, e.what()));
            }
        }
    }
    std::set<std::string> labels;
    for (std::size_t k = 0; k < models.size(); ++k) {
        const ModelRun& run = models[k];
        if (!labels.insert(run.spec.label()).second) {
            throw ConfigError(fmt::format("models[{}]: {} is listed twice", k, run.spec.label()));
        }
        for (int id : run.scenarios) {
            if (!seen.count(id)) {
                throw ConfigError(fmt::format("models[{}].scenarios: {} is not a study scenario", k, id));
            }
        }
        try {
            run.mcmc.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(fmt::format("models[{}]: {}", k, e.what()));
        }
    }
}

StudyConfig parse_study_config(std::string_view text) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::ParserException& e) {
        throw ConfigError(fmt::format("line {}, column {}: {}", e.mark.line + 1, e.mark.column + 1, e.msg));
    }
    StudyConfig cfg;
    if (root.IsNull()) {
        cfg.models = default_model_runs();
        cfg.validate();
        return cfg;
    }
    check_keys(root, "",
               {"profile", "scenarios", "replicates", "chains", "workers", "rhat_threshold", "ess_floor",
                "split_rhat", "surface_reference", "scale", "priors", "mcmc", "models"});
    if (root["profile"]) cfg.profile = scalar<std::string>(root["profile"], "profile");
    if (root["scenarios"]) cfg.scenarios = int_list(root["scenarios"], "scenarios");
    if (root["replicates"]) cfg.replicates = scalar<int>(root["replicates"], "replicates");
    if (root["chains"]) cfg.chains = scalar<int>(root["chains"], "chains");
    if (root["workers"]) cfg.workers = scalar<int>(root["workers"], "workers");
    if (root["rhat_threshold"]) cfg.rhat_threshold = scalar<double>(root["rhat_threshold"], "rhat_threshold");
    if (root["ess_floor"]) cfg.ess_floor = scalar<double>(root["ess_floor"], "ess_floor");
    if (root["split_rhat"]) cfg.split_rhat = scalar<bool>(root["split_rhat"], "split_rhat");
    if (const auto n = root["surface_reference"]) {
        const auto v = scalar<std::string>(n, "surface_reference");
        if (v == "per_detector") {
            cfg.reference = SurfaceReference::per_detector;
        } else if (v == "cluster") {
            cfg.reference = SurfaceReference::cluster;
        } else {
            fail(n, "surface_reference", fmt::format("expected 'per_detector' or 'cluster', got '{}'", v));
        }
    }
    if (const auto n = root["scale"]) {
        check_keys(n, "scale", {"nx", "ny", "n_true", "m", "sigma", "spacing", "buffer"});
        if (n["nx"]) cfg.scale.nx = scalar<int>(n["nx"], "scale.nx");
        if (n["ny"]) cfg.scale.ny = scalar<int>(n["ny"], "scale.ny");
        if (n["n_true"]) cfg.scale.n_true = scalar<int>(n["n_true"], "scale.n_true");
        if (n["m"]) cfg.scale.m = scalar<int>(n["m"], "scale.m");
        if (n["sigma"]) cfg.scale.sigma = scalar<double>(n["sigma"], "scale.sigma");
        if (n["spacing"]) cfg.scale.spacing = scalar<double>(n["spacing"], "scale.spacing");
        if (n["buffer"]) cfg.scale.buffer = scalar<double>(n["buffer"], "scale.buffer");
    }
    Priors priors;
    if (root["priors"]) read_priors(root["priors"], priors);
    std::optional<McmcConfig> shared;
    if (const auto n = root["mcmc"]) {
        check_keys(n, "mcmc", {"iterations", "burn_in", "thin", "target_acceptance", "adapt_decay"});
        shared = McmcConfig{};
        read_mcmc(n, "mcmc.", *shared);
    }

    if (const auto n = root["models"]) {
        if (!n.IsSequence()) fail(n, "models", "expected a list of model entries");
        for (std::size_t k = 0; k < n.size(); ++k) {
            const YAML::Node e = n[k];
            const std::string ctx = fmt::format("models[{}]", k);
            check_keys(e, ctx, {"model", "aggregation", "radius", "iterations", "burn_in", "thin",
                                "target_acceptance", "adapt_decay", "scenarios"});
            if (!e["model"]) fail(e, ctx + ".model", "missing");
            ModelRun run;
            try {
                run.spec.kind = model_kind_from_string(scalar<std::string>(e["model"], ctx + ".model"));
            } catch (const std::invalid_argument& ex) {
                fail(e["model"], ctx + ".model", ex.what());
            }
            if (e["aggregation"]) run.spec.aggregation = scalar<int>(e["aggregation"], ctx + ".aggregation");
            if (const auto r = e["radius"]) {
                if (r.IsScalar() && r.Scalar() == "none") {
                    run.spec.radius.reset();
                } else {
                    run.spec.radius = scalar<double>(r, ctx + ".radius");
                }
            }
            run.spec.priors = priors;
            run.mcmc = shared ? *shared : default_mcmc_config(run.spec.kind, run.spec.aggregation);
            read_mcmc(e, ctx + ".", run.mcmc);
            if (e["scenarios"]) run.scenarios = int_list(e["scenarios"], ctx + ".scenarios");
            cfg.models.push_back(std::move(run));
        }
    } else {
        cfg.models = default_model_runs();
        for (auto& run : cfg.models) {
            run.spec.priors = priors;
            if (shared) run.mcmc = *shared;
        }
    }
    for (auto& run : cfg.models) run.mcmc.n_chains = cfg.chains;
    cfg.validate();
    return cfg;
}

std::string emit_study_config(const StudyConfig& cfg) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "profile" << YAML::Value << cfg.profile;
    out << YAML::Key << "scenarios" << YAML::Value << YAML::Flow << cfg.scenarios;
    out << YAML::Key << "replicates" << YAML::Value << cfg.replicates;
    out << YAML::Key << "chains" << YAML::Value << cfg.chains;
    out << YAML::Key << "workers" << YAML::Value << cfg.workers;
    out << YAML::Key << "rhat_threshold" << YAML::Value << cfg.rhat_threshold;
    out << YAML::Key << "ess_floor" << YAML::Value << cfg.ess_floor;
    out << YAML::Key << "split_rhat" << YAML::Value << cfg.split_rhat;
    out << YAML::Key << "surface_reference" << YAML::Value << std::string(to_string(cfg.reference));
    const ScaleOverrides& sc = cfg.scale;
    if (sc.nx || sc.ny || sc.n_true || sc.m || sc.sigma || sc.spacing || sc.buffer) {
        out << YAML::Key << "scale" << YAML::Value << YAML::BeginMap;
        if (sc.nx) out << YAML::Key << "nx" << YAML::Value << *sc.nx;
        if (sc.ny) out << YAML::Key << "ny" << YAML::Value << *sc.ny;
        if (sc.n_true) out << YAML::Key << "n_true" << YAML::Value << *sc.n_true;
        if (sc.m) out << YAML::Key << "m" << YAML::Value << *sc.m;
        if (sc.sigma) out << YAML::Key << "sigma" << YAML::Value << *sc.sigma;
        if (sc.spacing) out << YAML::Key << "spacing" << YAML::Value << *sc.spacing;
        if (sc.buffer) out << YAML::Key << "buffer" << YAML::Value << *sc.buffer;
        out << YAML::EndMap;
    }
    // Priors are shared by all models in the grammar.
    const Priors p = cfg.models.empty() ? Priors{} : cfg.models.front().spec.priors;
    out << YAML::Key << "priors" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "sigma_upper" << YAML::Value << p.sigma_upper;
    out << YAML::Key << "logit_p0_sd" << YAML::Value << p.logit_p0_sd;
    out << YAML::Key << "mu_sd" << YAML::Value << p.mu_sd;
    out << YAML::Key << "sigma_w_upper" << YAML::Value << p.sigma_w_upper;
    out << YAML::Key << "log_phi_sd" << YAML::Value << p.log_phi_sd;
    out << YAML::EndMap;
    out << YAML::Key << "models" << YAML::Value << YAML::BeginSeq;
    for (const auto& run : cfg.models) {
        out << YAML::BeginMap;
        out << YAML::Key << "model" << YAML::Value << std::string(to_string(run.spec.kind));
        out << YAML::Key << "aggregation" << YAML::Value << run.spec.aggregation;
        out << YAML::Key << "radius" << YAML::Value;
        if (run.spec.radius) {
            out << *run.spec.radius;
        } else {
            out << "none";
        }
        out << YAML::Key << "iterations" << YAML::Value << run.mcmc.n_iterations;
        out << YAML::Key << "burn_in" << YAML::Value << run.mcmc.burn_in;
        out << YAML::Key << "thin" << YAML::Value << run.mcmc.thin;
        out << YAML::Key << "target_acceptance" << YAML::Value << run.mcmc.target_acceptance;
        out << YAML::Key << "adapt_decay" << YAML::Value << run.mcmc.adapt_decay;
        if (!run.scenarios.empty()) out << YAML::Key << "scenarios" << YAML::Value << YAML::Flow << run.scenarios;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

std::string canonical_config(const StudyConfig& cfg) {
    nlohmann::json models = nlohmann::json::array();
    for (const auto& run : cfg.models) {
        const Priors& p = run.spec.priors;
        models.push_back({{"model", run.spec.label()},
                          {"radius", run.spec.radius ? nlohmann::json(*run.spec.radius) : nlohmann::json("none")},
                          {"priors", {p.sigma_upper, p.logit_p0_sd, p.mu_sd, p.sigma_w_upper, p.log_phi_sd}},
                          {"iterations", run.mcmc.n_iterations},
                          {"burn_in", run.mcmc.burn_in},
                          {"thin", run.mcmc.thin},
                          {"target_acceptance", run.mcmc.target_acceptance},
                          {"adapt_decay", run.mcmc.adapt_decay},
                          {"scenarios", run.scenarios}});
    }
    nlohmann::json scen = nlohmann::json::array();
    for (int id : cfg.scenarios) {
        const Scenario s = cfg.scenario(id);
        scen.push_back({{"id", s.id}, {"eta", s.eta}, {"phi", s.phi}, {"kind", std::string(to_string(s.kind))},
                        {"n_true", s.n_true}, {"m", s.m}, {"sigma", s.sigma}, {"nx", s.nx}, {"ny", s.ny},
                        {"spacing", s.spacing}, {"buffer", s.buffer}});
    }
    const nlohmann::json j{{"profile", cfg.profile},
                           {"scenarios", scen},
                           {"replicates", cfg.replicates},
                           {"chains", cfg.chains},
                           {"rhat_threshold", cfg.rhat_threshold},
                           {"ess_floor", cfg.ess_floor},
                           {"split_rhat", cfg.split_rhat},
                           {"surface_reference", std::string(to_string(cfg.reference))},
                           {"models", models}};
    return j.dump();
}

}  // namespace scrhet
