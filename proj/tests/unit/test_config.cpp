#include <doctest.h>

#include "scrhet/config.hpp"

using namespace scrhet;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_study_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("empty config gives the paper defaults") {
    const auto cfg = parse_study_config("");
    CHECK(cfg.profile == "paper");
    CHECK(cfg.replicates == 100);
    CHECK(cfg.chains == 3);
    CHECK(cfg.rhat_threshold == 1.1);
    CHECK(cfg.ess_floor == 400.0);
    CHECK(cfg.scenarios.size() == 10);
    REQUIRE(cfg.models.size() == 8);
    for (const auto& m : cfg.models) {
        CHECK(m.spec.priors.sigma_upper == 50.0);
        CHECK(m.spec.priors.mu_sd == 2.0);
        CHECK(m.spec.priors.log_phi_sd == 5.0);
        CHECK(m.spec.radius == 10.0);
    }
    CHECK(cfg.models[0].spec.kind == ModelKind::scr);
    CHECK(cfg.models[0].mcmc.n_iterations == 30000);
    CHECK(cfg.models[0].mcmc.burn_in == 12000);
    CHECK(cfg.models[4].spec.label() == "SARE-4x4");
    CHECK(cfg.models[4].mcmc.n_iterations == 100000);
    CHECK(cfg.models[6].mcmc.n_iterations == 20000);
    CHECK(cfg.models[6].mcmc.burn_in == 4000);
    CHECK(cfg.scenario(3).n_true == 300);
}

TEST_CASE("desk profile and overrides") {
    const auto cfg = parse_study_config(R"(
profile: desk
scenarios: [4, 10]
replicates: 2
chains: 2
mcmc: {iterations: 500, burn_in: 100}
scale: {buffer: 4}
models:
  - {model: SCR}
  - {model: SARE, aggregation: 4, iterations: 800, scenarios: [4]}
  - {model: FE, radius: none}
)");
    CHECK(cfg.scenario(4).nx == 16);
    CHECK(cfg.scenario(4).n_true == 75);
    CHECK(cfg.scenario(4).m == 150);
    CHECK(cfg.scenario(4).buffer == 4.0);
    REQUIRE(cfg.models.size() == 3);
    CHECK(cfg.models[0].mcmc.n_iterations == 500);
    CHECK(cfg.models[1].mcmc.n_iterations == 800);
    CHECK(cfg.models[1].mcmc.burn_in == 100);
    CHECK(cfg.models[1].mcmc.n_chains == 2);
    CHECK(cfg.fits(cfg.models[1], 4));
    CHECK_FALSE(cfg.fits(cfg.models[1], 10));
    CHECK(cfg.fits(cfg.models[0], 10));
    CHECK_FALSE(cfg.models[2].spec.radius.has_value());
}

TEST_CASE("validation errors name the key") {
    const auto agg = error_of("models:\n  - {model: RE, aggregation: 3}\n");
    CHECK(contains(agg, "models[0]"));
    CHECK(contains(agg, "divide"));

    const auto sc = error_of("scenarios: [1, 11]\n");
    CHECK(contains(sc, "scenarios"));
    CHECK(contains(sc, "1-10"));

    CHECK(contains(error_of("replicates: -1\n"), "replicates"));
    CHECK(contains(error_of("profile: huge\n"), "profile"));
    CHECK(contains(error_of("models:\n  - {model: XYZ}\n"), "models[0].model"));
    CHECK(contains(error_of("mcmc: {iterations: 10, burn_in: 20}\n"), "models[0]"));
    CHECK(contains(error_of("chains: three\n"), "chains"));
}

TEST_CASE("unknown keys and syntax errors carry positions") {
    const auto unknown = error_of("replicates: 3\nbogus: 1\n");
    CHECK(contains(unknown, "bogus"));
    CHECK(contains(unknown, "line 2"));
    const auto syntax = error_of("scenarios: [1, 2\nreplicates: 3\n");
    CHECK(contains(syntax, "line"));
    CHECK(contains(syntax, "column"));
    CHECK(contains(error_of("priors: {sigma_uper: 3}\n"), "sigma_uper"));
}

TEST_CASE("emitted config parses back to the same config") {
    const auto cfg = parse_study_config(R"(
profile: desk
scenarios: [3, 9]
replicates: 4
rhat_threshold: 1.05
ess_floor: 250
split_rhat: true
surface_reference: cluster
priors: {sigma_upper: 20, mu_sd: 1.5}
models:
  - {model: FM, aggregation: 4, iterations: 900, burn_in: 300, thin: 3}
  - {model: RE, radius: 7.5, scenarios: [3]}
)");
    const auto text = emit_study_config(cfg);
    const auto back = parse_study_config(text);
    CHECK(emit_study_config(back) == text);
    CHECK(canonical_config(back) == canonical_config(cfg));
    CHECK(back.reference == SurfaceReference::cluster);
    CHECK(back.models[0].mcmc.thin == 3);
    CHECK(back.models[1].spec.radius == 7.5);
    CHECK(back.models[1].spec.priors.sigma_upper == 20.0);
}

TEST_CASE("worker count does not change the canonical config") {
    const auto a = parse_study_config("workers: 1\n");
    const auto b = parse_study_config("workers: 4\n");
    CHECK(canonical_config(a) == canonical_config(b));
}
