#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scrhet/diagnostics.hpp"
#include "scrhet/sampler.hpp"

using namespace scrhet;

namespace {

// Dataset on an nx x ny lattice; `hits[i]` lists the detectors of row i.
Dataset make_data(int nx, int ny, double buffer, int m, const std::vector<std::vector<int>>& hits) {
    Dataset d;
    d.scenario.nx = nx;
    d.scenario.ny = ny;
    d.scenario.buffer = buffer;
    d.scenario.m = m;
    d.scenario.n_true = 0;
    d.m = m;
    const int J = nx * ny;
    d.y.assign(static_cast<std::size_t>(m * J), 0);
    for (std::size_t i = 0; i < hits.size(); ++i)
        for (int j : hits[i]) d.y[i * static_cast<std::size_t>(J) + static_cast<std::size_t>(j)] = 1;
    d.n_detected = static_cast<int>(hits.size());
    return d;
}

ChainState base_state(const ModelContext& ctx) {
    ChainState st;
    st.s.assign(static_cast<std::size_t>(ctx.m()), Point{ctx.habitat().xmin + 0.5, ctx.habitat().ymin + 0.5});
    st.z.assign(static_cast<std::size_t>(ctx.m()), 1);
    const auto C = static_cast<std::size_t>(ctx.clusters().n_clusters());
    st.w.assign(C, 0.0);
    st.u.assign(C, 1);
    return st;
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

}  // namespace

TEST_CASE("inclusion conditional, single detector") {
    const ModelContext ctx(make_data(1, 1, 3.0, 2, {{0}}), ModelSpec{});
    ChainState st = base_state(ctx);
    st.psi = 0.5;
    st.p0 = 0.5;
    st.sigma = 1.0;
    st.s[1] = ctx.grid()[0];
    Sampler smp(ctx, McmcConfig{}, 1, st);
    CHECK(smp.inclusion_probability(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("inclusion conditional without information equals psi") {
    ModelSpec spec;
    spec.radius = 2.0;
    const ModelContext ctx(make_data(1, 1, 10.0, 2, {}), spec);
    ChainState st = base_state(ctx);
    st.psi = 0.6;
    st.s[0] = {ctx.habitat().xmin, ctx.habitat().ymin};  // beyond the radius
    Sampler smp(ctx, McmcConfig{}, 1, st);
    CHECK(smp.inclusion_probability(0) == doctest::Approx(0.6).epsilon(1e-14));
}

TEST_CASE("detected rows stay included") {
    const auto data = simulate_scenario(desk_scale(catalog_scenario(3)), 1);
    const ModelContext ctx(data, ModelSpec{});
    Sampler smp(ctx, McmcConfig{}, 3);
    for (int it = 0; it < 50; ++it) {
        smp.update_inclusion();
        for (int i = 0; i < data.n_detected; ++i) CHECK(smp.state().z[static_cast<std::size_t>(i)] == 1);
        const int n = smp.state().population();
        CHECK(n >= data.n_detected);
        CHECK(n <= data.m);
    }
}

TEST_CASE("absent individuals move freely inside the habitat") {
    ModelSpec spec;
    const ModelContext ctx(make_data(2, 2, 500.0, 5, {}), spec);
    ChainState st = base_state(ctx);
    st.z.assign(5, 0);
    for (auto& s : st.s) s = {500.0, 500.0};
    McmcConfig cfg;
    Sampler smp(ctx, cfg, 4, st);
    smp.set_adapting(false);
    int moved = 0, tries = 0;
    for (int it = 0; it < 2000; ++it) {
        const auto before = smp.state().s;
        smp.update_activity_centers();
        for (std::size_t i = 0; i < before.size(); ++i) {
            ++tries;
            moved += (before[i].x != smp.state().s[i].x);
        }
    }
    CHECK(moved == tries);
}

TEST_CASE("proposals outside the habitat are rejected") {
    const ModelContext ctx(make_data(1, 1, 0.01, 1, {{0}}), ModelSpec{});
    ChainState st = base_state(ctx);
    st.s[0] = ctx.grid()[0];
    McmcConfig cfg;
    cfg.scales.ac = 50.0;
    Sampler smp(ctx, cfg, 5, st);
    smp.set_adapting(false);
    for (int it = 0; it < 200; ++it) {
        smp.update_activity_centers();
        CHECK(ctx.habitat().contains(smp.state().s[0]));
    }
}

TEST_CASE("membership conditional") {
    ModelSpec spec;
    spec.kind = ModelKind::fm;
    const ModelContext ctx(make_data(2, 1, 2.0, 3, {{0, 1}, {1}}), spec);
    ChainState st = base_state(ctx);
    st.s[0] = {2.3, 2.1};
    st.s[1] = {3.2, 1.7};
    st.s[2] = {4.5, 3.0};
    st.sigma = 1.2;
    st.pi = 0.35;
    st.eta1 = 0.4;
    st.eta2 = 0.4;
    {
        Sampler smp(ctx, McmcConfig{}, 1, st);
        CHECK(smp.membership_probability(0) == doctest::Approx(0.35).epsilon(1e-14));
    }

    st.eta1 = 0.15;
    st.eta2 = 0.6;
    Sampler smp(ctx, McmcConfig{}, 1, st);
    const auto g = ctx.grid();
    for (int c = 0; c < 2; ++c) {
        // enumerate the three rows' terms at detector c under each group
        double l[2] = {0.0, 0.0};
        for (int grp = 0; grp < 2; ++grp) {
            const double p0 = grp ? st.eta2 : st.eta1;
            for (int i = 0; i < 3; ++i) {
                const auto k = static_cast<std::size_t>(i);
                const double d2 = squared_distance(st.s[k], g[c]);
                const double p = p0 * std::exp(-d2 / (2 * st.sigma * st.sigma));
                l[grp] += ctx.data().detected(i, c) ? std::log(p) : std::log(1 - p);
            }
        }
        const double num = st.pi * std::exp(l[1]);
        const double expect = num / (num + (1 - st.pi) * std::exp(l[0]));
        CHECK(std::abs(smp.membership_probability(c) - expect) < 1e-12);
    }
}

TEST_CASE("membership with an impossible low group") {
    ModelSpec spec;
    spec.kind = ModelKind::fm;
    std::vector<std::vector<int>> hits(6, std::vector<int>{0});
    const ModelContext ctx(make_data(2, 1, 2.0, 8, hits), spec);
    ChainState st = base_state(ctx);
    for (auto& s : st.s) s = ctx.grid()[0];
    st.eta1 = 1e-6;
    st.eta2 = 0.7;
    Sampler smp(ctx, McmcConfig{}, 1, st);
    CHECK(smp.membership_probability(0) > 1.0 - 1e-12);
}

TEST_CASE("detection posterior mean matches quadrature") {
    // Fixed activity centers, inclusion and sigma: only p0 moves.
    const ModelContext ctx(make_data(3, 1, 2.0, 3, {{0}, {1, 2}}), ModelSpec{});
    ChainState st = base_state(ctx);
    st.s = {{2.4, 2.3}, {3.6, 1.8}, {4.9, 2.6}};
    st.sigma = 1.3;
    st.p0 = 0.5;
    McmcConfig cfg;
    cfg.freeze.sigma = true;
    Sampler smp(ctx, cfg, 11, st);

    auto loglik = [&](double p0) {
        double ll = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const auto k = static_cast<std::size_t>(i);
                const double p = p0 * std::exp(-squared_distance(st.s[k], ctx.grid()[j]) / (2 * st.sigma * st.sigma));
                ll += ctx.data().detected(i, j) ? std::log(p) : std::log1p(-p);
            }
        return ll;
    };
    double num = 0.0, den = 0.0;
    const int n = 1000000;
    for (int k = 0; k < n; ++k) {
        const double x = -15.0 + 30.0 * (k + 0.5) / n;
        const double p = 1.0 / (1.0 + std::exp(-x));
        const double w = std::exp(-x * x / 8.0 + loglik(p));
        num += p * w;
        den += w;
    }
    const double exact = num / den;

    for (int it = 0; it < 5000; ++it) smp.update_scalars();
    smp.set_adapting(false);
    double sum = 0.0;
    const int draws = 200000;
    for (int it = 0; it < draws; ++it) {
        smp.update_scalars();
        sum += smp.state().p0;
    }
    CHECK(std::abs(sum / draws - exact) < 0.005);
}

TEST_CASE("sigma posterior matches quadrature with the rescaling move") {
    // p0 and inclusion fixed; sigma and both activity centers move.
    ModelSpec spec;
    spec.priors.sigma_upper = 3.0;
    const ModelContext ctx(make_data(2, 2, 1.5, 2, {{0, 1}, {3}}), spec);
    ChainState st = base_state(ctx);
    st.s = {{2.0, 1.6}, {2.4, 2.6}};
    st.sigma = 1.0;
    st.p0 = 0.7;
    McmcConfig cfg;
    cfg.freeze.inclusion = true;
    cfg.freeze.detection = true;
    Sampler smp(ctx, cfg, 21, st);

    const Habitat& hab = ctx.habitat();
    auto marginal = [&](int i, double sigma) {
        const int q = 120;
        double total = 0.0;
        for (int u = 0; u < q; ++u)
            for (int v = 0; v < q; ++v) {
                const Point s{hab.xmin + hab.width() * (u + 0.5) / q, hab.ymin + hab.height() * (v + 0.5) / q};
                double lik = 1.0;
                for (int j = 0; j < 4; ++j) {
                    const double p = st.p0 * std::exp(-squared_distance(s, ctx.grid()[j]) / (2 * sigma * sigma));
                    lik *= ctx.data().detected(i, j) ? p : 1 - p;
                }
                total += lik;
            }
        return total;
    };
    double num = 0.0, den = 0.0;
    const int n = 300;
    for (int k = 0; k < n; ++k) {
        const double sigma = 3.0 * (k + 0.5) / n;
        const double w = marginal(0, sigma) * marginal(1, sigma);
        num += sigma * w;
        den += w;
    }
    const double exact = num / den;

    for (int it = 0; it < 5000; ++it) smp.sweep();
    smp.set_adapting(false);
    smp.reset_acceptance();
    double sum = 0.0;
    const int draws = 300000;
    for (int it = 0; it < draws; ++it) {
        smp.sweep();
        sum += smp.state().sigma;
    }
    CHECK(std::abs(sum / draws - exact) < 0.01);
    bool used = false;
    for (const auto& b : smp.block_stats())
        if (b.name == "sigma_s") used = b.accepted > 0;
    CHECK(used);
}

TEST_CASE("random effects without data recover the prior") {
    ModelSpec spec;
    spec.kind = ModelKind::re;
    const ModelContext ctx(make_data(2, 2, 2.0, 1, {}), spec);
    ChainState st = base_state(ctx);
    st.z = {0};
    st.sigma_w = 1.0;
    Sampler smp(ctx, McmcConfig{}, 8, st);
    for (int it = 0; it < 2000; ++it) smp.update_random_effects();
    smp.set_adapting(false);
    std::vector<double> w0;
    for (int it = 0; it < 100000; ++it) {
        smp.update_random_effects();
        w0.push_back(smp.state().w[0]);
    }
    CHECK(std::abs(mean(w0)) < 0.1);
}

TEST_CASE("tiny sigma_w shrinks the random effects") {
    ModelSpec spec;
    spec.kind = ModelKind::re;
    const ModelContext ctx(make_data(2, 2, 2.0, 2, {{0, 3}}), spec);
    ChainState st = base_state(ctx);
    st.s[0] = {2.5, 2.5};
    st.sigma_w = 1e-3;
    Sampler smp(ctx, McmcConfig{}, 9, st);
    for (int it = 0; it < 2000; ++it) smp.update_random_effects();
    smp.set_adapting(false);
    std::vector<double> w;
    for (int it = 0; it < 20000; ++it) {
        smp.update_random_effects();
        w.push_back(smp.state().w[1]);
    }
    const double m = mean(w);
    double ss = 0.0;
    for (double x : w) ss += (x - m) * (x - m);
    CHECK(std::sqrt(ss / static_cast<double>(w.size())) < 0.01);
}

TEST_CASE("strongly correlated SARE effects move together") {
    ModelSpec spec;
    spec.kind = ModelKind::sare;
    const ModelContext ctx(make_data(2, 1, 2.0, 1, {}), spec);
    ChainState st = base_state(ctx);
    st.z = {0};
    st.log_phi = std::log(-std::log(0.999));
    Sampler smp(ctx, McmcConfig{}, 10, st);
    for (int it = 0; it < 5000; ++it) smp.update_random_effects();
    smp.set_adapting(false);
    std::vector<double> a, b;
    for (int it = 0; it < 50000; ++it) {
        smp.update_random_effects();
        a.push_back(smp.state().w[0]);
        b.push_back(smp.state().w[1]);
    }
    const double ma = mean(a), mb = mean(b);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        sab += (a[k] - ma) * (b[k] - mb);
        saa += (a[k] - ma) * (a[k] - ma);
        sbb += (b[k] - mb) * (b[k] - mb);
    }
    CHECK(sab / std::sqrt(saa * sbb) > 0.99);
}

TEST_CASE("proposal scales are constant once adaptation stops") {
    const auto data = simulate_scenario(desk_scale(catalog_scenario(4)), 2);
    ModelSpec spec;
    spec.kind = ModelKind::sare;
    spec.aggregation = 4;
    const ModelContext ctx(data, spec);
    Sampler smp(ctx, McmcConfig{}, 12);
    for (int it = 0; it < 100; ++it) smp.sweep();
    smp.set_adapting(false);
    const auto before = smp.block_stats();
    for (int it = 0; it < 100; ++it) smp.sweep();
    const auto after = smp.block_stats();
    REQUIRE(before.size() == after.size());
    for (std::size_t k = 0; k < before.size(); ++k) CHECK(before[k].scale == after[k].scale);
}

TEST_CASE("chains are deterministic and respect the population bounds") {
    const auto data = simulate_scenario(desk_scale(catalog_scenario(9)), 6);
    for (auto kind : {ModelKind::scr, ModelKind::re, ModelKind::sare, ModelKind::fm, ModelKind::fe}) {
        ModelSpec spec;
        spec.kind = kind;
        spec.aggregation = (kind == ModelKind::scr || kind == ModelKind::fe) ? 1 : 4;
        if (kind == ModelKind::fe) spec.covariate = data.truth->w;
        const ModelContext ctx(data, spec);
        McmcConfig cfg;
        cfg.n_iterations = 300;
        cfg.burn_in = 100;
        cfg.thin = 2;
        cfg.seed = 77;
        const Chain a = run_chain(ctx, cfg, 1);
        const Chain b = run_chain(ctx, cfg, 1);
        CHECK(a.traces == b.traces);
        CHECK(a.retained() == 100);
        CHECK(a.names == parameter_names(kind));
        for (double n : a.trace("N")) {
            CHECK(n >= data.n_detected);
            CHECK(n <= data.m);
        }
        const Chain c = run_chain(ctx, cfg, 2);
        CHECK(c.traces != a.traces);
    }
}

TEST_CASE("parallel chains equal serial chains") {
    const auto data = simulate_scenario(desk_scale(catalog_scenario(1)), 4);
    const ModelContext ctx(data, ModelSpec{});
    McmcConfig cfg;
    cfg.n_iterations = 200;
    cfg.burn_in = 50;
    cfg.n_chains = 3;
    cfg.seed = 5;
    const auto serial = run_chains(ctx, cfg, 1);
    const auto parallel = run_chains(ctx, cfg, 3);
    for (std::size_t k = 0; k < 3; ++k) CHECK(serial[k].traces == parallel[k].traces);
}

TEST_CASE("non-finite initial states are reported") {
    const ModelContext ctx(make_data(2, 2, 2.0, 2, {{0}}), ModelSpec{});
    ChainState st = base_state(ctx);
    st.s[0] = {-5.0, -5.0};
    try {
        Sampler smp(ctx, McmcConfig{}, 1, st);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("row 0") != std::string::npos);
    }
}

TEST_CASE("SCR recovers abundance at desk scale") {
    const auto data = simulate_scenario(desk_scale(catalog_scenario(3)), 2024);
    const ModelContext ctx(data, ModelSpec{});
    McmcConfig cfg;
    cfg.n_iterations = 4000;
    cfg.burn_in = 1000;
    cfg.n_chains = 2;
    cfg.seed = 3;
    const auto chains = run_chains(ctx, cfg);
    std::vector<double> n;
    for (const auto& c : chains) n.insert(n.end(), c.trace("N").begin(), c.trace("N").end());
    // One data set: the truth should sit inside the 95% interval.
    const PosteriorSummary post = summarize_samples(n);
    CHECK(post.q025 <= 75.0);
    CHECK(post.q975 >= 75.0);
}

TEST_CASE("independent chains on an easy problem agree") {
    const auto data = simulate_scenario(desk_scale(catalog_scenario(5)), 17);
    const ModelContext ctx(data, ModelSpec{});
    McmcConfig cfg;
    cfg.n_iterations = 12000;
    cfg.burn_in = 2000;
    cfg.n_chains = 3;
    cfg.seed = 8;
    const auto chains = run_chains(ctx, cfg);
    for (const char* name : {"psi", "sigma", "p0"}) {
        std::vector<std::vector<double>> tr;
        for (const auto& c : chains) tr.emplace_back(c.trace(name).begin(), c.trace(name).end());
        CHECK_MESSAGE(gelman_rubin(tr) <= 1.01, name);
    }
}

TEST_CASE("configuration validation") {
    McmcConfig cfg;
    cfg.burn_in = cfg.n_iterations;
    CHECK_THROWS(cfg.validate());
    cfg = McmcConfig{};
    cfg.thin = 0;
    CHECK_THROWS(cfg.validate());
    cfg = McmcConfig{};
    cfg.n_chains = 0;
    CHECK_THROWS(cfg.validate());
}
