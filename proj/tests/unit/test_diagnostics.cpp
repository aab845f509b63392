#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "scrhet/diagnostics.hpp"

using namespace scrhet;

namespace {

std::vector<double> normals(Rng& rng, int n, double mean = 0.0) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = mean + standard_normal(rng);
    return v;
}

std::vector<double> ar1(Rng& rng, int n, double rho) {
    std::vector<double> v(static_cast<std::size_t>(n));
    double x = standard_normal(rng) / std::sqrt(1 - rho * rho);
    for (auto& y : v) {
        x = rho * x + standard_normal(rng);
        y = x;
    }
    return v;
}

}  // namespace

TEST_CASE("ESS of iid normals") {
    Rng rng(1);
    const auto v = normals(rng, 10000);
    const double ess = effective_sample_size(v);
    CHECK(ess >= 9000);
    CHECK(ess <= 11000);
}

TEST_CASE("ESS of an AR(1) sequence") {
    Rng rng(2);
    const auto v = ar1(rng, 10000, 0.9);
    const double analytic = 10000.0 * 0.1 / 1.9;
    CHECK(std::abs(effective_sample_size(v) - analytic) <= 0.3 * analytic);
}

TEST_CASE("ESS of an alternating sequence is capped at the length") {
    Rng rng(3);
    std::vector<double> v(1000);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = (k % 2 ? 1.0 : -1.0) + 0.01 * standard_normal(rng);
    CHECK(effective_sample_size(v) == 1000.0);
}

TEST_CASE("ESS errors and invariance") {
    CHECK_THROWS(effective_sample_size(std::vector<double>(500, 1.0)));
    CHECK_THROWS(effective_sample_size(std::vector<double>(50, 1.0)));
    Rng rng(4);
    const auto v = ar1(rng, 3000, 0.6);
    std::vector<double> w(v.size());
    std::transform(v.begin(), v.end(), w.begin(), [](double x) { return -3.0 * x + 7.0; });
    CHECK(effective_sample_size(w) == doctest::Approx(effective_sample_size(v)).epsilon(1e-9));
}

TEST_CASE("Rhat of chains from one distribution") {
    Rng rng(5);
    std::vector<std::vector<double>> c{normals(rng, 10000), normals(rng, 10000), normals(rng, 10000)};
    CHECK(gelman_rubin(c) < 1.05);
    CHECK(gelman_rubin(c, true) < 1.05);
}

TEST_CASE("Rhat of separated chains") {
    Rng rng(6);
    std::vector<std::vector<double>> c{normals(rng, 1000), normals(rng, 1000, 10.0)};
    CHECK(gelman_rubin(c) > 2.0);
}

TEST_CASE("Rhat of a permuted copy") {
    Rng rng(7);
    auto a = normals(rng, 2000);
    auto b = a;
    std::shuffle(b.begin(), b.end(), rng);
    std::vector<std::vector<double>> c{a, b};
    CHECK(gelman_rubin(c) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("Rhat hand computation") {
    // chains (0..9) and (1..10): B = n * var(means) = 10 * 0.5 = 5, W = 55/6
    std::vector<std::vector<double>> c(2);
    for (int k = 0; k < 10; ++k) {
        c[0].push_back(k);
        c[1].push_back(k + 1);
    }
    const double W = 55.0 / 6.0, B = 5.0, n = 10.0;
    const double var = (n - 1) / n * W + B / n;
    CHECK(gelman_rubin(c) == doctest::Approx(std::sqrt(var / W)).epsilon(1e-12));
}

TEST_CASE("Rhat errors and affine invariance") {
    Rng rng(8);
    std::vector<std::vector<double>> one{normals(rng, 100)};
    CHECK_THROWS(gelman_rubin(one));
    std::vector<std::vector<double>> uneven{normals(rng, 100), normals(rng, 99)};
    CHECK_THROWS(gelman_rubin(uneven));
    std::vector<std::vector<double>> flat{std::vector<double>(50, 1.0), std::vector<double>(50, 1.0)};
    CHECK_THROWS(gelman_rubin(flat));
    std::vector<std::vector<double>> c{normals(rng, 500), normals(rng, 500, 0.3)};
    auto d = c;
    for (auto& ch : d)
        for (auto& x : ch) x = 2.5 * x - 4.0;
    CHECK(gelman_rubin(d) == doctest::Approx(gelman_rubin(c)).epsilon(1e-12));
}

TEST_CASE("convergence gate") {
    Rng rng(9);
    std::vector<NamedTraces> ok{{"a", {normals(rng, 2000), normals(rng, 2000), normals(rng, 2000)}},
                                {"b", {normals(rng, 2000), normals(rng, 2000), normals(rng, 2000)}}};
    const auto good = assess(ok, 2.0);
    CHECK(good.converged);
    CHECK(good.failure.empty());
    CHECK(good.get("a").efficiency == doctest::Approx(good.get("a").ess / 2.0));

    auto bad = ok;
    bad[1].chains[2] = normals(rng, 2000, 1.5);
    const auto r = assess(bad, 2.0);
    CHECK(r.get("b").rhat > 1.1);
    CHECK_FALSE(r.converged);

    std::vector<NamedTraces> slow{{"a", {ar1(rng, 1600, 0.8), ar1(rng, 1600, 0.8)}}};
    const auto s = assess(slow, 1.0);
    REQUIRE(s.get("a").ess > 300);
    REQUIRE(s.get("a").ess < 400);
    CHECK(s.get("a").rhat <= 1.1);
    CHECK_FALSE(s.converged);
    CHECK(assess(slow, 1.0, 1.1, 300.0).converged);
}

TEST_CASE("gate treats undefined diagnostics as failure") {
    std::vector<NamedTraces> flat{{"a", {std::vector<double>(200, 1.0), std::vector<double>(200, 1.0)}}};
    const auto r = assess(flat, 1.0);
    CHECK_FALSE(r.converged);
    CHECK(std::isnan(r.get("a").rhat));
}

TEST_CASE("report table") {
    Rng rng(10);
    std::vector<NamedTraces> p{{"N", {normals(rng, 500), normals(rng, 500)}}};
    const auto r = assess(p, 1.0);
    const auto with = r.to_table(true);
    const auto without = r.to_table(false);
    CHECK(with.find("N") != std::string::npos);
    CHECK(with.size() > without.size());
}

TEST_CASE("autocorrelation at lag 0 is one") {
    Rng rng(11);
    const auto rho = autocorrelation(ar1(rng, 1000, 0.5));
    CHECK(rho[0] == doctest::Approx(1.0));
    CHECK(rho[1] == doctest::Approx(0.5).epsilon(0.3));
}
