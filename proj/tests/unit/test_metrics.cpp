#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "scrhet/metrics.hpp"

using namespace scrhet;

TEST_CASE("relative bias") {
    CHECK(relative_bias(330, 300) == doctest::Approx(0.10).epsilon(1e-14));
    CHECK(relative_bias(300, 300) == 0.0);
    CHECK(relative_bias(210, 300) == doctest::Approx(-0.30).epsilon(1e-14));
    CHECK_THROWS(relative_bias(1.0, 0.0));
}

TEST_CASE("coefficient of variation uses divisor R") {
    CHECK(coefficient_of_variation(std::vector<double>(10, 4.0)) == 0.0);
    CHECK(coefficient_of_variation(std::vector<double>{1.0, 3.0}) == 0.5);
    CHECK_THROWS(coefficient_of_variation(std::vector<double>{-1.0, 1.0}));
}

TEST_CASE("coverage") {
    CHECK(coverage_indicator(290, 315, 300));
    CHECK_FALSE(coverage_indicator(250, 295, 300));
    CHECK(coverage_indicator(300, 300, 300));
    CHECK_THROWS(coverage_indicator(3, 2, 1));
    const bool flags[] = {true, false, true, true};
    CHECK(coverage_rate(flags) == 0.75);
    CHECK(std::isnan(coverage_rate(std::span<const bool>{})));
}

TEST_CASE("surface SSE") {
    Eigen::MatrixXd at_truth(3, 2);
    at_truth << 0.1, 0.5, 0.1, 0.5, 0.1, 0.5;
    const std::vector<double> truth{0.1, 0.5};
    CHECK(sse_surface(at_truth, truth) == 0.0);

    Eigen::MatrixXd one(1, 1);
    one << 0.4;
    CHECK(sse_surface(one, std::vector<double>{0.3}) == doctest::Approx(0.01).epsilon(1e-12));

    Eigen::MatrixXd two(2, 1);
    two << 0.2, 0.4;
    CHECK(sse_surface(two, std::vector<double>{0.3}) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK_THROWS(sse_surface(two, truth));
}

TEST_CASE("surface moments agree with the explicit SSE") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd draws(50, 4);
    SurfaceMoments a(4), b(4);
    for (int r = 0; r < 50; ++r) {
        std::vector<double> row(4);
        for (int j = 0; j < 4; ++j) row[static_cast<std::size_t>(j)] = draws(r, j) = u(rng);
        (r < 20 ? a : b).add(row);
    }
    a.merge(b);
    const std::vector<double> truth{0.2, 0.4, 0.6, 0.8};
    CHECK(a.sse(truth) == doctest::Approx(sse_surface(draws, truth)).epsilon(1e-12));
    CHECK(a.count() == 50);
}

TEST_CASE("SSE decreases as draws are replaced by the truth") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd draws(20, 5);
    for (int r = 0; r < 20; ++r)
        for (int j = 0; j < 5; ++j) draws(r, j) = u(rng);
    std::vector<double> truth(5);
    for (auto& t : truth) t = u(rng);
    double prev = sse_surface(draws, truth);
    for (int r = 0; r < 20; ++r) {
        for (int j = 0; j < 5; ++j) draws(r, j) = truth[static_cast<std::size_t>(j)];
        const double now = sse_surface(draws, truth);
        CHECK(now <= prev);
        prev = now;
    }
    CHECK(prev == 0.0);
}

TEST_CASE("delta scores") {
    CHECK(delta_scores(std::vector<double>{10, 12, 15}) == std::vector<double>{0, 2, 5});
    CHECK(delta_scores(std::vector<double>{7}) == std::vector<double>{0});
    CHECK(delta_scores(std::vector<double>{3, 3, 3}) == std::vector<double>{0, 0, 0});
    CHECK(best_index(std::vector<double>{3, 3, 3}) == 0);
    CHECK(best_index(std::vector<double>{5, 2, 2}) == 1);
}

TEST_CASE("WAIC on a 3x2 matrix") {
    Eigen::MatrixXd ll(3, 2);
    ll << -1.0, -2.0, -1.5, -2.5, -0.5, -3.0;
    // column 0: lppd = log((e^-1 + e^-1.5 + e^-0.5) / 3); var = 0.25 (mean -1, divisor 2)
    // column 1: lppd = log((e^-2 + e^-2.5 + e^-3) / 3); var = 0.25
    const double l0 = std::log((std::exp(-1.0) + std::exp(-1.5) + std::exp(-0.5)) / 3.0);
    const double l1 = std::log((std::exp(-2.0) + std::exp(-2.5) + std::exp(-3.0)) / 3.0);
    const double pw = 0.25 + 0.25;
    const auto w = waic(ll);
    CHECK(std::abs(w.lppd - (l0 + l1)) < 1e-12);
    CHECK(std::abs(w.p_w - pw) < 1e-12);
    CHECK(std::abs(w.waic - (-2.0 * (l0 + l1) + 2.0 * pw)) < 1e-12);

    Eigen::MatrixXd ll2(3, 2);
    ll2 << -0.3, -7.0, -0.3, -1.0, -0.9, -4.0;
    const double a = std::log((2 * std::exp(-0.3) + std::exp(-0.9)) / 3.0);
    const double b = std::log((std::exp(-7.0) + std::exp(-1.0) + std::exp(-4.0)) / 3.0);
    const double va = (0.04 + 0.04 + 0.16) / 2.0;  // mean -0.5
    const double vb = (9.0 + 9.0 + 0.0) / 2.0;     // mean -4
    const auto w2 = waic(ll2);
    CHECK(std::abs(w2.waic - (-2.0 * (a + b) + 2.0 * (va + vb))) < 1e-12);
}

TEST_CASE("WAIC degenerate cases") {
    Eigen::MatrixXd one(1, 3);
    one << -1, -2, -3;
    CHECK_THROWS(waic(one));
    Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(4, 3, -1.7);
    const auto w = waic(flat);
    CHECK(w.p_w == 0.0);
    CHECK(w.waic == doctest::Approx(-2.0 * 3 * -1.7).epsilon(1e-14));
    Eigen::MatrixXd bad = flat;
    bad(1, 1) = -INFINITY;
    CHECK_THROWS(waic(bad));
}

TEST_CASE("WAIC invariances and streaming equivalence") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    Eigen::MatrixXd ll(40, 6);
    for (int r = 0; r < 40; ++r)
        for (int i = 0; i < 6; ++i) ll(r, i) = -2.0 + n01(rng);
    const auto base = waic(ll);

    Eigen::MatrixXd rev = ll.colwise().reverse();
    CHECK(waic(rev).waic == doctest::Approx(base.waic).epsilon(1e-12));
    Eigen::MatrixXd swapped = ll.rowwise().reverse();
    CHECK(waic(swapped).waic == doctest::Approx(base.waic).epsilon(1e-12));

    Eigen::MatrixXd shifted = ll;
    shifted.col(2).array() += 3.25;
    const auto s = waic(shifted);
    CHECK(s.pointwise_lppd[2] - base.pointwise_lppd[2] == doctest::Approx(3.25).epsilon(1e-12));

    PointwiseAccumulator a(6), b(6);
    for (int r = 0; r < 40; ++r) {
        std::vector<double> row(6);
        for (int i = 0; i < 6; ++i) row[static_cast<std::size_t>(i)] = ll(r, i);
        (r % 3 ? a : b).add(row);
    }
    a.merge(b);
    const auto st = a.result();
    CHECK(st.lppd == doctest::Approx(base.lppd).epsilon(1e-12));
    CHECK(st.p_w == doctest::Approx(base.p_w).epsilon(1e-10));
}

TEST_CASE("log-mean-exp does not overflow") {
    const std::vector<double> big{1000.0, 1000.0};
    CHECK(log_mean_exp(big) == doctest::Approx(1000.0));
    const std::vector<double> tiny{-1000.0, -1000.0 + std::log(3.0)};
    CHECK(log_mean_exp(tiny) == doctest::Approx(-1000.0 + std::log(2.0)));
}

TEST_CASE("posterior summary") {
    const std::vector<double> v{1, 2, 3, 4, 5};
    const auto s = summarize_samples(v);
    CHECK(s.mean == 3.0);
    CHECK(s.sd == doctest::Approx(std::sqrt(2.0)));
    CHECK(s.q50 == 3.0);
    CHECK(s.q025 == doctest::Approx(1.1));
    CHECK(s.q975 == doctest::Approx(4.9));
    CHECK(s.q025 <= s.q50);
    CHECK(s.q50 <= s.q975);
}
