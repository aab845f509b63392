#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "scrhet/geometry.hpp"
#include "scrhet/surfaces.hpp"

using namespace scrhet;

TEST_CASE("exponential covariance limits") {
    const auto d = pairwise_detector_distances(build_detector_grid(4, 4, 1.0));
    const auto flat = exponential_covariance(d, 0.0);
    CHECK((flat.array() == 1.0).all());

    const auto ident = exponential_covariance(d, 1e6);
    for (int i = 0; i < ident.rows(); ++i) {
        CHECK(ident(i, i) == 1.0);
        for (int j = 0; j < ident.cols(); ++j)
            if (i != j) CHECK(ident(i, j) < 1e-300);
    }

    Eigen::MatrixXd one(2, 2);
    one << 0, 1, 1, 0;
    CHECK(exponential_covariance(one, 1.0)(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK_THROWS(exponential_covariance(one, -0.1));
}

TEST_CASE("covariance is monotone in phi and distance") {
    const auto d = pairwise_detector_distances(build_detector_grid(5, 5, 1.0));
    const auto a = exponential_covariance(d, 0.2);
    const auto b = exponential_covariance(d, 0.7);
    CHECK((b.array() <= a.array()).all());
    CHECK(a(0, 1) > a(0, 2));
    CHECK(a(0, 2) > a(0, 3));
}

TEST_CASE("identity covariance yields independent standard normals") {
    Rng a(5), b(5);
    const auto w = sample_gaussian_field(Eigen::MatrixXd::Identity(3, 3), a);
    REQUIRE(w.size() == 3);
    for (double x : w) CHECK(x == standard_normal(b));
}

TEST_CASE("field draws are reproducible") {
    const auto cov = exponential_covariance(pairwise_detector_distances(build_detector_grid(6, 6, 1.0)), 0.3);
    Rng a(99), b(99);
    CHECK(sample_gaussian_field(cov, a) == sample_gaussian_field(cov, b));
}

TEST_CASE("empirical correlation of a two-point field") {
    Eigen::MatrixXd cov(2, 2);
    cov << 1.0, 0.5, 0.5, 1.0;
    const GaussianField field(cov);
    Rng rng(2024);
    double sxy = 0, sxx = 0, syy = 0, sx = 0, sy = 0;
    const int n = 100000;
    for (int r = 0; r < n; ++r) {
        const auto w = field.sample(rng);
        sx += w[0];
        sy += w[1];
        sxy += w[0] * w[1];
        sxx += w[0] * w[0];
        syy += w[1] * w[1];
    }
    const double mx = sx / n, my = sy / n;
    const double r = (sxy / n - mx * my) / std::sqrt((sxx / n - mx * mx) * (syy / n - my * my));
    CHECK(r == doctest::Approx(0.5).epsilon(0.02));
    CHECK(std::abs(r - 0.5) < 0.01);
}

TEST_CASE("marginal variance of the phi = 0.05 paper field") {
    const auto grid = build_detector_grid(32, 32, 1.0);
    const GaussianField field(exponential_covariance(pairwise_detector_distances(grid), 0.05));
    Rng rng(7);
    const int n = 10000;
    std::vector<double> s(1024, 0.0), ss(1024, 0.0);
    for (int r = 0; r < n; ++r) {
        const auto w = field.sample(rng);
        for (std::size_t j = 0; j < w.size(); ++j) {
            s[j] += w[j];
            ss[j] += w[j] * w[j];
        }
    }
    for (int j : {0, 31, 500, 1023}) {
        const auto k = static_cast<std::size_t>(j);
        const double var = ss[k] / n - (s[k] / n) * (s[k] / n);
        CHECK(std::abs(var - 1.0) < 0.05);
    }
}

TEST_CASE("duplicate locations fail factorization") {
    Eigen::MatrixXd cov(2, 2);
    cov << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS(GaussianField{cov});
}

TEST_CASE("continuous surface") {
    const std::vector<double> zero(5, 0.0);
    for (double p : continuous_surface(zero, 0.3).p0) CHECK(p == doctest::Approx(0.3).epsilon(1e-14));

    const std::vector<double> lift{logit(0.6) - logit(0.1)};
    CHECK(continuous_surface(lift, 0.1).p0[0] == doctest::Approx(0.6).epsilon(1e-14));

    const std::vector<double> one{1.0};
    CHECK(continuous_surface(one, 0.5).p0[0] == doctest::Approx(0.7310585786300049).epsilon(1e-14));

    CHECK_THROWS(continuous_surface(one, 0.0));
    CHECK_THROWS(continuous_surface(one, 1.0));
}

TEST_CASE("logit inversion recovers W") {
    Rng rng(3);
    std::vector<double> w(200);
    for (auto& x : w) x = 4.0 * standard_normal(rng);
    const auto s = continuous_surface(w, 0.27);
    for (std::size_t j = 0; j < w.size(); ++j) {
        const double p = s.p0[j];
        if (p < 1e-9 || p > 1 - 1e-9) continue;
        // Above 1/2 the spacing of doubles near 1 limits how well logit(p)
        // can be resolved.
        const double tol = p <= 0.5 ? 1e-12 : std::max(1e-12, 4e-16 / (1.0 - p));
        CHECK(std::abs(logit(p) - logit(0.27) - w[j]) < tol);
    }
}

TEST_CASE("categorical median split") {
    const std::vector<double> w{-1.0, -0.5, 0.5, 1.0};
    const auto s = categorical_surface(w, 0.3);
    CHECK(s.p0 == std::vector<double>{0.0, 0.0, 0.3, 0.3});

    Rng rng(17);
    std::vector<double> big(1024);
    for (auto& x : big) x = standard_normal(rng);
    const auto c = categorical_surface(big, 0.1);
    CHECK(std::count(c.p0.begin(), c.p0.end(), 0.0) == 512);
    CHECK(std::set<double>(c.p0.begin(), c.p0.end()) == std::set<double>{0.0, 0.1});

    std::vector<double> odd{0.3, -2.0, 1.0, 0.0, 5.0};
    const auto o = categorical_surface(odd, 0.2);
    CHECK(std::count(o.p0.begin(), o.p0.end(), 0.0) == 3);
    CHECK(o.p0[3] == 0.0);  // the median itself is inactive
}

TEST_CASE("categorical ties at the median") {
    const std::vector<double> w{0.0, 0.0, 0.0, 0.0};
    const auto s = categorical_surface(w, 0.3);
    CHECK(std::count(s.p0.begin(), s.p0.end(), 0.0) == 2);
    CHECK(s.p0 == std::vector<double>{0.0, 0.0, 0.3, 0.3});
}

TEST_CASE("Moran's I on a checkerboard") {
    const auto g = build_detector_grid(8, 8, 1.0);
    std::vector<double> v(64);
    for (int j = 0; j < 64; ++j) v[static_cast<std::size_t>(j)] = ((g.row_of(j) + g.col_of(j)) % 2) ? 1.0 : -1.0;
    CHECK(morans_i(v, g) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_THROWS(morans_i(std::vector<double>(64, 2.0), g));
    CHECK_THROWS(morans_i(std::vector<double>(10, 2.0), g));
}

TEST_CASE("Moran's I hand computation on a 3x1 strip") {
    // values 1, 2, 3; rook pairs (0,1), (1,2) counted in both directions
    const auto g = build_detector_grid(3, 1, 1.0);
    const std::vector<double> v{1.0, 2.0, 3.0};
    // z = (-1, 0, 1); sum_ij w z_i z_j = 2 * (0 + 0) = 0; so I = 0
    CHECK(morans_i(v, g) == doctest::Approx(0.0));
    const std::vector<double> u{1.0, 3.0, 2.0};
    // z = (-1, 1, 0): cross = 2 * (-1 + 0) = -2; S0 = 4; n = 3; sum z^2 = 2
    CHECK(morans_i(u, g) == doctest::Approx(3.0 / 4.0 * (-2.0) / 2.0));
}

TEST_CASE("Moran's I regimes") {
    const auto g = build_detector_grid(32, 32, 1.0);
    const auto d = pairwise_detector_distances(g);
    Rng rng(42);
    const GaussianField smooth(exponential_covariance(d, 0.05));
    const GaussianField rough(exponential_covariance(d, 1.0));
    std::vector<double> hi, lo;
    for (int r = 0; r < 15; ++r) {
        hi.push_back(morans_i(smooth.sample(rng), g));
        lo.push_back(morans_i(rough.sample(rng), g));
    }
    std::sort(hi.begin(), hi.end());
    std::sort(lo.begin(), lo.end());
    CHECK(hi[7] > 0.8);
    CHECK(lo[7] > 0.15);
    CHECK(lo[7] < 0.45);
}
