#include "scrhet/surfaces.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace scrhet {

namespace {

constexpr double kCholeskyJitter = 1e-10;

void check_eta(double eta) {
    if (!(eta > 0.0 && eta < 1.0)) {
        throw std::invalid_argument(fmt::format("eta must lie in (0, 1), got {}", eta));
    }
}

}  // namespace

std::string_view to_string(SurfaceKind kind) {
    return kind == SurfaceKind::continuous ? "continuous" : "categorical";
}

SurfaceKind surface_kind_from_string(std::string_view s) {
    if (s == "continuous") return SurfaceKind::continuous;
    if (s == "categorical") return SurfaceKind::categorical;
    throw std::invalid_argument(fmt::format("unknown surface kind '{}'", s));
}

Eigen::MatrixXd exponential_covariance(const Eigen::MatrixXd& distances, double phi) {
    if (!(phi >= 0.0)) {
        throw std::invalid_argument(fmt::format("decay rate phi must be >= 0, got {}", phi));
    }
    Eigen::MatrixXd cov = (-phi * distances.array()).exp().matrix();
    cov.diagonal().setOnes();
    return cov;
}

GaussianField::GaussianField(const Eigen::MatrixXd& covariance) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariance);
    if (llt.info() != Eigen::Success) {
        Eigen::MatrixXd jittered = covariance;
        jittered.diagonal().array() += kCholeskyJitter;
        llt.compute(jittered);
        if (llt.info() != Eigen::Success) {
            throw std::runtime_error(
                "Cholesky factorization of the field covariance failed even after adding "
                "1e-10 diagonal jitter; the covariance is not positive definite (duplicate "
                "locations or phi = 0?)");
        }
        jittered_ = true;
    }
    factor_ = llt.matrixL();
}

std::vector<double> GaussianField::sample(Rng& rng) const {
    const Eigen::Index n = factor_.rows();
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        z(i) = standard_normal(rng);
    }
    const Eigen::VectorXd w = factor_.triangularView<Eigen::Lower>() * z;
    return {w.data(), w.data() + n};
}

std::vector<double> sample_gaussian_field(const Eigen::MatrixXd& covariance, Rng& rng) {
    return GaussianField(covariance).sample(rng);
}

BaselineSurface continuous_surface(std::span<const double> w, double eta) {
    check_eta(eta);
    BaselineSurface out;
    out.w.assign(w.begin(), w.end());
    out.eta = eta;
    out.kind = SurfaceKind::continuous;
    const double mu = logit(eta);
    out.p0.reserve(w.size());
    for (double wj : w) {
        out.p0.push_back(inverse_logit(mu + wj));
    }
    return out;
}

BaselineSurface categorical_surface(std::span<const double> w, double eta) {
    check_eta(eta);
    const std::size_t n = w.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return w[a] < w[b]; });
    const std::size_t n_inactive = (n + 1) / 2;

    BaselineSurface out;
    out.w.assign(w.begin(), w.end());
    out.eta = eta;
    out.kind = SurfaceKind::categorical;
    out.p0.assign(n, eta);
    for (std::size_t k = 0; k < n_inactive; ++k) {
        out.p0[order[k]] = 0.0;
    }
    return out;
}

double morans_i(std::span<const double> values, const DetectorGrid& grid) {
    if (static_cast<int>(values.size()) != grid.size()) {
        throw std::invalid_argument(fmt::format("Moran's I: {} values for a grid of {} detectors",
                                                values.size(), grid.size()));
    }
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double denom = 0.0;
    for (double v : values) denom += (v - mean) * (v - mean);
    if (!(denom > 0.0)) {
        throw std::invalid_argument("Moran's I is undefined for a constant surface");
    }
    // Each unordered rook pair counted once; weights are symmetric.
    double num = 0.0;
    double pairs = 0.0;
    for (int r = 0; r < grid.ny(); ++r) {
        for (int c = 0; c < grid.nx(); ++c) {
            const double a = values[static_cast<std::size_t>(grid.index(r, c))] - mean;
            if (c + 1 < grid.nx()) {
                num += a * (values[static_cast<std::size_t>(grid.index(r, c + 1))] - mean);
                pairs += 1.0;
            }
            if (r + 1 < grid.ny()) {
                num += a * (values[static_cast<std::size_t>(grid.index(r + 1, c))] - mean);
                pairs += 1.0;
            }
        }
    }
    if (pairs == 0.0) {
        throw std::invalid_argument("Moran's I needs at least one pair of adjacent detectors");
    }
    return (n / (2.0 * pairs)) * (2.0 * num) / denom;
}

}  // namespace scrhet
