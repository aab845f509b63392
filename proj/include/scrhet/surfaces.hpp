#pragma once

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "scrhet/geometry.hpp"
#include "scrhet/random.hpp"

namespace scrhet {

enum class SurfaceKind { continuous, categorical };

std::string_view to_string(SurfaceKind kind);
SurfaceKind surface_kind_from_string(std::string_view s);

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double inverse_logit(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Entrywise exp(-phi * distance). Diagonal is forced to exactly 1.
Eigen::MatrixXd exponential_covariance(const Eigen::MatrixXd& distances, double phi);

/// Zero-mean Gaussian field with a fixed covariance; the lower Cholesky
/// factor is computed once and reused for every draw.
class GaussianField {
public:
    explicit GaussianField(const Eigen::MatrixXd& covariance);

    int size() const { return static_cast<int>(factor_.rows()); }
    const Eigen::MatrixXd& factor() const { return factor_; }
    bool jittered() const { return jittered_; }

    std::vector<double> sample(Rng& rng) const;

private:
    Eigen::MatrixXd factor_;
    bool jittered_ = false;
};

/// One draw W ~ MVN(0, cov).
std::vector<double> sample_gaussian_field(const Eigen::MatrixXd& covariance, Rng& rng);

struct BaselineSurface {
    std::vector<double> p0;
    std::vector<double> w;
    double eta = 0.0;
    SurfaceKind kind = SurfaceKind::continuous;
};

/// p0_j = inverse_logit(logit(eta) + W_j).
BaselineSurface continuous_surface(std::span<const double> w, double eta);

/// p0_j = 0 for the lower half of W (ceil(J/2) detectors, ties broken by
/// detector index), eta elsewhere.
BaselineSurface categorical_surface(std::span<const double> w, double eta);

/// Moran's I with binary rook adjacency on the detector lattice.
double morans_i(std::span<const double> values, const DetectorGrid& grid);

}  // namespace scrhet
