#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "scrhet/model.hpp"

namespace scrhet {

/// p0 * exp(-d^2 / (2 sigma^2)).
double half_normal_detection(double p0, double d, double sigma);

/// Per-detector baseline detection probabilities implied by `state`.
std::vector<double> resolve_baseline(const ChainState& state, const ModelSpec& spec,
                                     const ClusterMap& clusters);

/// log f(y_i | s_i, z_i). Detectors farther than `radius` from s_i have
/// detection probability 0. Returns -inf for impossible rows.
double individual_loglik(std::span<const std::uint8_t> y, Point s, int z,
                         std::span<const double> p0, double sigma, const DetectorGrid& grid,
                         std::optional<double> radius);

/// Prior log-density of the model's top-level parameters (psi, sigma and
/// the kind-specific detection parameters). -inf outside the support.
double log_prior(const ChainState& state, const ModelSpec& spec);

/// Log-density of the latent detection effects: independent normals (RE),
/// MVN(0, Gamma(phi)) (SARE), Bernoulli memberships (FM); 0 otherwise.
double latent_effect_log_density(const ChainState& state, const ModelSpec& spec,
                                 const Eigen::MatrixXd& cluster_distances);

/// MVN(0, cov) log-density of w.
double mvn_log_density(std::span<const double> w, const Eigen::MatrixXd& cov);

/// Sum of individual log-likelihoods, inclusion terms, uniform activity
/// center densities, priors and latent-effect densities.
double full_logposterior(const ChainState& state, const ModelContext& ctx);
double full_logposterior(const ChainState& state, const Dataset& data, const ModelSpec& spec);

/// z-marginalized log-likelihood of one capture history given the
/// z = 1 log-likelihood `loglik_if_present`.
double marginal_row_loglik(double loglik_if_present, double psi, bool detected);

inline double normal_log_density(double x, double mean, double sd) {
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    const double r = (x - mean) / sd;
    return -0.5 * r * r - std::log(sd) - kHalfLog2Pi;
}

}  // namespace scrhet
