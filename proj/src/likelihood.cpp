#include "scrhet/likelihood.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "scrhet/surfaces.hpp"

namespace scrhet {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool in_unit_interval(double p) { return p > 0.0 && p < 1.0; }

double log_bernoulli(int x, double p) { return x ? std::log(p) : std::log1p(-p); }

}  // namespace

double half_normal_detection(double p0, double d, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument(fmt::format("sigma must be > 0, got {}", sigma));
    return p0 * std::exp(-d * d / (2.0 * sigma * sigma));
}

std::vector<double> resolve_baseline(const ChainState& state, const ModelSpec& spec,
                                     const ClusterMap& clusters) {
    const auto J = clusters.assignment().size();
    std::vector<double> p0(J);
    switch (spec.kind) {
        case ModelKind::scr:
            std::fill(p0.begin(), p0.end(), state.p0);
            break;
        case ModelKind::re:
        case ModelKind::sare:
            for (std::size_t j = 0; j < J; ++j) {
                p0[j] = inverse_logit(state.mu +
                                      state.w[static_cast<std::size_t>(clusters.cluster_of(static_cast<int>(j)))]);
            }
            break;
        case ModelKind::fe:
            for (std::size_t j = 0; j < J; ++j) p0[j] = inverse_logit(state.mu + spec.covariate[j]);
            break;
        case ModelKind::fm:
            for (std::size_t j = 0; j < J; ++j) {
                const int u = state.u[static_cast<std::size_t>(clusters.cluster_of(static_cast<int>(j)))];
                p0[j] = (1 - u) * state.eta1 + u * state.eta2;
            }
            break;
    }
    return p0;
}

double individual_loglik(std::span<const std::uint8_t> y, Point s, int z,
                         std::span<const double> p0, double sigma, const DetectorGrid& grid,
                         std::optional<double> radius) {
    double ll = 0.0;
    for (int j = 0; j < grid.size(); ++j) {
        const bool hit = y[static_cast<std::size_t>(j)] != 0;
        if (z == 0) {
            if (hit) return kNegInf;
            continue;
        }
        const double d = std::sqrt(squared_distance(s, grid[j]));
        double p = 0.0;
        if (!radius || d <= *radius) p = half_normal_detection(p0[static_cast<std::size_t>(j)], d, sigma);
        ll += hit ? std::log(p) : std::log1p(-p);
    }
    return ll;
}

double log_prior(const ChainState& st, const ModelSpec& spec) {
    const Priors& pr = spec.priors;
    if (!in_unit_interval(st.psi)) return kNegInf;
    if (!(st.sigma > 0.0 && st.sigma < pr.sigma_upper)) return kNegInf;
    double lp = -std::log(pr.sigma_upper);
    switch (spec.kind) {
        case ModelKind::scr:
            if (!in_unit_interval(st.p0)) return kNegInf;
            lp += normal_log_density(logit(st.p0), 0.0, pr.logit_p0_sd);
            break;
        case ModelKind::re:
            if (!(st.sigma_w > 0.0 && st.sigma_w < pr.sigma_w_upper)) return kNegInf;
            lp += normal_log_density(st.mu, 0.0, pr.mu_sd) - std::log(pr.sigma_w_upper);
            break;
        case ModelKind::sare:
            lp += normal_log_density(st.mu, 0.0, pr.mu_sd) +
                  normal_log_density(st.log_phi, 0.0, pr.log_phi_sd);
            break;
        case ModelKind::fe:
            lp += normal_log_density(st.mu, 0.0, pr.mu_sd);
            break;
        case ModelKind::fm:
            if (!in_unit_interval(st.eta1) || !in_unit_interval(st.eta2) || !in_unit_interval(st.pi)) {
                return kNegInf;
            }
            if (st.eta1 > st.eta2) return kNegInf;
            break;
    }
    return lp;
}

double mvn_log_density(std::span<const double> w, const Eigen::MatrixXd& cov) {
    const auto n = static_cast<Eigen::Index>(w.size());
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return kNegInf;
    const Eigen::Map<const Eigen::VectorXd> v(w.data(), n);
    const Eigen::VectorXd a = llt.matrixL().solve(v);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    constexpr double kLog2Pi = 1.83787706640934548356;
    return -0.5 * (static_cast<double>(n) * kLog2Pi + logdet + a.squaredNorm());
}

double latent_effect_log_density(const ChainState& st, const ModelSpec& spec,
                                 const Eigen::MatrixXd& cluster_distances) {
    switch (spec.kind) {
        case ModelKind::re: {
            double lp = 0.0;
            for (double wc : st.w) lp += normal_log_density(wc, 0.0, st.sigma_w);
            return lp;
        }
        case ModelKind::sare:
            return mvn_log_density(st.w, exponential_covariance(cluster_distances, std::exp(st.log_phi)));
        case ModelKind::fm: {
            if (!in_unit_interval(st.pi)) return kNegInf;
            double lp = 0.0;
            for (int uc : st.u) lp += log_bernoulli(uc, st.pi);
            return lp;
        }
        default:
            return 0.0;
    }
}

double full_logposterior(const ChainState& st, const ModelContext& ctx) {
    const Dataset& data = ctx.data();
    const ModelSpec& spec = ctx.spec();
    if (static_cast<int>(st.s.size()) != data.m || static_cast<int>(st.z.size()) != data.m) {
        throw std::invalid_argument("state has the wrong number of individuals");
    }
    const int n_clusters = ctx.clusters().n_clusters();
    if (spec.has_random_effects() && static_cast<int>(st.w.size()) != n_clusters) {
        throw std::invalid_argument("state has the wrong number of random effects");
    }
    if (spec.kind == ModelKind::fm && static_cast<int>(st.u.size()) != n_clusters) {
        throw std::invalid_argument("state has the wrong number of membership indicators");
    }

    double lp = log_prior(st, spec);
    if (lp == kNegInf) return kNegInf;
    lp += latent_effect_log_density(st, spec, ctx.cluster_distances());
    if (lp == kNegInf) return kNegInf;

    const std::vector<double> p0 = resolve_baseline(st, spec, ctx.clusters());
    const double log_area = std::log(ctx.habitat().area());
    for (int i = 0; i < data.m; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (!ctx.habitat().contains(st.s[idx])) return kNegInf;
        lp -= log_area;
        lp += log_bernoulli(st.z[idx], st.psi);
        lp += individual_loglik(data.row(i), st.s[idx], st.z[idx], p0, st.sigma, ctx.grid(),
                                spec.radius);
        if (lp == kNegInf) return kNegInf;
    }
    return lp;
}

double full_logposterior(const ChainState& state, const Dataset& data, const ModelSpec& spec) {
    return full_logposterior(state, ModelContext(data, spec));
}

double marginal_row_loglik(double loglik_if_present, double psi, bool detected) {
    const double present = std::log(psi) + loglik_if_present;
    if (detected) return present;
    const double absent = std::log1p(-psi);
    const double hi = std::max(present, absent);
    return hi + std::log1p(std::exp(std::min(present, absent) - hi));
}

}  // namespace scrhet
