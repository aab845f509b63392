#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "scrhet/likelihood.hpp"
#include "scrhet/metrics.hpp"
#include "scrhet/model.hpp"
#include "scrhet/random.hpp"

namespace scrhet {

/// Blocks that can be held fixed at their initial values (toy checks).
struct Freeze {
    bool inclusion = false;         // z and psi
    bool activity_centers = false;  // s
    bool sigma = false;
    bool detection = false;         // p0 / mu / eta1 / eta2
    bool latent = false;            // W, sigma_w, log_phi, u, pi
};

struct ProposalScales {
    double sigma = 0.1;    // log scale
    double p0 = 0.3;       // logit scale
    double mu = 0.2;
    double sigma_w = 0.3;  // log scale
    double log_phi = 0.5;
    double eta = 0.3;      // logit scale
    double w = 0.5;
    double ac = 0.5;       // du, per coordinate
};

struct McmcConfig {
    int n_iterations = 30000;
    int burn_in = 12000;
    int thin = 1;
    int n_chains = 3;
    std::uint64_t seed = 0;
    double target_acceptance = 0.44;
    double adapt_decay = 0.6;
    ProposalScales scales;
    bool keep_pointwise = false;
    bool keep_surface = false;
    bool prior_only = false;
    Freeze freeze;

    int retained() const { return (n_iterations - burn_in) / thin; }
    void validate() const;
};

/// Iteration counts used for full-scale fits of each model kind.
McmcConfig default_mcmc_config(ModelKind kind, int aggregation);

/// Names of the traced scalars, in trace order.
std::vector<std::string> parameter_names(ModelKind kind);

/// Parameters that must pass the convergence gate.
std::vector<std::string> top_level_parameters(ModelKind kind);

struct BlockStats {
    std::string name;
    long proposed = 0;
    long accepted = 0;
    double scale = 0.0;

    double rate() const { return proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0; }
};

/// Retained output of one chain.
struct Chain {
    int chain_id = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> traces;  // traces[k] belongs to names[k]
    SurfaceMoments surface;
    PointwiseAccumulator pointwise;
    Eigen::MatrixXd pointwise_matrix;  // R x M, only with keep_pointwise
    Eigen::MatrixXd surface_trace;     // R x J, only with keep_surface
    std::vector<BlockStats> blocks;    // post-burn-in acceptance
    double burn_in_seconds = 0.0;
    double sampling_seconds = 0.0;

    int retained() const { return traces.empty() ? 0 : static_cast<int>(traces.front().size()); }
    std::span<const double> trace(std::string_view name) const;
};

/// Metropolis-within-Gibbs sampler over one ChainState.
///
/// The sampler keeps, for every individual, the half-normal kernel and the
/// Bernoulli log terms on the detectors inside its local-evaluation box.
/// Rows with z_i = 1 are kept current by every update; rows with z_i = 0
/// are refreshed lazily when their likelihood is needed.
class Sampler {
public:
    Sampler(const ModelContext& ctx, const McmcConfig& cfg, std::uint64_t seed);
    Sampler(const ModelContext& ctx, const McmcConfig& cfg, std::uint64_t seed, ChainState initial);

    void update_inclusion();
    void update_activity_centers();
    void update_scalars();
    void update_random_effects();
    void update_membership();
    void sweep();

    void set_adapting(bool on) { adapting_ = on; }
    void reset_acceptance();

    const ChainState& state() const { return st_; }
    const std::vector<double>& baseline() const { return p0_; }

    /// Sum of cached log-likelihoods over rows with z_i = 1.
    double loglik();
    /// Cached log-likelihood of row i as if z_i = 1.
    double row_loglik(int i);
    /// Full conditional Pr(z_i = 1 | rest) for an undetected row.
    double inclusion_probability(int i);
    /// Full conditional Pr(u_c = 1 | rest), evaluated from scratch.
    double membership_probability(int c) const;
    /// z-marginalized per-row log-likelihoods for the current state.
    std::vector<double> pointwise_loglik();

    std::vector<BlockStats> block_stats() const;

private:
    struct Box {
        int c0 = 0, c1 = -1, r0 = 0, r1 = -1;
    };
    struct Adaptive {
        std::string name;
        double log_scale = 0.0;
        long n = 0;
        long proposed = 0;
        long accepted = 0;
    };

    void initialize(ChainState initial);
    ChainState default_initial_state();
    void check_state() const;
    void refresh_precision();
    Box box_for(Point s) const;
    double compute_row(int i, Point s, double sigma, double* kern, double* term, Box& box) const;
    double row_terms(int i, std::span<const double> p0, const double* kern, double* term) const;
    void refresh_row(int i);
    void mark_absent_rows_stale();
    bool metropolis(double log_ratio);
    void record(Adaptive& a, bool accepted);
    double scale(const Adaptive& a) const { return std::exp(a.log_scale); }

    // Global baseline proposals: fills scratch terms for rows with z = 1.
    double propose_baseline(const std::vector<double>& p0);
    void accept_baseline(std::vector<double> p0);
    // Cluster-restricted terms for rows with z = 1 under baseline `p`.
    double cluster_terms(int c, double p, std::vector<double>& out) const;
    double cluster_current(int c) const;
    void write_cluster(int c, double p, const std::vector<double>& terms);

    void update_sigma();
    // sigma move that rescales detected ACs about their detection centroids
    void update_sigma_scaled();
    void update_detection();
    void update_sigma_w();
    void update_log_phi();
    void shift_intercept();
    void update_latent_scale();

    const ModelContext& ctx_;
    McmcConfig cfg_;
    Rng rng_;
    ChainState st_;
    bool adapting_ = true;

    int m_ = 0;
    int J_ = 0;
    std::vector<double> p0_;
    std::vector<double> kern_, term_;
    std::vector<double> kern_scratch_, term_scratch_;
    std::vector<double> ll_, ll_scratch_;
    std::vector<char> stale_;
    std::vector<Box> box_, box_scratch_;
    std::vector<double> row_kern_, row_term_;
    std::vector<double> cluster_buf_;
    std::vector<int> anchored_;
    std::vector<Point> anchor_;

    // SARE precision of the random effects and its log-determinant.
    Eigen::MatrixXd precision_;
    Eigen::MatrixXd chol_;
    double cov_logdet_ = 0.0;

    Adaptive a_sigma_, a_detect_, a_eta1_, a_eta2_, a_sigma_w_, a_log_phi_, a_ac_, a_shift_, a_joint_, a_sigma_ac_;
    std::vector<Adaptive> a_w_;
};

/// Run one chain: seed derived from (cfg.seed, chain_id); burn-in with
/// adaptation, then thinned retention of traces, surface moments and
/// pointwise log-likelihoods.
Chain run_chain(const ModelContext& ctx, const McmcConfig& cfg, int chain_id);

/// Same, starting from a caller-supplied state.
Chain run_chain(const ModelContext& ctx, const McmcConfig& cfg, int chain_id, ChainState initial);

/// cfg.n_chains chains on up to `workers` threads, returned in chain order.
std::vector<Chain> run_chains(const ModelContext& ctx, const McmcConfig& cfg, int workers = 1);

}  // namespace scrhet
