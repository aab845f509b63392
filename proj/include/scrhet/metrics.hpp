#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace scrhet {

struct PosteriorSummary {
    double mean = 0.0;
    double sd = 0.0;  // divisor R
    double q025 = 0.0;
    double q50 = 0.0;
    double q975 = 0.0;
};

/// Type-7 (linear interpolation) sample quantile, prob in [0, 1].
double sample_quantile(std::span<const double> samples, double prob);

PosteriorSummary summarize_samples(std::span<const double> samples);

/// (mean - truth) / truth.
double relative_bias(double posterior_mean, double truth);

/// Posterior SD (divisor R) over posterior mean.
double coefficient_of_variation(std::span<const double> samples);

bool coverage_indicator(double lo, double hi, double truth);

/// Fraction of true entries; NaN for an empty set.
double coverage_rate(std::span<const bool> covered);

/// Sum over detectors of the posterior mean squared error of p0_j;
/// `p0_samples` is R x J.
double sse_surface(const Eigen::MatrixXd& p0_samples, std::span<const double> truth);

/// value - min(values); only the first minimum (in input order) is exactly
/// the reference model.
std::vector<double> delta_scores(std::span<const double> values);

/// Index of the first minimum (the model whose delta is its own reference).
std::size_t best_index(std::span<const double> values);

struct WaicResult {
    double waic = 0.0;
    double p_w = 0.0;
    double lppd = 0.0;
    std::vector<double> pointwise_lppd;
    std::vector<double> pointwise_pw;
};

/// WAIC from an R x M matrix of per-draw, per-individual log-likelihoods.
/// The penalty is the per-individual sample variance (divisor R - 1).
WaicResult waic(const Eigen::MatrixXd& pointwise_loglik);

/// log(mean(exp(x))) without overflow.
double log_mean_exp(std::span<const double> x);

/// Streaming per-individual accumulator equivalent to `waic` on the full
/// matrix: running log-sum-exp plus Welford moments.
class PointwiseAccumulator {
public:
    PointwiseAccumulator() = default;
    explicit PointwiseAccumulator(int n_rows);

    void add(std::span<const double> row);
    void merge(const PointwiseAccumulator& other);
    long count() const { return count_; }
    int n_rows() const { return static_cast<int>(max_.size()); }
    WaicResult result() const;

    // Raw state, for persistence.
    std::vector<double> max_, sumexp_, mean_, m2_;
    long count_ = 0;
};

/// Streaming first and second moments of a per-detector surface; enough to
/// evaluate the posterior SSE against any truth.
class SurfaceMoments {
public:
    SurfaceMoments() = default;
    explicit SurfaceMoments(int n_detectors);

    void add(std::span<const double> p0);
    void merge(const SurfaceMoments& other);
    long count() const { return count_; }
    std::vector<double> mean() const;
    double sse(std::span<const double> truth) const;

    std::vector<double> sum_, sumsq_;
    long count_ = 0;
};

}  // namespace scrhet
