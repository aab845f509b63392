#include "scrhet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace scrhet {

double sample_quantile(std::span<const double> samples, double prob) {
    if (samples.empty()) throw std::invalid_argument("quantile of an empty sample");
    std::vector<double> v(samples.begin(), samples.end());
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

PosteriorSummary summarize_samples(std::span<const double> samples) {
    if (samples.empty()) throw std::invalid_argument("cannot summarize an empty sample");
    PosteriorSummary out;
    const double n = static_cast<double>(samples.size());
    out.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : samples) ss += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(ss / n);
    std::vector<double> v(samples.begin(), samples.end());
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
        const double h = (n - 1.0) * p;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    out.q025 = q(0.025);
    out.q50 = q(0.5);
    out.q975 = q(0.975);
    return out;
}

double relative_bias(double posterior_mean, double truth) {
    if (truth == 0.0) throw std::invalid_argument("relative bias is undefined for a zero true value");
    return (posterior_mean - truth) / truth;
}

double coefficient_of_variation(std::span<const double> samples) {
    const PosteriorSummary s = summarize_samples(samples);
    if (s.mean == 0.0) throw std::invalid_argument("coefficient of variation is undefined for zero mean");
    return s.sd / s.mean;
}

bool coverage_indicator(double lo, double hi, double truth) {
    if (lo > hi) throw std::invalid_argument("credible interval bounds are reversed");
    return truth >= lo && truth <= hi;
}

double coverage_rate(std::span<const bool> covered) {
    if (covered.empty()) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(std::count(covered.begin(), covered.end(), true)) /
           static_cast<double>(covered.size());
}

double sse_surface(const Eigen::MatrixXd& p0_samples, std::span<const double> truth) {
    if (p0_samples.cols() != static_cast<Eigen::Index>(truth.size())) {
        throw std::invalid_argument(fmt::format("surface samples have {} columns, truth has {}",
                                                p0_samples.cols(), truth.size()));
    }
    if (p0_samples.rows() == 0) throw std::invalid_argument("no surface samples");
    double total = 0.0;
    for (Eigen::Index j = 0; j < p0_samples.cols(); ++j) {
        const double t = truth[static_cast<std::size_t>(j)];
        total += (p0_samples.col(j).array() - t).square().mean();
    }
    return total;
}

std::size_t best_index(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("no scores to compare");
    return static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
}

std::vector<double> delta_scores(std::span<const double> values) {
    const double best = values[best_index(values)];
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(v - best);
    return out;
}

double log_mean_exp(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("log-mean-exp of an empty sequence");
    const double hi = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(hi)) return hi;
    double s = 0.0;
    for (double v : x) s += std::exp(v - hi);
    return hi + std::log(s / static_cast<double>(x.size()));
}

WaicResult waic(const Eigen::MatrixXd& ll) {
    const Eigen::Index R = ll.rows();
    const Eigen::Index M = ll.cols();
    if (R < 2) throw std::invalid_argument("WAIC needs at least two posterior draws (divisor R - 1)");
    if (!ll.allFinite()) throw std::invalid_argument("WAIC input contains non-finite log-likelihoods");
    WaicResult out;
    out.pointwise_lppd.resize(static_cast<std::size_t>(M));
    out.pointwise_pw.resize(static_cast<std::size_t>(M));
    std::vector<double> col(static_cast<std::size_t>(R));
    for (Eigen::Index i = 0; i < M; ++i) {
        for (Eigen::Index r = 0; r < R; ++r) col[static_cast<std::size_t>(r)] = ll(r, i);
        const double lppd_i = log_mean_exp(col);
        const double mean = ll.col(i).mean();
        const double var = (ll.col(i).array() - mean).square().sum() / static_cast<double>(R - 1);
        out.pointwise_lppd[static_cast<std::size_t>(i)] = lppd_i;
        out.pointwise_pw[static_cast<std::size_t>(i)] = var;
        out.lppd += lppd_i;
        out.p_w += var;
    }
    out.waic = -2.0 * out.lppd + 2.0 * out.p_w;
    return out;
}

PointwiseAccumulator::PointwiseAccumulator(int n_rows)
    : max_(static_cast<std::size_t>(n_rows), -std::numeric_limits<double>::infinity()),
      sumexp_(static_cast<std::size_t>(n_rows), 0.0),
      mean_(static_cast<std::size_t>(n_rows), 0.0),
      m2_(static_cast<std::size_t>(n_rows), 0.0) {}

void PointwiseAccumulator::add(std::span<const double> row) {
    if (row.size() != max_.size()) throw std::invalid_argument("pointwise row has the wrong length");
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < row.size(); ++i) {
        const double x = row[i];
        if (x > max_[i]) {
            sumexp_[i] = sumexp_[i] * std::exp(max_[i] - x) + 1.0;
            max_[i] = x;
        } else {
            sumexp_[i] += std::exp(x - max_[i]);
        }
        const double delta = x - mean_[i];
        mean_[i] += delta / n;
        m2_[i] += delta * (x - mean_[i]);
    }
}

void PointwiseAccumulator::merge(const PointwiseAccumulator& o) {
    if (o.count_ == 0) return;
    if (count_ == 0) {
        *this = o;
        return;
    }
    if (o.max_.size() != max_.size()) throw std::invalid_argument("accumulator size mismatch");
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(o.count_);
    for (std::size_t i = 0; i < max_.size(); ++i) {
        const double hi = std::max(max_[i], o.max_[i]);
        sumexp_[i] = sumexp_[i] * std::exp(max_[i] - hi) + o.sumexp_[i] * std::exp(o.max_[i] - hi);
        max_[i] = hi;
        const double delta = o.mean_[i] - mean_[i];
        mean_[i] += delta * nb / (na + nb);
        m2_[i] += o.m2_[i] + delta * delta * na * nb / (na + nb);
    }
    count_ += o.count_;
}

WaicResult PointwiseAccumulator::result() const {
    if (count_ < 2) throw std::invalid_argument("WAIC needs at least two posterior draws (divisor R - 1)");
    WaicResult out;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < max_.size(); ++i) {
        if (!std::isfinite(max_[i]) || !std::isfinite(m2_[i])) {
            throw std::invalid_argument("WAIC input contains non-finite log-likelihoods");
        }
        const double lppd_i = max_[i] + std::log(sumexp_[i] / n);
        const double var = m2_[i] / (n - 1.0);
        out.pointwise_lppd.push_back(lppd_i);
        out.pointwise_pw.push_back(var);
        out.lppd += lppd_i;
        out.p_w += var;
    }
    out.waic = -2.0 * out.lppd + 2.0 * out.p_w;
    return out;
}

SurfaceMoments::SurfaceMoments(int n_detectors)
    : sum_(static_cast<std::size_t>(n_detectors), 0.0),
      sumsq_(static_cast<std::size_t>(n_detectors), 0.0) {}

void SurfaceMoments::add(std::span<const double> p0) {
    if (p0.size() != sum_.size()) throw std::invalid_argument("surface has the wrong length");
    for (std::size_t j = 0; j < p0.size(); ++j) {
        sum_[j] += p0[j];
        sumsq_[j] += p0[j] * p0[j];
    }
    ++count_;
}

void SurfaceMoments::merge(const SurfaceMoments& o) {
    if (o.count_ == 0) return;
    if (count_ == 0) {
        *this = o;
        return;
    }
    for (std::size_t j = 0; j < sum_.size(); ++j) {
        sum_[j] += o.sum_[j];
        sumsq_[j] += o.sumsq_[j];
    }
    count_ += o.count_;
}

std::vector<double> SurfaceMoments::mean() const {
    std::vector<double> out(sum_.size());
    for (std::size_t j = 0; j < sum_.size(); ++j) out[j] = sum_[j] / static_cast<double>(count_);
    return out;
}

double SurfaceMoments::sse(std::span<const double> truth) const {
    if (truth.size() != sum_.size()) throw std::invalid_argument("truth has the wrong length");
    if (count_ == 0) throw std::invalid_argument("no surface samples");
    const double n = static_cast<double>(count_);
    double total = 0.0;
    for (std::size_t j = 0; j < sum_.size(); ++j) {
        // mean of (p - t)^2 = E[p^2] - 2 t E[p] + t^2
        total += std::max(0.0, sumsq_[j] / n - 2.0 * truth[j] * sum_[j] / n + truth[j] * truth[j]);
    }
    return total;
}

}  // namespace scrhet
