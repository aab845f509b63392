#include "scrhet/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

namespace scrhet {

namespace {

double mean_of(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x) {
    const double m = mean_of(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

}  // namespace

double gelman_rubin(std::span<const std::vector<double>> chains, bool split) {
    if (chains.size() < 2 && !split) throw std::invalid_argument("Rhat needs at least two chains");
    if (chains.empty()) throw std::invalid_argument("Rhat needs at least one chain");
    const std::size_t n0 = chains.front().size();
    for (const auto& c : chains) {
        if (c.size() != n0) throw std::invalid_argument("Rhat needs chains of equal length");
    }
    if (n0 < 10) throw std::invalid_argument("Rhat needs at least 10 draws per chain");

    std::vector<std::span<const double>> parts;
    for (const auto& c : chains) {
        if (split) {
            const std::size_t h = n0 / 2;
            parts.emplace_back(c.data(), h);
            parts.emplace_back(c.data() + (n0 - h), h);
        } else {
            parts.emplace_back(c);
        }
    }
    const double n = static_cast<double>(parts.front().size());
    const double m = static_cast<double>(parts.size());
    std::vector<double> means;
    double w = 0.0;
    for (auto p : parts) {
        means.push_back(mean_of(p));
        w += variance_of(p);
    }
    w /= m;
    if (!(w > 0.0)) throw std::invalid_argument("Rhat is undefined with zero within-chain variance");
    const double b = n * variance_of(means);
    const double var_plus = (n - 1.0) / n * w + b / n;
    return std::sqrt(var_plus / w);
}

std::vector<double> autocorrelation(std::span<const double> x) {
    const std::size_t n = x.size();
    std::size_t len = 1;
    while (len < 2 * n) len <<= 1;
    const double m = mean_of(x);
    std::vector<double> padded(len, 0.0);
    for (std::size_t t = 0; t < n; ++t) padded[t] = x[t] - m;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> freq;
    fft.fwd(freq, padded);
    for (auto& f : freq) f = std::norm(f);
    std::vector<double> acov;
    fft.inv(acov, freq);
    std::vector<double> out(n);
    const double c0 = acov[0];
    for (std::size_t k = 0; k < n; ++k) out[k] = acov[k] / c0;
    return out;
}

double effective_sample_size(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 100) throw std::invalid_argument("ESS needs at least 100 draws");
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (*lo == *hi) throw std::invalid_argument("ESS is undefined for a constant sequence");
    const std::vector<double> rho = autocorrelation(x);

    double sum = 0.0;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < n; k += 2) {
        double pair = rho[k] + rho[k + 1];
        if (pair <= 0.0) break;
        pair = std::min(pair, prev);
        sum += pair;
        prev = pair;
    }
    const double tau = -1.0 + 2.0 * sum;
    const double nn = static_cast<double>(n);
    if (tau <= 1.0) return nn;
    return nn / tau;
}

const ParameterDiagnostics& ConvergenceReport::get(const std::string& name) const {
    for (const auto& p : parameters) {
        if (p.name == name) return p;
    }
    throw std::out_of_range(fmt::format("no diagnostics for '{}'", name));
}

std::string ConvergenceReport::to_table(bool with_efficiency) const {
    std::string out = with_efficiency ? "parameter\tRhat\tESS\tefficiency\n" : "parameter\tRhat\tESS\n";
    for (const auto& p : parameters) {
        out += fmt::format("{}\t{:.4f}\t{:.1f}", p.name, p.rhat, p.ess);
        if (with_efficiency) out += fmt::format("\t{:.4f}", p.efficiency);
        out += '\n';
    }
    out += fmt::format("converged\t{}\n", converged ? "yes" : "no");
    return out;
}

ConvergenceReport assess(std::span<const NamedTraces> params, double runtime, double threshold,
                         double ess_floor, bool split) {
    ConvergenceReport rep;
    rep.runtime = runtime;
    rep.threshold = threshold;
    rep.ess_floor = ess_floor;
    rep.converged = true;
    for (const auto& p : params) {
        ParameterDiagnostics d;
        d.name = p.name;
        std::vector<double> pooled;
        for (const auto& c : p.chains) pooled.insert(pooled.end(), c.begin(), c.end());
        try {
            d.rhat = gelman_rubin(p.chains, split);
            d.ess = effective_sample_size(pooled);
        } catch (const std::invalid_argument& e) {
            d.rhat = std::numeric_limits<double>::quiet_NaN();
            d.ess = std::numeric_limits<double>::quiet_NaN();
            if (rep.converged) rep.failure = fmt::format("{}: {}", p.name, e.what());
            rep.converged = false;
        }
        d.efficiency = runtime > 0.0 ? d.ess / runtime : std::numeric_limits<double>::quiet_NaN();
        if (rep.converged && !(d.rhat <= threshold)) {
            rep.converged = false;
            rep.failure = fmt::format("{}: Rhat {:.3f} > {}", p.name, d.rhat, threshold);
        }
        if (rep.converged && !(std::isfinite(d.ess) && d.ess >= ess_floor)) {
            rep.converged = false;
            rep.failure = fmt::format("{}: ESS {:.1f} < {}", p.name, d.ess, ess_floor);
        }
        rep.parameters.push_back(std::move(d));
    }
    return rep;
}

ConvergenceReport assess(std::span<const Chain> chains, ModelKind kind, double threshold, double ess_floor,
                         bool split) {
    std::vector<NamedTraces> params;
    for (const auto& name : top_level_parameters(kind)) {
        NamedTraces t{name, {}};
        for (const auto& c : chains) {
            const auto tr = c.trace(name);
            t.chains.emplace_back(tr.begin(), tr.end());
        }
        params.push_back(std::move(t));
    }
    double runtime = 0.0;
    for (const auto& c : chains) runtime += c.sampling_seconds;
    return assess(params, runtime, threshold, ess_floor, split);
}

}  // namespace scrhet
