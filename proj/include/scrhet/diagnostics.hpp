#pragma once

#include <span>
#include <string>
#include <vector>

#include "scrhet/sampler.hpp"

namespace scrhet {

/// Potential scale reduction factor from between- and within-chain
/// variances. With `split`, each chain is halved first (odd middle draw
/// dropped).
double gelman_rubin(std::span<const std::vector<double>> chains, bool split = false);

/// Effective sample size by Geyer's initial monotone positive sequence.
/// Capped at the sequence length (strongly antithetic chains would
/// otherwise report more draws than exist).
double effective_sample_size(std::span<const double> samples);

/// Normalized autocorrelation at lags 0..n-1 (FFT based, divisor n).
std::vector<double> autocorrelation(std::span<const double> samples);

struct ParameterDiagnostics {
    std::string name;
    double rhat = 0.0;
    double ess = 0.0;         // pooled post-burn-in draws
    double efficiency = 0.0;  // ESS per second of sampling
};

struct ConvergenceReport {
    std::vector<ParameterDiagnostics> parameters;
    double runtime = 0.0;  // seconds of sampling, summed over chains
    double threshold = 1.1;
    double ess_floor = 400.0;
    bool converged = false;
    std::string failure;  // first failing check, empty when converged

    const ParameterDiagnostics& get(const std::string& name) const;
    /// parameter, Rhat, ESS, efficiency; `with_efficiency` off drops the
    /// runtime-dependent column.
    std::string to_table(bool with_efficiency = true) const;
};

struct NamedTraces {
    std::string name;
    std::vector<std::vector<double>> chains;
};

ConvergenceReport assess(std::span<const NamedTraces> params, double runtime, double threshold = 1.1,
                         double ess_floor = 400.0, bool split = false);

/// Gate over the model's top-level parameters.
ConvergenceReport assess(std::span<const Chain> chains, ModelKind kind, double threshold = 1.1,
                         double ess_floor = 400.0, bool split = false);

}  // namespace scrhet
