#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scrhet/config.hpp"
#include "scrhet/diagnostics.hpp"
#include "scrhet/metrics.hpp"
#include "scrhet/sampler.hpp"
#include "scrhet/simulate.hpp"

namespace scrhet {

inline constexpr std::string_view kVersion = "1.0.0";

/// Everything derived from the chains of one model fit.
struct FitSummary {
    std::string model;
    ModelKind kind = ModelKind::scr;
    int aggregation = 1;
    ConvergenceReport report;
    std::vector<std::string> names;
    std::vector<PosteriorSummary> posterior;  // one per traced parameter
    WaicResult waic;
    std::vector<double> surface_mean;  // posterior mean p0 per detector
    SurfaceMoments surface;
    double runtime = 0.0;

    const PosteriorSummary& get(const std::string& name) const;
};

/// Pools the chains of one fit (chain order is the merge order).
FitSummary summarize_fit(const ModelSpec& spec, std::span<const Chain> chains, double threshold = 1.1,
                         double ess_floor = 400.0, bool split_rhat = false);

/// Per-detector truth used for SSE: the simulated surface, or its
/// cluster average at the model's aggregation factor.
std::vector<double> reference_surface(const Dataset& data, int aggregation, SurfaceReference ref);

/// One (scenario, replicate, model) triple of a study.
struct FitRecord {
    int scenario = 0;
    int replicate = 0;
    std::string model;
    ModelKind kind = ModelKind::scr;
    int aggregation = 1;
    std::string status = "ok";  // "ok" or "failed"
    std::string error;
    bool converged = false;
    int n_true = 0;
    PosteriorSummary n;
    double rb = 0.0;
    double cv = 0.0;
    bool covered = false;
    double sse = 0.0;
    double waic = 0.0;
    double p_w = 0.0;
    ConvergenceReport report;
    std::vector<double> surface_mean;
    // Runtime-dependent; persisted in a separate sidecar.
    double runtime = 0.0;

    std::string key() const;
};

struct DatasetRecord {
    int scenario = 0;
    int replicate = 0;
    std::uint64_t seed = 0;
    DataSummary summary;
};

struct StudyResult {
    StudyConfig config;
    std::uint64_t seed = 0;
    std::vector<DatasetRecord> datasets;  // ordered by (scenario, replicate)
    std::vector<FitRecord> fits;          // ordered by (scenario, replicate, model order)
};

std::string dataset_key(int scenario, int replicate);

struct StudyOptions {
    bool resume = false;
    int workers = 1;
    std::function<void(const std::string&)> log;  // progress lines, may be empty
};

/// Simulates, fits, gates and persists every triple under `dir`. Completed
/// triples found in the manifest are skipped when resuming; failures are
/// recorded per triple.
StudyResult run_study(const StudyConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir,
                      const StudyOptions& opts = {});

/// Reads a (possibly partial) study back from disk.
StudyResult load_study(const std::filesystem::path& dir);

nlohmann::json to_json(const FitRecord& r);
FitRecord fit_record_from_json(const nlohmann::json& j);

}  // namespace scrhet
