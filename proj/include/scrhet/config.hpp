#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "scrhet/model.hpp"
#include "scrhet/sampler.hpp"
#include "scrhet/simulate.hpp"

namespace scrhet {

/// Configuration error; the message carries the line/column or the key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Truth used when scoring aggregated surfaces.
enum class SurfaceReference { per_detector, cluster };

/// Layout overrides applied on top of a catalog scenario.
struct ScaleOverrides {
    std::optional<int> nx, ny, n_true, m;
    std::optional<double> sigma, spacing, buffer;
};

struct ModelRun {
    ModelSpec spec;  // FE covariate is filled from each dataset's truth
    McmcConfig mcmc;
    std::vector<int> scenarios;  // empty = every study scenario
};

struct StudyConfig {
    std::string profile = "paper";  // "paper" or "desk"
    std::vector<int> scenarios{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    int replicates = 100;
    int chains = 3;
    int workers = 1;
    double rhat_threshold = 1.1;
    double ess_floor = 400.0;
    bool split_rhat = false;
    SurfaceReference reference = SurfaceReference::per_detector;
    ScaleOverrides scale;
    std::vector<ModelRun> models;

    /// Catalog scenario with the profile and overrides applied.
    Scenario scenario(int id) const;
    bool fits(const ModelRun& run, int scenario_id) const;
    void validate() const;
};

/// The eight fits of the full study: SCR, RE/SARE/FM with and without 4x4
/// aggregation, and FE, each with its full-length iteration counts.
std::vector<ModelRun> default_model_runs();

/// Parses the YAML study configuration. Missing keys take the full-study
/// defaults; unknown keys are rejected.
StudyConfig parse_study_config(std::string_view text);

/// YAML text that parses back to an equal configuration.
std::string emit_study_config(const StudyConfig& cfg);

/// Canonical JSON rendering, used for hashing and provenance.
std::string canonical_config(const StudyConfig& cfg);

std::string_view to_string(SurfaceReference r);

}  // namespace scrhet
