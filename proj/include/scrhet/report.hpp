#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scrhet/study.hpp"

namespace scrhet {

/// Models that enter the per-replicate SSE/WAIC comparison: converged fits
/// other than FE, which uses the true surface as a covariate.
bool in_comparison(const FitRecord& r);

/// Per (scenario, replicate): deltas against the best comparable model.
struct DeltaRow {
    int scenario = 0;
    int replicate = 0;
    std::string model;
    double sse = 0.0;
    double delta_sse = 0.0;
    double waic = 0.0;
    double delta_waic = 0.0;
};
std::vector<DeltaRow> compute_deltas(const StudyResult& r);

struct WinCount {
    int scenario = 0;
    std::string model;
    int compared = 0;
    int sse_wins = 0;
    int waic_wins = 0;
};
std::vector<WinCount> compute_win_counts(const StudyResult& r);

std::string provenance_line(const StudyResult& r);

std::string table1_csv(const StudyResult& r);
std::string convergence_csv(const StudyResult& r);
std::string efficiency_csv(const StudyResult& r);
std::string metrics_csv(const StudyResult& r);
std::string metric_summary_csv(const StudyResult& r);
std::string diagnostics_csv(const StudyResult& r);
std::string deltas_csv(const StudyResult& r);
std::string win_counts_csv(const StudyResult& r);
/// Per-detector truth and predicted surfaces for the first replicate of
/// every scenario; reads the datasets under `study_dir`.
std::string surfaces_csv(const StudyResult& r, const std::filesystem::path& study_dir);

/// Writes every table into `out_dir`; returns the file names written.
/// `efficiency.csv` is the only file that depends on wall-clock time.
std::vector<std::string> write_report(const StudyResult& r, const std::filesystem::path& study_dir,
                                      const std::filesystem::path& out_dir);

}  // namespace scrhet
