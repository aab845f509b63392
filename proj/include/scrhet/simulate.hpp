#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "scrhet/geometry.hpp"
#include "scrhet/random.hpp"
#include "scrhet/surfaces.hpp"

namespace scrhet {

/// One row of the simulation catalog plus the survey layout it runs on.
struct Scenario {
    int id = 0;
    double eta = 0.3;
    double phi = 1.0;
    SurfaceKind kind = SurfaceKind::continuous;
    int n_true = 300;
    int m = 500;
    double sigma = 1.5;
    int nx = 32;
    int ny = 32;
    double spacing = 1.0;
    double buffer = 5.0;

    DetectorGrid grid() const;
    Habitat habitat() const;
    /// Home-range overlap index sigma * sqrt(N / habitat area).
    double overlap_index() const;
    void validate() const;
};

bool operator==(const Scenario& a, const Scenario& b);

/// The ten scenarios: 1-6 continuous over eta x phi, 7-10 categorical.
std::vector<Scenario> scenario_catalog();

/// Catalog lookup; throws listing the valid ids when `id` is out of range.
Scenario catalog_scenario(int id);

/// Reduced layout used for desk-scale studies: 16x16 grid, N = 75, M = 150.
Scenario desk_scale(Scenario s);

struct Truth {
    std::vector<Point> s;  // one per row of Y (augmentation rows included)
    std::vector<int> z;    // 1 for the N_true real individuals
    std::vector<double> w;
    std::vector<double> p0;
    int n_true = 0;
    double sigma = 0.0;
    double eta = 0.0;
    double phi = 0.0;
    SurfaceKind kind = SurfaceKind::continuous;
};

/// Zero-augmented binary capture data with optional generating truth.
///
/// Rows are in canonical order: detected individuals first (ordered by
/// their detection pattern), then undetected real individuals, then pure
/// augmentation rows.
struct Dataset {
    Scenario scenario;
    std::uint64_t seed = 0;
    int m = 0;
    int n_detected = 0;
    std::vector<std::uint8_t> y;  // m x J, row-major
    std::optional<Truth> truth;

    DetectorGrid grid() const { return scenario.grid(); }
    Habitat habitat() const { return scenario.habitat(); }
    int n_detectors() const { return scenario.nx * scenario.ny; }
    std::span<const std::uint8_t> row(int i) const {
        const auto J = static_cast<std::size_t>(n_detectors());
        return {y.data() + static_cast<std::size_t>(i) * J, J};
    }
    bool detected(int i, int j) const {
        return y[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_detectors()) +
                 static_cast<std::size_t>(j)] != 0;
    }
    long total_detections() const;
    std::vector<int> detections_per_detector() const;
};

std::vector<Point> simulate_activity_centers(int n, const Habitat& habitat, Rng& rng);

/// Independent Bernoulli(p0_j * exp(-d_ij^2 / (2 sigma^2))) draws; returns
/// an acs.size() x J row-major 0/1 matrix.
std::vector<std::uint8_t> simulate_capture_history(std::span<const Point> acs,
                                                   std::span<const double> p0, double sigma,
                                                   const DetectorGrid& grid, Rng& rng);

/// Full draw for one scenario. `field` may carry a precomputed factor for
/// the scenario's covariance, otherwise it is built here.
Dataset simulate_scenario(const Scenario& s, std::uint64_t seed,
                          const GaussianField* field = nullptr);

/// Seed of replicate `replicate` of scenario `scenario_id` under `base_seed`.
std::uint64_t replicate_seed(std::uint64_t base_seed, int scenario_id, int replicate);

/// Table-1 style statistics for one dataset.
struct DataSummary {
    int n_detected = 0;
    long detections = 0;
    double per_detector = 0.0;
    double per_individual = 0.0;
    double per_detected = 0.0;
};

DataSummary summarize_dataset(const Dataset& d);

}  // namespace scrhet
