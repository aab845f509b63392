#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "scrhet/geometry.hpp"
#include "scrhet/simulate.hpp"

namespace scrhet {

enum class ModelKind { scr, re, sare, fm, fe };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view s);

/// Prior hyperparameters. Normal priors are parameterized by standard
/// deviation; uniform priors by their upper bound (lower bound 0).
struct Priors {
    double logit_p0_sd = 2.0;   // SCR: logit(p0) ~ N(0, sd^2)
    double mu_sd = 2.0;         // RE/SARE/FE intercept
    double sigma_upper = 50.0;  // sigma ~ U(0, upper)
    double sigma_w_upper = 10.0;
    double log_phi_sd = 5.0;
};

struct ModelSpec {
    ModelKind kind = ModelKind::scr;
    int aggregation = 1;
    Priors priors;
    std::optional<double> radius = 10.0;  // local-evaluation radius, none = exact
    std::vector<double> covariate;        // FE only: known per-detector effect

    /// Display label such as "SCR" or "SARE-4x4".
    std::string label() const;
    bool has_random_effects() const { return kind == ModelKind::re || kind == ModelKind::sare; }
    void validate(const DetectorGrid& grid) const;
};

/// One full MCMC state. Parameters irrelevant to the model kind are ignored.
struct ChainState {
    double psi = 0.5;
    double sigma = 2.0;
    double p0 = 0.1;       // SCR
    double mu = 0.0;       // RE, SARE, FE
    double sigma_w = 1.0;  // RE
    double log_phi = 0.0;  // SARE
    double eta1 = 0.05;    // FM
    double eta2 = 0.1;
    double pi = 0.5;
    std::vector<double> w;  // RE/SARE, one per cluster
    std::vector<int> u;     // FM, one per cluster
    std::vector<Point> s;
    std::vector<int> z;

    int population() const;
};

/// Immutable per-fit data shared by all chains: the dataset, the model
/// specification and everything derived from the survey layout.
class ModelContext {
public:
    ModelContext(Dataset data, ModelSpec spec);

    const Dataset& data() const { return data_; }
    const ModelSpec& spec() const { return spec_; }
    const DetectorGrid& grid() const { return grid_; }
    const Habitat& habitat() const { return habitat_; }
    const ClusterMap& clusters() const { return clusters_; }
    /// Distances between cluster centroids (equals detector distances when
    /// aggregation is 1).
    const Eigen::MatrixXd& cluster_distances() const { return cluster_distances_; }
    const std::vector<int>& row_detections(int i) const {
        return detections_[static_cast<std::size_t>(i)];
    }
    int m() const { return data_.m; }
    int n_detectors() const { return grid_.size(); }
    int n_detected() const { return data_.n_detected; }

private:
    Dataset data_;
    ModelSpec spec_;
    DetectorGrid grid_;
    Habitat habitat_;
    ClusterMap clusters_;
    Eigen::MatrixXd cluster_distances_;
    std::vector<std::vector<int>> detections_;
};

}  // namespace scrhet
