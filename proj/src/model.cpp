#include "scrhet/model.hpp"

#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace scrhet {

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::scr: return "SCR";
        case ModelKind::re: return "RE";
        case ModelKind::sare: return "SARE";
        case ModelKind::fm: return "FM";
        case ModelKind::fe: return "FE";
    }
    return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
    for (auto k : {ModelKind::scr, ModelKind::re, ModelKind::sare, ModelKind::fm, ModelKind::fe}) {
        if (s == to_string(k)) return k;
    }
    throw std::invalid_argument(
        fmt::format("unknown model '{}'; expected one of SCR, RE, SARE, FM, FE", s));
}

std::string ModelSpec::label() const {
    std::string out(to_string(kind));
    if (kind == ModelKind::re || kind == ModelKind::sare || kind == ModelKind::fm) {
        out += fmt::format("-{}x{}", aggregation, aggregation);
    }
    return out;
}

void ModelSpec::validate(const DetectorGrid& grid) const {
    if (aggregation < 1) throw std::invalid_argument("aggregation factor must be >= 1");
    if (grid.nx() % aggregation != 0 || grid.ny() % aggregation != 0) {
        throw std::invalid_argument(fmt::format(
            "aggregation factor {} does not divide the {}x{} detector grid", aggregation,
            grid.nx(), grid.ny()));
    }
    if ((kind == ModelKind::scr || kind == ModelKind::fe) && aggregation != 1) {
        throw std::invalid_argument(fmt::format("{} is fitted without aggregation", to_string(kind)));
    }
    if (kind == ModelKind::fe && static_cast<int>(covariate.size()) != grid.size()) {
        throw std::invalid_argument("FE requires covariate of length J (the known per-detector effect)");
    }
    if (radius && !(*radius > 0.0)) throw std::invalid_argument("local-evaluation radius must be > 0");
    if (!(priors.logit_p0_sd > 0.0 && priors.mu_sd > 0.0 && priors.sigma_upper > 0.0 &&
          priors.sigma_w_upper > 0.0 && priors.log_phi_sd > 0.0)) {
        throw std::invalid_argument("prior scales must be positive");
    }
}

int ChainState::population() const { return std::accumulate(z.begin(), z.end(), 0); }

ModelContext::ModelContext(Dataset data, ModelSpec spec)
    : data_(std::move(data)), spec_(std::move(spec)) {
    grid_ = data_.grid();
    habitat_ = data_.habitat();
    spec_.validate(grid_);
    clusters_ = aggregate_detectors(grid_, spec_.aggregation);
    cluster_distances_ = pairwise_distances(clusters_.centroids());
    detections_.resize(static_cast<std::size_t>(data_.m));
    for (int i = 0; i < data_.m; ++i) {
        const auto r = data_.row(i);
        for (int j = 0; j < grid_.size(); ++j) {
            if (r[static_cast<std::size_t>(j)]) detections_[static_cast<std::size_t>(i)].push_back(j);
        }
    }
}

}  // namespace scrhet
