#include "scrhet/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace scrhet {

DetectorGrid::DetectorGrid(int nx, int ny, double spacing, Point center)
    : nx_(nx), ny_(ny), spacing_(spacing), center_(center) {
    if (nx < 1 || ny < 1) {
        throw std::invalid_argument(
            fmt::format("detector grid dimensions must be positive, got {}x{}", nx, ny));
    }
    if (!(spacing > 0.0) || !std::isfinite(spacing)) {
        throw std::invalid_argument(
            fmt::format("detector spacing must be positive, got {}", spacing));
    }
    x0_ = center.x - 0.5 * (nx - 1) * spacing;
    y0_ = center.y - 0.5 * (ny - 1) * spacing;
    coords_.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
    for (int r = 0; r < ny; ++r) {
        for (int c = 0; c < nx; ++c) {
            coords_.push_back({col_x(c), row_y(r)});
        }
    }
}

DetectorGrid build_detector_grid(int nx, int ny, double spacing, Point center) {
    return DetectorGrid(nx, ny, spacing, center);
}

Habitat build_habitat(const DetectorGrid& grid, double buffer) {
    if (!(buffer >= 0.0)) {
        throw std::invalid_argument(fmt::format("habitat buffer must be >= 0, got {}", buffer));
    }
    return Habitat{grid.xmin() - buffer, grid.xmax() + buffer, grid.ymin() - buffer,
                   grid.ymax() + buffer, buffer};
}

Eigen::MatrixXd pairwise_distances(std::span<const Point> points) {
    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd d(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        d(a, a) = 0.0;
        for (Eigen::Index b = a + 1; b < n; ++b) {
            const double v = std::sqrt(squared_distance(points[static_cast<std::size_t>(a)],
                                                        points[static_cast<std::size_t>(b)]));
            d(a, b) = v;
            d(b, a) = v;
        }
    }
    return d;
}

Eigen::MatrixXd pairwise_detector_distances(const DetectorGrid& grid) {
    return pairwise_distances(grid.coords());
}

ClusterMap::ClusterMap(const DetectorGrid& grid, int factor) : factor_(factor) {
    if (factor < 1) {
        throw std::invalid_argument(fmt::format("aggregation factor must be >= 1, got {}", factor));
    }
    if (grid.nx() % factor != 0) {
        throw std::invalid_argument(fmt::format(
            "aggregation factor {} does not divide nx = {}", factor, grid.nx()));
    }
    if (grid.ny() % factor != 0) {
        throw std::invalid_argument(fmt::format(
            "aggregation factor {} does not divide ny = {}", factor, grid.ny()));
    }
    clusters_x_ = grid.nx() / factor;
    clusters_y_ = grid.ny() / factor;
    const int n_clusters = clusters_x_ * clusters_y_;
    cluster_of_.resize(static_cast<std::size_t>(grid.size()));
    members_.assign(static_cast<std::size_t>(n_clusters), {});
    for (int j = 0; j < grid.size(); ++j) {
        const int c = (grid.row_of(j) / factor) * clusters_x_ + grid.col_of(j) / factor;
        cluster_of_[static_cast<std::size_t>(j)] = c;
        members_[static_cast<std::size_t>(c)].push_back(j);
    }
    centroids_.reserve(static_cast<std::size_t>(n_clusters));
    for (const auto& m : members_) {
        Point p{};
        for (int j : m) {
            p.x += grid[j].x;
            p.y += grid[j].y;
        }
        p.x /= static_cast<double>(m.size());
        p.y /= static_cast<double>(m.size());
        centroids_.push_back(p);
    }
}

std::vector<double> ClusterMap::expand(std::span<const double> per_cluster) const {
    if (static_cast<int>(per_cluster.size()) != n_clusters()) {
        throw std::invalid_argument(fmt::format("expected {} cluster values, got {}",
                                                n_clusters(), per_cluster.size()));
    }
    std::vector<double> out(cluster_of_.size());
    for (std::size_t j = 0; j < cluster_of_.size(); ++j) {
        out[j] = per_cluster[static_cast<std::size_t>(cluster_of_[j])];
    }
    return out;
}

ClusterMap aggregate_detectors(const DetectorGrid& grid, int factor) {
    return ClusterMap(grid, factor);
}

}  // namespace scrhet
