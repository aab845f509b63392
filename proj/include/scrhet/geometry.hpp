#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace scrhet {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double squared_distance(Point a, Point b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
}

/// Regular rectangular detector lattice.
///
/// Detectors are indexed row-major starting at the south-west corner:
/// index = row * nx + col, with col increasing eastward (x) and row
/// increasing northward (y).
class DetectorGrid {
public:
    DetectorGrid() = default;
    DetectorGrid(int nx, int ny, double spacing, Point center);

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double spacing() const { return spacing_; }
    Point center() const { return center_; }
    int size() const { return nx_ * ny_; }

    const std::vector<Point>& coords() const { return coords_; }
    Point operator[](int j) const { return coords_[static_cast<std::size_t>(j)]; }

    int row_of(int j) const { return j / nx_; }
    int col_of(int j) const { return j % nx_; }
    int index(int row, int col) const { return row * nx_ + col; }

    // Coordinates of the south-west detector.
    double x0() const { return x0_; }
    double y0() const { return y0_; }
    double col_x(int col) const { return x0_ + col * spacing_; }
    double row_y(int row) const { return y0_ + row * spacing_; }

    double xmin() const { return x0_; }
    double xmax() const { return x0_ + (nx_ - 1) * spacing_; }
    double ymin() const { return y0_; }
    double ymax() const { return y0_ + (ny_ - 1) * spacing_; }

private:
    int nx_ = 0;
    int ny_ = 0;
    double spacing_ = 1.0;
    Point center_{};
    double x0_ = 0.0;
    double y0_ = 0.0;
    std::vector<Point> coords_;
};

struct Habitat {
    double xmin = 0.0;
    double xmax = 0.0;
    double ymin = 0.0;
    double ymax = 0.0;
    double buffer = 0.0;

    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    double area() const { return width() * height(); }
    bool contains(Point p) const {
        return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
    }
};

/// Assignment of detectors to contiguous factor x factor lattice blocks.
/// Cluster indices are row-major over the block lattice, like detectors.
class ClusterMap {
public:
    ClusterMap() = default;
    ClusterMap(const DetectorGrid& grid, int factor);

    int factor() const { return factor_; }
    int n_clusters() const { return static_cast<int>(members_.size()); }
    int clusters_x() const { return clusters_x_; }
    int clusters_y() const { return clusters_y_; }
    int cluster_of(int j) const { return cluster_of_[static_cast<std::size_t>(j)]; }
    const std::vector<int>& assignment() const { return cluster_of_; }
    const std::vector<int>& members(int c) const { return members_[static_cast<std::size_t>(c)]; }
    const std::vector<Point>& centroids() const { return centroids_; }

    /// Expand one value per cluster to one value per detector.
    std::vector<double> expand(std::span<const double> per_cluster) const;

private:
    int factor_ = 1;
    int clusters_x_ = 0;
    int clusters_y_ = 0;
    std::vector<int> cluster_of_;
    std::vector<std::vector<int>> members_;
    std::vector<Point> centroids_;
};

DetectorGrid build_detector_grid(int nx, int ny, double spacing, Point center = {});

/// Grid bounding box expanded by `buffer` on every side.
Habitat build_habitat(const DetectorGrid& grid, double buffer);

Eigen::MatrixXd pairwise_distances(std::span<const Point> points);
Eigen::MatrixXd pairwise_detector_distances(const DetectorGrid& grid);

ClusterMap aggregate_detectors(const DetectorGrid& grid, int factor);

}  // namespace scrhet
