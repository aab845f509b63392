#include "scrhet/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace scrhet {

DetectorGrid Scenario::grid() const {
    const Point center{0.5 * (nx - 1) * spacing + buffer, 0.5 * (ny - 1) * spacing + buffer};
    return DetectorGrid(nx, ny, spacing, center);
}

Habitat Scenario::habitat() const { return build_habitat(grid(), buffer); }

double Scenario::overlap_index() const { return sigma * std::sqrt(n_true / habitat().area()); }

void Scenario::validate() const {
    if (!(eta > 0.0 && eta < 1.0)) {
        throw std::invalid_argument(fmt::format("scenario {}: eta must lie in (0, 1)", id));
    }
    if (!(phi > 0.0)) throw std::invalid_argument(fmt::format("scenario {}: phi must be > 0", id));
    if (!(sigma > 0.0)) throw std::invalid_argument(fmt::format("scenario {}: sigma must be > 0", id));
    if (n_true < 0) throw std::invalid_argument(fmt::format("scenario {}: N must be >= 0", id));
    if (m <= n_true) {
        throw std::invalid_argument(fmt::format("scenario {}: M = {} must exceed N = {}", id, m, n_true));
    }
    if (nx < 1 || ny < 1 || !(spacing > 0.0) || !(buffer >= 0.0)) {
        throw std::invalid_argument(fmt::format("scenario {}: invalid survey layout", id));
    }
}

bool operator==(const Scenario& a, const Scenario& b) {
    return a.id == b.id && a.eta == b.eta && a.phi == b.phi && a.kind == b.kind &&
           a.n_true == b.n_true && a.m == b.m && a.sigma == b.sigma && a.nx == b.nx &&
           a.ny == b.ny && a.spacing == b.spacing && a.buffer == b.buffer;
}

std::vector<Scenario> scenario_catalog() {
    struct Row {
        double eta;
        double phi;
        SurfaceKind kind;
    };
    constexpr auto con = SurfaceKind::continuous;
    constexpr auto cat = SurfaceKind::categorical;
    const Row rows[] = {{0.1, 1.0, con},  {0.1, 0.05, con}, {0.3, 1.0, con}, {0.3, 0.05, con},
                        {0.6, 1.0, con},  {0.6, 0.05, con}, {0.1, 1.0, cat}, {0.1, 0.05, cat},
                        {0.3, 1.0, cat},  {0.3, 0.05, cat}};
    std::vector<Scenario> out;
    int id = 1;
    for (const auto& r : rows) {
        Scenario s;
        s.id = id++;
        s.eta = r.eta;
        s.phi = r.phi;
        s.kind = r.kind;
        out.push_back(s);
    }
    return out;
}

Scenario catalog_scenario(int id) {
    if (id < 1 || id > 10) {
        throw std::invalid_argument(
            fmt::format("unknown scenario {}; valid scenario ids are 1-10", id));
    }
    return scenario_catalog()[static_cast<std::size_t>(id - 1)];
}

Scenario desk_scale(Scenario s) {
    s.nx = 16;
    s.ny = 16;
    s.n_true = 75;
    s.m = 150;
    return s;
}

long Dataset::total_detections() const {
    return std::accumulate(y.begin(), y.end(), 0L);
}

std::vector<int> Dataset::detections_per_detector() const {
    const int J = n_detectors();
    std::vector<int> out(static_cast<std::size_t>(J), 0);
    for (int i = 0; i < m; ++i) {
        const auto r = row(i);
        for (int j = 0; j < J; ++j) out[static_cast<std::size_t>(j)] += r[static_cast<std::size_t>(j)];
    }
    return out;
}

std::vector<Point> simulate_activity_centers(int n, const Habitat& habitat, Rng& rng) {
    if (n < 0) throw std::invalid_argument("number of activity centers must be >= 0");
    std::uniform_real_distribution<double> ux(habitat.xmin, habitat.xmax);
    std::uniform_real_distribution<double> uy(habitat.ymin, habitat.ymax);
    std::vector<Point> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double x = ux(rng);
        const double y = uy(rng);
        out.push_back({x, y});
    }
    return out;
}

std::vector<std::uint8_t> simulate_capture_history(std::span<const Point> acs,
                                                   std::span<const double> p0, double sigma,
                                                   const DetectorGrid& grid, Rng& rng) {
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
    if (static_cast<int>(p0.size()) != grid.size()) {
        throw std::invalid_argument(
            fmt::format("baseline surface has {} entries for {} detectors", p0.size(), grid.size()));
    }
    const int J = grid.size();
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    std::vector<std::uint8_t> y(acs.size() * static_cast<std::size_t>(J), 0);
    std::vector<double> ex(static_cast<std::size_t>(grid.nx()));
    std::vector<double> ey(static_cast<std::size_t>(grid.ny()));
    for (std::size_t i = 0; i < acs.size(); ++i) {
        for (int c = 0; c < grid.nx(); ++c) {
            const double dx = acs[i].x - grid.col_x(c);
            ex[static_cast<std::size_t>(c)] = std::exp(-dx * dx * inv2s2);
        }
        for (int r = 0; r < grid.ny(); ++r) {
            const double dy = acs[i].y - grid.row_y(r);
            ey[static_cast<std::size_t>(r)] = std::exp(-dy * dy * inv2s2);
        }
        std::uint8_t* out = y.data() + i * static_cast<std::size_t>(J);
        for (int j = 0; j < J; ++j) {
            const double p = p0[static_cast<std::size_t>(j)] *
                             ex[static_cast<std::size_t>(grid.col_of(j))] *
                             ey[static_cast<std::size_t>(grid.row_of(j))];
            out[j] = uniform01(rng) < p ? 1 : 0;
        }
    }
    return y;
}

std::uint64_t replicate_seed(std::uint64_t base_seed, int scenario_id, int replicate) {
    return derive_seed(base_seed, {static_cast<std::uint64_t>(scenario_id),
                                   static_cast<std::uint64_t>(replicate)});
}

Dataset simulate_scenario(const Scenario& s, std::uint64_t seed, const GaussianField* field) {
    s.validate();
    const DetectorGrid grid = s.grid();
    const Habitat habitat = s.habitat();
    const int J = grid.size();

    std::optional<GaussianField> own;
    if (field == nullptr) {
        own.emplace(exponential_covariance(pairwise_detector_distances(grid), s.phi));
        field = &*own;
    }
    if (field->size() != J) {
        throw std::invalid_argument("precomputed field does not match the scenario grid");
    }

    Rng rng(seed);
    const std::vector<double> w = field->sample(rng);
    BaselineSurface surface = s.kind == SurfaceKind::continuous ? continuous_surface(w, s.eta)
                                                                : categorical_surface(w, s.eta);
    const std::vector<Point> acs = simulate_activity_centers(s.n_true, habitat, rng);
    const std::vector<std::uint8_t> y = simulate_capture_history(acs, surface.p0, s.sigma, grid, rng);
    const std::vector<Point> extra = simulate_activity_centers(s.m - s.n_true, habitat, rng);

    // Canonical order: detected rows sorted by detection pattern (first
    // detection index first), then undetected real individuals.
    std::vector<int> detected;
    std::vector<int> undetected;
    std::vector<std::vector<int>> hits(static_cast<std::size_t>(s.n_true));
    for (int i = 0; i < s.n_true; ++i) {
        for (int j = 0; j < J; ++j) {
            if (y[static_cast<std::size_t>(i) * static_cast<std::size_t>(J) + static_cast<std::size_t>(j)]) {
                hits[static_cast<std::size_t>(i)].push_back(j);
            }
        }
        (hits[static_cast<std::size_t>(i)].empty() ? undetected : detected).push_back(i);
    }
    std::stable_sort(detected.begin(), detected.end(), [&](int a, int b) {
        return hits[static_cast<std::size_t>(a)] < hits[static_cast<std::size_t>(b)];
    });

    Dataset d;
    d.scenario = s;
    d.seed = seed;
    d.m = s.m;
    d.n_detected = static_cast<int>(detected.size());
    d.y.assign(static_cast<std::size_t>(s.m) * static_cast<std::size_t>(J), 0);
    Truth t;
    t.w = surface.w;
    t.p0 = surface.p0;
    t.n_true = s.n_true;
    t.sigma = s.sigma;
    t.eta = s.eta;
    t.phi = s.phi;
    t.kind = s.kind;

    int row = 0;
    auto place = [&](int src) {
        std::copy_n(y.begin() + static_cast<std::ptrdiff_t>(src) * J, J,
                    d.y.begin() + static_cast<std::ptrdiff_t>(row) * J);
        t.s.push_back(acs[static_cast<std::size_t>(src)]);
        t.z.push_back(1);
        ++row;
    };
    for (int i : detected) place(i);
    for (int i : undetected) place(i);
    for (const Point& p : extra) {
        t.s.push_back(p);
        t.z.push_back(0);
        ++row;
    }
    d.truth = std::move(t);
    return d;
}

DataSummary summarize_dataset(const Dataset& d) {
    DataSummary out;
    out.n_detected = d.n_detected;
    out.detections = d.total_detections();
    const double det = static_cast<double>(out.detections);
    out.per_detector = det / d.n_detectors();
    const int n_true = d.truth ? d.truth->n_true : d.scenario.n_true;
    out.per_individual = n_true > 0 ? det / n_true : 0.0;
    out.per_detected = d.n_detected > 0 ? det / d.n_detected : 0.0;
    return out;
}

}  // namespace scrhet
