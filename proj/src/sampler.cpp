#include "scrhet/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "scrhet/surfaces.hpp"

namespace scrhet {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void McmcConfig::validate() const {
    if (n_iterations < 1) throw std::invalid_argument("n_iterations must be >= 1");
    if (burn_in < 0 || burn_in >= n_iterations) {
        throw std::invalid_argument(fmt::format("burn_in must lie in [0, n_iterations), got {}", burn_in));
    }
    if (thin < 1) throw std::invalid_argument("thin must be >= 1");
    if (n_chains < 1) throw std::invalid_argument("n_chains must be >= 1");
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) {
        throw std::invalid_argument("target_acceptance must lie in (0, 1)");
    }
    if (!(adapt_decay > 0.5 && adapt_decay <= 1.0)) {
        throw std::invalid_argument("adapt_decay must lie in (0.5, 1]");
    }
}

McmcConfig default_mcmc_config(ModelKind kind, int aggregation) {
    McmcConfig cfg;
    switch (kind) {
        case ModelKind::scr:
        case ModelKind::fe:
            cfg.n_iterations = 30000;
            cfg.burn_in = 12000;
            break;
        case ModelKind::re:
        case ModelKind::sare:
            cfg.n_iterations = 100000;
            cfg.burn_in = 20000;
            break;
        case ModelKind::fm:
            cfg.n_iterations = aggregation > 1 ? 20000 : 60000;
            cfg.burn_in = aggregation > 1 ? 4000 : 12000;
            break;
    }
    return cfg;
}

std::vector<std::string> parameter_names(ModelKind kind) {
    std::vector<std::string> out{"N", "psi", "sigma"};
    switch (kind) {
        case ModelKind::scr: out.push_back("p0"); break;
        case ModelKind::re: out.insert(out.end(), {"mu", "sigma_w"}); break;
        case ModelKind::sare: out.insert(out.end(), {"mu", "log_phi"}); break;
        case ModelKind::fm: out.insert(out.end(), {"eta1", "eta2", "pi"}); break;
        case ModelKind::fe: out.push_back("mu"); break;
    }
    return out;
}

std::vector<std::string> top_level_parameters(ModelKind kind) {
    auto out = parameter_names(kind);
    out.erase(std::find(out.begin(), out.end(), "psi"));
    return out;
}

std::span<const double> Chain::trace(std::string_view name) const {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == name) return traces[k];
    }
    throw std::out_of_range(fmt::format("chain has no parameter '{}'", name));
}

// ---------------------------------------------------------------------------

Sampler::Sampler(const ModelContext& ctx, const McmcConfig& cfg, std::uint64_t seed)
    : ctx_(ctx), cfg_(cfg), rng_(seed) {
    initialize(default_initial_state());
}

Sampler::Sampler(const ModelContext& ctx, const McmcConfig& cfg, std::uint64_t seed,
                 ChainState initial)
    : ctx_(ctx), cfg_(cfg), rng_(seed) {
    initialize(std::move(initial));
}

ChainState Sampler::default_initial_state() {
    const Dataset& data = ctx_.data();
    const DetectorGrid& grid = ctx_.grid();
    const Habitat& hab = ctx_.habitat();
    ChainState st;
    st.psi = 0.5;
    st.sigma = std::min(2.0, 0.5 * ctx_.spec().priors.sigma_upper);

    std::uniform_real_distribution<double> ux(hab.xmin, hab.xmax);
    std::uniform_real_distribution<double> uy(hab.ymin, hab.ymax);
    double exposure = 0.0;
    long detections = 0;
    st.s.resize(static_cast<std::size_t>(data.m));
    st.z.resize(static_cast<std::size_t>(data.m));
    for (int i = 0; i < data.m; ++i) {
        const auto& hits = ctx_.row_detections(i);
        const auto idx = static_cast<std::size_t>(i);
        if (!hits.empty()) {
            Point c{};
            for (int j : hits) {
                c.x += grid[j].x;
                c.y += grid[j].y;
            }
            c.x /= static_cast<double>(hits.size());
            c.y /= static_cast<double>(hits.size());
            st.s[idx] = c;
            st.z[idx] = 1;
            detections += static_cast<long>(hits.size());
            for (int j = 0; j < grid.size(); ++j) {
                exposure += half_normal_detection(1.0, std::sqrt(squared_distance(c, grid[j])), st.sigma);
            }
        } else {
            const double x = ux(rng_);
            const double y = uy(rng_);
            st.s[idx] = {x, y};
            st.z[idx] = uniform01(rng_) < st.psi ? 1 : 0;
        }
    }
    // Detection frequency per unit of half-normal exposure at the starting
    // sigma, clamped away from 0 and 1.
    const double freq = std::clamp(exposure > 0.0 ? detections / exposure : 0.0, 0.01, 0.99);
    const int n_clusters = ctx_.clusters().n_clusters();
    switch (ctx_.spec().kind) {
        case ModelKind::scr: st.p0 = freq; break;
        case ModelKind::re:
        case ModelKind::sare:
            st.mu = logit(freq);
            st.w.assign(static_cast<std::size_t>(n_clusters), 0.0);
            st.sigma_w = std::min(1.0, 0.5 * ctx_.spec().priors.sigma_w_upper);
            st.log_phi = 0.0;
            break;
        case ModelKind::fe: st.mu = logit(freq); break;
        case ModelKind::fm:
            st.u.assign(static_cast<std::size_t>(n_clusters), 1);
            st.eta2 = freq;
            st.eta1 = 0.5 * freq;
            st.pi = 0.5;
            break;
    }
    return st;
}

void Sampler::check_state() const {
    const double lp = full_logposterior(st_, ctx_);
    if (std::isfinite(lp)) return;
    std::string dump = fmt::format(
        "non-finite log-posterior at initialization ({}): psi={} sigma={} p0={} mu={} sigma_w={} "
        "log_phi={} eta1={} eta2={} pi={}",
        lp, st_.psi, st_.sigma, st_.p0, st_.mu, st_.sigma_w, st_.log_phi, st_.eta1, st_.eta2, st_.pi);
    const auto p0 = resolve_baseline(st_, ctx_.spec(), ctx_.clusters());
    int shown = 0;
    for (int i = 0; i < ctx_.m() && shown < 5; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const double ll = individual_loglik(ctx_.data().row(i), st_.s[idx], st_.z[idx], p0, st_.sigma,
                                            ctx_.grid(), ctx_.spec().radius);
        if (!std::isfinite(ll) || !ctx_.habitat().contains(st_.s[idx])) {
            dump += fmt::format("; row {}: s=({}, {}) z={} loglik={}", i, st_.s[idx].x, st_.s[idx].y,
                                st_.z[idx], ll);
            ++shown;
        }
    }
    throw std::runtime_error(dump);
}

void Sampler::initialize(ChainState initial) {
    cfg_.validate();
    st_ = std::move(initial);
    m_ = ctx_.m();
    J_ = ctx_.n_detectors();
    check_state();
    for (int i = 0; i < ctx_.n_detected(); ++i) {
        if (st_.z[static_cast<std::size_t>(i)] != 1) throw std::invalid_argument("detected rows need z = 1");
    }

    const auto MJ = static_cast<std::size_t>(m_) * static_cast<std::size_t>(J_);
    p0_ = resolve_baseline(st_, ctx_.spec(), ctx_.clusters());
    kern_.assign(MJ, 0.0);
    term_.assign(MJ, 0.0);
    kern_scratch_.assign(MJ, 0.0);
    term_scratch_.assign(MJ, 0.0);
    ll_.assign(static_cast<std::size_t>(m_), 0.0);
    ll_scratch_.assign(static_cast<std::size_t>(m_), 0.0);
    stale_.assign(static_cast<std::size_t>(m_), 1);
    box_.assign(static_cast<std::size_t>(m_), Box{});
    box_scratch_.assign(static_cast<std::size_t>(m_), Box{});
    row_kern_.assign(static_cast<std::size_t>(J_), 0.0);
    row_term_.assign(static_cast<std::size_t>(J_), 0.0);
    for (int i = 0; i < m_; ++i) refresh_row(i);

    const ProposalScales& sc = cfg_.scales;
    a_sigma_ = {"sigma", std::log(sc.sigma)};
    a_sigma_ac_ = {"sigma_s", std::log(sc.sigma)};
    anchored_.clear();
    anchor_.clear();
    for (int i = 0; i < m_; ++i) {
        Point c{0.0, 0.0};
        int hits = 0;
        for (int j = 0; j < J_; ++j) {
            if (!ctx_.data().detected(i, j)) continue;
            c.x += ctx_.grid()[j].x;
            c.y += ctx_.grid()[j].y;
            ++hits;
        }
        if (hits == 0) continue;
        anchored_.push_back(i);
        anchor_.push_back({c.x / hits, c.y / hits});
    }
    switch (ctx_.spec().kind) {
        case ModelKind::scr: a_detect_ = {"p0", std::log(sc.p0)}; break;
        case ModelKind::fm: a_detect_ = {"eta", std::log(sc.eta)}; break;
        default: a_detect_ = {"mu", std::log(sc.mu)}; break;
    }
    a_eta1_ = {"eta1", std::log(sc.eta)};
    a_eta2_ = {"eta2", std::log(sc.eta)};
    a_sigma_w_ = {"sigma_w", std::log(sc.sigma_w)};
    a_log_phi_ = {"log_phi", std::log(sc.log_phi)};
    a_ac_ = {"s", std::log(sc.ac)};
    a_shift_ = {"shift", std::log(sc.mu)};
    a_joint_ = {ctx_.spec().kind == ModelKind::re ? "sigma_w_nc" : "log_phi_nc", std::log(sc.log_phi)};
    a_w_.clear();
    if (ctx_.spec().has_random_effects()) {
        for (int c = 0; c < ctx_.clusters().n_clusters(); ++c) {
            a_w_.push_back({fmt::format("w[{}]", c), std::log(sc.w)});
        }
    }
    if (ctx_.spec().kind == ModelKind::sare) refresh_precision();
}

void Sampler::refresh_precision() {
    const Eigen::MatrixXd cov = exponential_covariance(ctx_.cluster_distances(), std::exp(st_.log_phi));
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw std::runtime_error("random-effect covariance is not positive definite");
    chol_ = llt.matrixL();
    cov_logdet_ = 2.0 * chol_.diagonal().array().log().sum();
    precision_ = llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
}

Sampler::Box Sampler::box_for(Point s) const {
    const DetectorGrid& g = ctx_.grid();
    if (!ctx_.spec().radius) return {0, g.nx() - 1, 0, g.ny() - 1};
    const double r = *ctx_.spec().radius;
    const double sp = g.spacing();
    Box b;
    b.c0 = std::max(0, static_cast<int>(std::ceil((s.x - r - g.x0()) / sp)));
    b.c1 = std::min(g.nx() - 1, static_cast<int>(std::floor((s.x + r - g.x0()) / sp)));
    b.r0 = std::max(0, static_cast<int>(std::ceil((s.y - r - g.y0()) / sp)));
    b.r1 = std::min(g.ny() - 1, static_cast<int>(std::floor((s.y + r - g.y0()) / sp)));
    return b;
}

double Sampler::compute_row(int i, Point s, double sigma, double* kern, double* term, Box& box) const {
    const DetectorGrid& g = ctx_.grid();
    box = box_for(s);
    const std::uint8_t* y = ctx_.data().row(i).data();
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const double r2 = ctx_.spec().radius ? *ctx_.spec().radius * *ctx_.spec().radius
                                         : std::numeric_limits<double>::infinity();
    const int nx = g.nx();
    double ll = 0.0;
    thread_local std::vector<double> ex, ey, dx2;
    ex.resize(static_cast<std::size_t>(nx));
    dx2.resize(static_cast<std::size_t>(nx));
    ey.resize(static_cast<std::size_t>(g.ny()));
    for (int c = box.c0; c <= box.c1; ++c) {
        const double dx = s.x - g.col_x(c);
        dx2[static_cast<std::size_t>(c)] = dx * dx;
        ex[static_cast<std::size_t>(c)] = std::exp(-dx * dx * inv);
    }
    for (int r = box.r0; r <= box.r1; ++r) {
        const double dy = s.y - g.row_y(r);
        const double dy2 = dy * dy;
        const double eyr = std::exp(-dy2 * inv);
        for (int c = box.c0; c <= box.c1; ++c) {
            const int j = r * nx + c;
            const double k = dx2[static_cast<std::size_t>(c)] + dy2 > r2 ? 0.0 : ex[static_cast<std::size_t>(c)] * eyr;
            const double p = p0_[static_cast<std::size_t>(j)] * k;
            const double t = y[j] ? std::log(p) : std::log1p(-p);
            kern[j] = k;
            term[j] = t;
            ll += t;
        }
    }
    for (int j : ctx_.row_detections(i)) {
        const int c = g.col_of(j);
        const int r = g.row_of(j);
        if (c < box.c0 || c > box.c1 || r < box.r0 || r > box.r1) return kNegInf;
    }
    return ll;
}

double Sampler::row_terms(int i, std::span<const double> p0, const double* kern, double* term) const {
    const Box& b = box_[static_cast<std::size_t>(i)];
    const std::uint8_t* y = ctx_.data().row(i).data();
    const int nx = ctx_.grid().nx();
    double ll = 0.0;
    for (int r = b.r0; r <= b.r1; ++r) {
        for (int j = r * nx + b.c0; j <= r * nx + b.c1; ++j) {
            const double p = p0[static_cast<std::size_t>(j)] * kern[j];
            const double t = y[j] ? std::log(p) : std::log1p(-p);
            term[j] = t;
            ll += t;
        }
    }
    return ll;
}

void Sampler::refresh_row(int i) {
    const auto idx = static_cast<std::size_t>(i);
    const std::size_t off = idx * static_cast<std::size_t>(J_);
    ll_[idx] = compute_row(i, st_.s[idx], st_.sigma, kern_.data() + off, term_.data() + off, box_[idx]);
    stale_[idx] = 0;
}

void Sampler::mark_absent_rows_stale() {
    for (int i = 0; i < m_; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (st_.z[idx] == 0 || cfg_.prior_only) stale_[idx] = 1;
    }
}

bool Sampler::metropolis(double log_ratio) {
    if (std::isnan(log_ratio)) return false;
    if (log_ratio >= 0.0) return true;
    return std::log(uniform01(rng_)) < log_ratio;
}

void Sampler::record(Adaptive& a, bool accepted) {
    ++a.proposed;
    if (accepted) ++a.accepted;
    if (!adapting_) return;
    ++a.n;
    const double gain = std::pow(static_cast<double>(a.n), -cfg_.adapt_decay);
    a.log_scale += gain * ((accepted ? 1.0 : 0.0) - cfg_.target_acceptance);
    a.log_scale = std::clamp(a.log_scale, -12.0, 4.0);
}

void Sampler::reset_acceptance() {
    for (Adaptive* a : {&a_sigma_, &a_detect_, &a_eta1_, &a_eta2_, &a_sigma_w_, &a_log_phi_, &a_ac_, &a_shift_, &a_joint_, &a_sigma_ac_}) {
        a->proposed = 0;
        a->accepted = 0;
    }
    for (auto& a : a_w_) {
        a.proposed = 0;
        a.accepted = 0;
    }
}

std::vector<BlockStats> Sampler::block_stats() const {
    std::vector<BlockStats> out;
    auto push = [&](const Adaptive& a) { out.push_back({a.name, a.proposed, a.accepted, scale(a)}); };
    push(a_ac_);
    push(a_sigma_);
    if (!anchored_.empty()) push(a_sigma_ac_);
    switch (ctx_.spec().kind) {
        case ModelKind::fm:
            push(a_eta1_);
            push(a_eta2_);
            break;
        case ModelKind::re:
            push(a_detect_);
            push(a_sigma_w_);
            push(a_joint_);
            push(a_shift_);
            break;
        case ModelKind::sare:
            push(a_detect_);
            push(a_log_phi_);
            push(a_joint_);
            push(a_shift_);
            break;
        default: push(a_detect_); break;
    }
    if (!a_w_.empty()) {
        BlockStats w{"w", 0, 0, 0.0};
        for (const auto& a : a_w_) {
            w.proposed += a.proposed;
            w.accepted += a.accepted;
            w.scale += scale(a) / static_cast<double>(a_w_.size());
        }
        out.push_back(w);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cached likelihood accessors

double Sampler::loglik() {
    double ll = 0.0;
    for (int i = 0; i < m_; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (st_.z[idx] == 0) continue;
        if (stale_[idx]) refresh_row(i);
        ll += ll_[idx];
    }
    return ll;
}

double Sampler::row_loglik(int i) {
    const auto idx = static_cast<std::size_t>(i);
    if (stale_[idx]) refresh_row(i);
    return ll_[idx];
}

double Sampler::inclusion_probability(int i) {
    const double psi = st_.psi;
    if (cfg_.prior_only) return psi;
    return inverse_logit(std::log(psi) - std::log1p(-psi) + row_loglik(i));
}

std::vector<double> Sampler::pointwise_loglik() {
    std::vector<double> out(static_cast<std::size_t>(m_));
    for (int i = 0; i < m_; ++i) {
        out[static_cast<std::size_t>(i)] = marginal_row_loglik(row_loglik(i), st_.psi, i < ctx_.n_detected());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Inclusion and activity centers

void Sampler::update_inclusion() {
    int n = 0;
    for (int i = 0; i < m_; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (i >= ctx_.n_detected()) {
            const double p = inclusion_probability(i);
            st_.z[idx] = uniform01(rng_) < p ? 1 : 0;
        }
        n += st_.z[idx];
    }
    st_.psi = beta_draw(rng_, 1.0 + n, 1.0 + (m_ - n));
}

void Sampler::update_activity_centers() {
    const Habitat& hab = ctx_.habitat();
    const int nx = ctx_.grid().nx();
    for (int i = 0; i < m_; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const bool present = st_.z[idx] == 1 && !cfg_.prior_only;
        const double sc = scale(a_ac_);
        const double px = st_.s[idx].x + sc * standard_normal(rng_);
        const double py = st_.s[idx].y + sc * standard_normal(rng_);
        const Point prop{px, py};
        if (!hab.contains(prop)) {
            if (present) record(a_ac_, false);
            continue;
        }
        if (!present) {
            // Likelihood of an all-zero row with z = 0 is 1.
            st_.s[idx] = prop;
            stale_[idx] = 1;
            continue;
        }
        Box nb;
        const double ll_new = compute_row(i, prop, st_.sigma, row_kern_.data(), row_term_.data(), nb);
        const bool acc = metropolis(ll_new - ll_[idx]);
        record(a_ac_, acc);
        if (!acc) continue;
        const std::size_t off = idx * static_cast<std::size_t>(J_);
        for (int r = nb.r0; r <= nb.r1; ++r) {
            const int j0 = r * nx + nb.c0;
            const int len = nb.c1 - nb.c0 + 1;
            std::copy_n(row_kern_.begin() + j0, len, kern_.begin() + static_cast<std::ptrdiff_t>(off) + j0);
            std::copy_n(row_term_.begin() + j0, len, term_.begin() + static_cast<std::ptrdiff_t>(off) + j0);
        }
        box_[idx] = nb;
        ll_[idx] = ll_new;
        st_.s[idx] = prop;
    }
}

// ---------------------------------------------------------------------------
// Global baseline and sigma proposals

double Sampler::propose_baseline(const std::vector<double>& p0) {
    if (cfg_.prior_only) return 0.0;
    double delta = 0.0;
    for (int i = 0; i < m_; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (st_.z[idx] == 0) continue;
        const std::size_t off = idx * static_cast<std::size_t>(J_);
        ll_scratch_[idx] = row_terms(i, p0, kern_.data() + off, term_scratch_.data() + off);
        delta += ll_scratch_[idx] - ll_[idx];
    }
    return delta;
}

void Sampler::accept_baseline(std::vector<double> p0) {
    p0_ = std::move(p0);
    if (!cfg_.prior_only) {
        std::swap(term_, term_scratch_);
        for (int i = 0; i < m_; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            if (st_.z[idx] == 1) ll_[idx] = ll_scratch_[idx];
        }
    }
    mark_absent_rows_stale();
}

void Sampler::update_sigma() {
    const double upper = ctx_.spec().priors.sigma_upper;
    const double prop = st_.sigma * std::exp(scale(a_sigma_) * standard_normal(rng_));
    if (!(prop < upper)) {
        record(a_sigma_, false);
        return;
    }
    double log_ratio = std::log(prop) - std::log(st_.sigma);
    if (!cfg_.prior_only) {
        for (int i = 0; i < m_; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            if (st_.z[idx] == 0) continue;
            const std::size_t off = idx * static_cast<std::size_t>(J_);
            ll_scratch_[idx] = compute_row(i, st_.s[idx], prop, kern_scratch_.data() + off,
                                           term_scratch_.data() + off, box_scratch_[idx]);
            log_ratio += ll_scratch_[idx] - ll_[idx];
            if (log_ratio == kNegInf) break;
        }
    }
    const bool acc = metropolis(log_ratio);
    record(a_sigma_, acc);
    if (!acc) return;
    st_.sigma = prop;
    if (!cfg_.prior_only) {
        std::swap(kern_, kern_scratch_);
        std::swap(term_, term_scratch_);
        for (int i = 0; i < m_; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            if (st_.z[idx] == 1) ll_[idx] = ll_scratch_[idx];
        }
    }
    mark_absent_rows_stale();
}

void Sampler::update_sigma_scaled() {
    const double upper = ctx_.spec().priors.sigma_upper;
    const double eps = scale(a_sigma_ac_) * standard_normal(rng_);
    const double r = std::exp(eps);
    const double prop = st_.sigma * r;
    if (!(prop < upper)) {
        record(a_sigma_ac_, false);
        return;
    }
    const Habitat& hab = ctx_.habitat();
    std::vector<Point> moved(anchor_.size());
    for (std::size_t k = 0; k < anchor_.size(); ++k) {
        const Point s = st_.s[static_cast<std::size_t>(anchored_[k])];
        moved[k] = {anchor_[k].x + r * (s.x - anchor_[k].x), anchor_[k].y + r * (s.y - anchor_[k].y)};
        if (!hab.contains(moved[k])) {
            record(a_sigma_ac_, false);
            return;
        }
    }
    // Jacobian of (log sigma, s) -> (log sigma', s'), plus the uniform prior on sigma.
    double log_ratio = eps * (1.0 + 2.0 * static_cast<double>(anchor_.size()));
    std::size_t k = 0;
    for (int i = 0; i < m_; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const bool anchored = k < anchored_.size() && anchored_[k] == i;
        const Point s = anchored ? moved[k] : st_.s[idx];
        if (anchored) ++k;
        if (st_.z[idx] == 0) continue;
        const std::size_t off = idx * static_cast<std::size_t>(J_);
        ll_scratch_[idx] = compute_row(i, s, prop, kern_scratch_.data() + off, term_scratch_.data() + off,
                                       box_scratch_[idx]);
        log_ratio += ll_scratch_[idx] - ll_[idx];
        if (log_ratio == kNegInf) break;
    }
    const bool acc = metropolis(log_ratio);
    record(a_sigma_ac_, acc);
    if (!acc) return;
    st_.sigma = prop;
    for (std::size_t q = 0; q < anchored_.size(); ++q) st_.s[static_cast<std::size_t>(anchored_[q])] = moved[q];
    std::swap(kern_, kern_scratch_);
    std::swap(term_, term_scratch_);
    for (int i = 0; i < m_; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (st_.z[idx] == 1) {
            ll_[idx] = ll_scratch_[idx];
            box_[idx] = box_scratch_[idx];
        }
    }
    mark_absent_rows_stale();
}

void Sampler::update_detection() {
    const ModelSpec& spec = ctx_.spec();
    const ClusterMap& cl = ctx_.clusters();
    std::vector<double> p0(static_cast<std::size_t>(J_));
    switch (spec.kind) {
        case ModelKind::scr: {
            const double x = logit(st_.p0);
            const double xp = x + scale(a_detect_) * standard_normal(rng_);
            const double pp = inverse_logit(xp);
            std::fill(p0.begin(), p0.end(), pp);
            const double lr = normal_log_density(xp, 0.0, spec.priors.logit_p0_sd) -
                              normal_log_density(x, 0.0, spec.priors.logit_p0_sd) + propose_baseline(p0);
            const bool acc = pp > 0.0 && pp < 1.0 && metropolis(lr);
            record(a_detect_, acc);
            if (acc) {
                st_.p0 = pp;
                accept_baseline(std::move(p0));
            }
            return;
        }
        case ModelKind::re:
        case ModelKind::sare:
        case ModelKind::fe: {
            const double mu = st_.mu + scale(a_detect_) * standard_normal(rng_);
            for (int j = 0; j < J_; ++j) {
                const double effect = spec.kind == ModelKind::fe
                                          ? spec.covariate[static_cast<std::size_t>(j)]
                                          : st_.w[static_cast<std::size_t>(cl.cluster_of(j))];
                p0[static_cast<std::size_t>(j)] = inverse_logit(mu + effect);
            }
            const double lr = normal_log_density(mu, 0.0, spec.priors.mu_sd) -
                              normal_log_density(st_.mu, 0.0, spec.priors.mu_sd) + propose_baseline(p0);
            const bool acc = metropolis(lr);
            record(a_detect_, acc);
            if (acc) {
                st_.mu = mu;
                accept_baseline(std::move(p0));
            }
            return;
        }
        case ModelKind::fm: {
            for (int which = 1; which <= 2; ++which) {
                Adaptive& a = which == 1 ? a_eta1_ : a_eta2_;
                const double cur = which == 1 ? st_.eta1 : st_.eta2;
                const double prop = inverse_logit(logit(cur) + scale(a) * standard_normal(rng_));
                const double e1 = which == 1 ? prop : st_.eta1;
                const double e2 = which == 2 ? prop : st_.eta2;
                if (!(prop > 0.0 && prop < 1.0) || e1 > e2) {
                    record(a, false);
                    continue;
                }
                for (int j = 0; j < J_; ++j) {
                    p0[static_cast<std::size_t>(j)] = st_.u[static_cast<std::size_t>(cl.cluster_of(j))] ? e2 : e1;
                }
                // Uniform prior on eta; Jacobian of the logit-scale walk.
                const double lr = std::log(prop) + std::log1p(-prop) - std::log(cur) - std::log1p(-cur) +
                                  propose_baseline(p0);
                const bool acc = metropolis(lr);
                record(a, acc);
                if (acc) {
                    st_.eta1 = e1;
                    st_.eta2 = e2;
                    accept_baseline(p0);
                }
            }
            return;
        }
    }
}

void Sampler::update_sigma_w() {
    const double upper = ctx_.spec().priors.sigma_w_upper;
    const double prop = st_.sigma_w * std::exp(scale(a_sigma_w_) * standard_normal(rng_));
    if (!(prop < upper)) {
        record(a_sigma_w_, false);
        return;
    }
    double lr = std::log(prop) - std::log(st_.sigma_w);
    for (double w : st_.w) lr += normal_log_density(w, 0.0, prop) - normal_log_density(w, 0.0, st_.sigma_w);
    const bool acc = metropolis(lr);
    record(a_sigma_w_, acc);
    if (acc) st_.sigma_w = prop;
}

void Sampler::update_log_phi() {
    const double sd = ctx_.spec().priors.log_phi_sd;
    const double prop = st_.log_phi + scale(a_log_phi_) * standard_normal(rng_);
    const Eigen::MatrixXd cov = exponential_covariance(ctx_.cluster_distances(), std::exp(prop));
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        record(a_log_phi_, false);
        return;
    }
    const Eigen::Map<const Eigen::VectorXd> w(st_.w.data(), static_cast<Eigen::Index>(st_.w.size()));
    const Eigen::MatrixXd L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    const double quad_new = L.triangularView<Eigen::Lower>().solve(w).squaredNorm();
    const double quad_cur = w.dot(precision_ * w);
    const double lr = -0.5 * (logdet - cov_logdet_ + quad_new - quad_cur) +
                      normal_log_density(prop, 0.0, sd) - normal_log_density(st_.log_phi, 0.0, sd);
    const bool acc = metropolis(lr);
    record(a_log_phi_, acc);
    if (!acc) return;
    st_.log_phi = prop;
    cov_logdet_ = logdet;
    chol_ = L;
    precision_ = llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
}

void Sampler::update_latent_scale() {
    // Non-centered move: the whitened effects stay fixed while the scale
    // (RE) or the correlation (SARE) changes. The Jacobian cancels the
    // change in the latent density, leaving the hyperprior and likelihood.
    const ModelSpec& spec = ctx_.spec();
    const ClusterMap& cl = ctx_.clusters();
    const auto C = static_cast<Eigen::Index>(st_.w.size());
    const Eigen::Map<const Eigen::VectorXd> w(st_.w.data(), C);
    const double step = scale(a_joint_) * standard_normal(rng_);
    Eigen::VectorXd w_new;
    double hyper = 0.0;
    double lr = 0.0;
    Eigen::MatrixXd L;
    Eigen::MatrixXd precision;
    double logdet = 0.0;
    if (spec.kind == ModelKind::re) {
        hyper = st_.sigma_w * std::exp(step);
        if (!(hyper < spec.priors.sigma_w_upper)) {
            record(a_joint_, false);
            return;
        }
        w_new = w * (hyper / st_.sigma_w);
        lr = step;
    } else {
        hyper = st_.log_phi + step;
        const Eigen::MatrixXd cov = exponential_covariance(ctx_.cluster_distances(), std::exp(hyper));
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) {
            record(a_joint_, false);
            return;
        }
        L = llt.matrixL();
        logdet = 2.0 * L.diagonal().array().log().sum();
        precision = llt.solve(Eigen::MatrixXd::Identity(C, C));
        w_new = L * chol_.triangularView<Eigen::Lower>().solve(w);
        lr = normal_log_density(hyper, 0.0, spec.priors.log_phi_sd) -
             normal_log_density(st_.log_phi, 0.0, spec.priors.log_phi_sd);
    }
    std::vector<double> p0(static_cast<std::size_t>(J_));
    for (int j = 0; j < J_; ++j) p0[static_cast<std::size_t>(j)] = inverse_logit(st_.mu + w_new(cl.cluster_of(j)));
    lr += propose_baseline(p0);
    const bool acc = metropolis(lr);
    record(a_joint_, acc);
    if (!acc) return;
    st_.w.assign(w_new.data(), w_new.data() + C);
    if (spec.kind == ModelKind::re) {
        st_.sigma_w = hyper;
    } else {
        st_.log_phi = hyper;
        chol_ = std::move(L);
        precision_ = std::move(precision);
        cov_logdet_ = logdet;
    }
    accept_baseline(std::move(p0));
}

void Sampler::update_scalars() {
    const Freeze& f = cfg_.freeze;
    if (!f.sigma) update_sigma();
    if (!f.sigma && !f.activity_centers && !cfg_.prior_only && !anchored_.empty()) update_sigma_scaled();
    if (!f.detection) update_detection();
    if (!f.latent) {
        if (ctx_.spec().kind == ModelKind::re) update_sigma_w();
        if (ctx_.spec().kind == ModelKind::sare) update_log_phi();
        if (ctx_.spec().has_random_effects()) update_latent_scale();
    }
}

// ---------------------------------------------------------------------------
// Cluster-level updates

double Sampler::cluster_terms(int c, double p, std::vector<double>& out) const {
    out.clear();
    const ClusterMap& cl = ctx_.clusters();
    const int f = cl.factor();
    const int cr0 = (c / cl.clusters_x()) * f;
    const int cc0 = (c % cl.clusters_x()) * f;
    const int nx = ctx_.grid().nx();
    const auto& y = ctx_.data().y;
    double total = 0.0;
    for (int i = 0; i < m_; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (st_.z[idx] == 0) continue;
        const Box& b = box_[idx];
        const int r0 = std::max(b.r0, cr0), r1 = std::min(b.r1, cr0 + f - 1);
        const int c0 = std::max(b.c0, cc0), c1 = std::min(b.c1, cc0 + f - 1);
        const std::size_t off = idx * static_cast<std::size_t>(J_);
        for (int r = r0; r <= r1; ++r) {
            for (int cc = c0; cc <= c1; ++cc) {
                const std::size_t j = off + static_cast<std::size_t>(r * nx + cc);
                const double q = p * kern_[j];
                const double t = y[j] ? std::log(q) : std::log1p(-q);
                out.push_back(t);
                total += t;
            }
        }
    }
    return total;
}

double Sampler::cluster_current(int c) const {
    const ClusterMap& cl = ctx_.clusters();
    const int f = cl.factor();
    const int cr0 = (c / cl.clusters_x()) * f;
    const int cc0 = (c % cl.clusters_x()) * f;
    const int nx = ctx_.grid().nx();
    double total = 0.0;
    for (int i = 0; i < m_; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (st_.z[idx] == 0) continue;
        const Box& b = box_[idx];
        const int r0 = std::max(b.r0, cr0), r1 = std::min(b.r1, cr0 + f - 1);
        const int c0 = std::max(b.c0, cc0), c1 = std::min(b.c1, cc0 + f - 1);
        const std::size_t off = idx * static_cast<std::size_t>(J_);
        for (int r = r0; r <= r1; ++r) {
            for (int cc = c0; cc <= c1; ++cc) total += term_[off + static_cast<std::size_t>(r * nx + cc)];
        }
    }
    return total;
}

void Sampler::write_cluster(int c, double p, const std::vector<double>& terms) {
    const ClusterMap& cl = ctx_.clusters();
    for (int j : cl.members(c)) p0_[static_cast<std::size_t>(j)] = p;
    if (!cfg_.prior_only) {
        const int f = cl.factor();
        const int cr0 = (c / cl.clusters_x()) * f;
        const int cc0 = (c % cl.clusters_x()) * f;
        const int nx = ctx_.grid().nx();
        std::size_t k = 0;
        for (int i = 0; i < m_; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            if (st_.z[idx] == 0) continue;
            const Box& b = box_[idx];
            const int r0 = std::max(b.r0, cr0), r1 = std::min(b.r1, cr0 + f - 1);
            const int c0 = std::max(b.c0, cc0), c1 = std::min(b.c1, cc0 + f - 1);
            const std::size_t off = idx * static_cast<std::size_t>(J_);
            double delta = 0.0;
            for (int r = r0; r <= r1; ++r) {
                for (int cc = c0; cc <= c1; ++cc) {
                    double& t = term_[off + static_cast<std::size_t>(r * nx + cc)];
                    delta += terms[k] - t;
                    t = terms[k++];
                }
            }
            ll_[idx] += delta;
        }
    }
    mark_absent_rows_stale();
}

void Sampler::update_random_effects() {
    const ModelSpec& spec = ctx_.spec();
    if (!spec.has_random_effects()) return;
    const int n_clusters = ctx_.clusters().n_clusters();
    const bool sare = spec.kind == ModelKind::sare;
    for (int c = 0; c < n_clusters; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        Adaptive& a = a_w_[ci];
        const double cur = st_.w[ci];
        const double prop = cur + scale(a) * standard_normal(rng_);
        double lr = 0.0;
        if (sare) {
            double cross = 0.0;
            for (int k = 0; k < n_clusters; ++k) {
                if (k != c) cross += precision_(c, k) * st_.w[static_cast<std::size_t>(k)];
            }
            lr = -0.5 * precision_(c, c) * (prop * prop - cur * cur) - (prop - cur) * cross;
        } else {
            lr = normal_log_density(prop, 0.0, st_.sigma_w) - normal_log_density(cur, 0.0, st_.sigma_w);
        }
        const double p = inverse_logit(st_.mu + prop);
        if (!cfg_.prior_only) lr += cluster_terms(c, p, cluster_buf_) - cluster_current(c);
        const bool acc = metropolis(lr);
        record(a, acc);
        if (!acc) continue;
        st_.w[ci] = prop;
        write_cluster(c, p, cluster_buf_);
    }
    if (!cfg_.freeze.detection) shift_intercept();
}

void Sampler::shift_intercept() {
    // mu + d and W - d leave every p0_j unchanged, so only the priors move.
    const ModelSpec& spec = ctx_.spec();
    const double d = scale(a_shift_) * standard_normal(rng_);
    double lr = normal_log_density(st_.mu + d, 0.0, spec.priors.mu_sd) -
                normal_log_density(st_.mu, 0.0, spec.priors.mu_sd);
    if (spec.kind == ModelKind::sare) {
        const Eigen::Map<const Eigen::VectorXd> w(st_.w.data(), static_cast<Eigen::Index>(st_.w.size()));
        const Eigen::VectorXd q1 = precision_.rowwise().sum();
        lr += d * q1.dot(w) - 0.5 * d * d * q1.sum();
    } else {
        for (double w : st_.w) {
            lr += normal_log_density(w - d, 0.0, st_.sigma_w) - normal_log_density(w, 0.0, st_.sigma_w);
        }
    }
    const bool acc = metropolis(lr);
    record(a_shift_, acc);
    if (!acc) return;
    st_.mu += d;
    for (double& w : st_.w) w -= d;
}

double Sampler::membership_probability(int c) const {
    const double l1 = cfg_.prior_only ? 0.0 : [&] {
        std::vector<double> buf;
        return cluster_terms(c, st_.eta1, buf);
    }();
    const double l2 = cfg_.prior_only ? 0.0 : [&] {
        std::vector<double> buf;
        return cluster_terms(c, st_.eta2, buf);
    }();
    return inverse_logit(std::log(st_.pi) - std::log1p(-st_.pi) + l2 - l1);
}

void Sampler::update_membership() {
    if (ctx_.spec().kind != ModelKind::fm) return;
    const int n_clusters = ctx_.clusters().n_clusters();
    const double prior_logodds = std::log(st_.pi) - std::log1p(-st_.pi);
    for (int c = 0; c < n_clusters; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        const int cur = st_.u[ci];
        const double p_alt = cur ? st_.eta1 : st_.eta2;
        double l_cur = 0.0;
        double l_alt = 0.0;
        if (!cfg_.prior_only) {
            l_cur = cluster_current(c);
            l_alt = cluster_terms(c, p_alt, cluster_buf_);
        }
        const double l2 = cur ? l_cur : l_alt;
        const double l1 = cur ? l_alt : l_cur;
        const double pr1 = inverse_logit(prior_logodds + l2 - l1);
        const int next = uniform01(rng_) < pr1 ? 1 : 0;
        if (next == cur) continue;
        st_.u[ci] = next;
        write_cluster(c, p_alt, cluster_buf_);
    }
    int n_high = 0;
    for (int u : st_.u) n_high += u;
    st_.pi = beta_draw(rng_, 1.0 + n_high, 1.0 + (n_clusters - n_high));
}

void Sampler::sweep() {
    // Re-sum cached rows so incremental cluster updates do not drift.
    if (!cfg_.prior_only) {
        const int nx = ctx_.grid().nx();
        for (int i = 0; i < m_; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            if (st_.z[idx] == 0 || stale_[idx] || !std::isfinite(ll_[idx])) continue;
            const Box& b = box_[idx];
            const double* t = term_.data() + idx * static_cast<std::size_t>(J_);
            double s = 0.0;
            for (int r = b.r0; r <= b.r1; ++r) {
                for (int j = r * nx + b.c0; j <= r * nx + b.c1; ++j) s += t[j];
            }
            ll_[idx] = s;
        }
    }
    const Freeze& f = cfg_.freeze;
    if (!f.inclusion) update_inclusion();
    if (!f.activity_centers) update_activity_centers();
    update_scalars();
    if (!f.latent) {
        update_random_effects();
        update_membership();
    }
}

// ---------------------------------------------------------------------------

Chain run_chain(const ModelContext& ctx, const McmcConfig& cfg, int chain_id) {
    // The starting state is drawn from the chain seed; the sweeps use a
    // stream mixed from it.
    const std::uint64_t seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(chain_id)});
    const Sampler init(ctx, cfg, seed);
    return run_chain(ctx, cfg, chain_id, init.state());
}

Chain run_chain(const ModelContext& ctx, const McmcConfig& cfg, int chain_id, ChainState initial) {
    cfg.validate();
    const std::uint64_t seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(chain_id)});
    Sampler smp(ctx, cfg, mix64(seed), std::move(initial));

    Chain ch;
    ch.chain_id = chain_id;
    ch.seed = seed;
    ch.names = parameter_names(ctx.spec().kind);
    const int R = cfg.retained();
    ch.traces.assign(ch.names.size(), {});
    for (auto& t : ch.traces) t.reserve(static_cast<std::size_t>(R));
    ch.surface = SurfaceMoments(ctx.n_detectors());
    ch.pointwise = PointwiseAccumulator(ctx.m());
    if (cfg.keep_pointwise) ch.pointwise_matrix.resize(R, ctx.m());
    if (cfg.keep_surface) ch.surface_trace.resize(R, ctx.n_detectors());

    auto values = [&](const ChainState& st) {
        std::vector<double> v{static_cast<double>(st.population()), st.psi, st.sigma};
        switch (ctx.spec().kind) {
            case ModelKind::scr: v.push_back(st.p0); break;
            case ModelKind::re: v.insert(v.end(), {st.mu, st.sigma_w}); break;
            case ModelKind::sare: v.insert(v.end(), {st.mu, st.log_phi}); break;
            case ModelKind::fm: v.insert(v.end(), {st.eta1, st.eta2, st.pi}); break;
            case ModelKind::fe: v.push_back(st.mu); break;
        }
        return v;
    };

    const auto t0 = std::chrono::steady_clock::now();
    auto t_sampling = t0;
    smp.set_adapting(cfg.burn_in > 0);
    int row = 0;
    for (int it = 0; it < cfg.n_iterations; ++it) {
        if (it == cfg.burn_in) {
            smp.set_adapting(false);
            smp.reset_acceptance();
            ch.burn_in_seconds = seconds_since(t0);
            t_sampling = std::chrono::steady_clock::now();
        }
        smp.sweep();
        if (it < cfg.burn_in || (it - cfg.burn_in + 1) % cfg.thin != 0) continue;
        const auto v = values(smp.state());
        for (std::size_t k = 0; k < v.size(); ++k) ch.traces[k].push_back(v[k]);
        ch.surface.add(smp.baseline());
        if (cfg.keep_surface) {
            for (int j = 0; j < ctx.n_detectors(); ++j) ch.surface_trace(row, j) = smp.baseline()[static_cast<std::size_t>(j)];
        }
        if (!cfg.prior_only) {
            const auto pw = smp.pointwise_loglik();
            ch.pointwise.add(pw);
            if (cfg.keep_pointwise) {
                for (int i = 0; i < ctx.m(); ++i) ch.pointwise_matrix(row, i) = pw[static_cast<std::size_t>(i)];
            }
        }
        ++row;
    }
    ch.sampling_seconds = seconds_since(t_sampling);
    ch.blocks = smp.block_stats();
    return ch;
}

std::vector<Chain> run_chains(const ModelContext& ctx, const McmcConfig& cfg, int workers) {
    cfg.validate();
    std::vector<Chain> out(static_cast<std::size_t>(cfg.n_chains));
    std::vector<std::exception_ptr> errors(out.size());
    std::atomic<int> next{0};
    auto work = [&] {
        for (int c = next++; c < cfg.n_chains; c = next++) {
            try {
                out[static_cast<std::size_t>(c)] = run_chain(ctx, cfg, c);
            } catch (...) {
                errors[static_cast<std::size_t>(c)] = std::current_exception();
            }
        }
    };
    const int width = std::clamp(workers, 1, cfg.n_chains);
    if (width == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < width; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace scrhet
