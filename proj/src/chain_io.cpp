#include "scrhet/chain_io.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "scrhet/dataset_io.hpp"

namespace scrhet {

using nlohmann::json;

std::string fingerprint(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return fmt::format("{:016x}", h);
}

std::string spec_fingerprint(const ModelSpec& spec) {
    const Priors& p = spec.priors;
    std::string text = fmt::format("{} {} {} {} {} {} {} {}", to_string(spec.kind), spec.aggregation,
                                   p.logit_p0_sd, p.mu_sd, p.sigma_upper, p.sigma_w_upper, p.log_phi_sd,
                                   spec.radius ? fmt::format("{}", *spec.radius) : "none");
    for (double c : spec.covariate) text += fmt::format(" {}", c);
    return fingerprint(text);
}

std::string format_chain(const Chain& chain) {
    std::string out(kChainMagic);
    out += '\n';
    for (std::size_t k = 0; k < chain.names.size(); ++k) {
        if (k) out += '\t';
        out += chain.names[k];
    }
    out += '\n';
    const int R = chain.retained();
    for (int r = 0; r < R; ++r) {
        for (std::size_t k = 0; k < chain.traces.size(); ++k) {
            if (k) out += '\t';
            out += fmt::format("{}", chain.traces[k][static_cast<std::size_t>(r)]);
        }
        out += '\n';
    }
    return out;
}

Chain parse_chain(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kChainMagic) {
        throw FormatError(fmt::format("line 1: expected '{}'", kChainMagic));
    }
    Chain c;
    if (!std::getline(in, line) || line.empty()) throw FormatError("line 2: missing parameter header");
    {
        std::istringstream h(line);
        std::string name;
        while (std::getline(h, name, '\t')) c.names.push_back(name);
    }
    c.traces.assign(c.names.size(), {});
    int lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::size_t k = 0;
        while (std::getline(row, cell, '\t')) {
            if (k >= c.names.size()) throw FormatError(fmt::format("line {}: too many columns", lineno));
            try {
                std::size_t used = 0;
                c.traces[k].push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw FormatError(fmt::format("line {}: column {} is not a number: '{}'", lineno, k + 1, cell));
            }
            ++k;
        }
        if (k != c.names.size()) throw FormatError(fmt::format("line {}: expected {} columns, got {}", lineno, c.names.size(), k));
    }
    return c;
}

void write_chain(const std::filesystem::path& path, const Chain& chain) {
    write_file_atomic(path, format_chain(chain));
}

Chain read_chain(const std::filesystem::path& path) {
    try {
        return parse_chain(read_file(path));
    } catch (const FormatError& e) {
        throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

json chain_metadata(const Chain& chain, const ModelSpec& spec, const McmcConfig& cfg) {
    json blocks = json::array();
    for (const auto& b : chain.blocks) {
        blocks.push_back({{"block", b.name},
                          {"proposed", b.proposed},
                          {"accepted", b.accepted},
                          {"acceptance", b.rate()},
                          {"scale", b.scale}});
    }
    return {{"format", "scrhet-chain-meta v1"},
            {"chain_id", chain.chain_id},
            {"seed", chain.seed},
            {"base_seed", cfg.seed},
            {"model", spec.label()},
            {"spec_hash", spec_fingerprint(spec)},
            {"radius", spec.radius ? json(*spec.radius) : json(nullptr)},
            {"n_iterations", cfg.n_iterations},
            {"burn_in", cfg.burn_in},
            {"thin", cfg.thin},
            {"retained", chain.retained()},
            {"target_acceptance", cfg.target_acceptance},
            {"blocks", blocks}};
}

json chain_timing(const Chain& chain) {
    return {{"chain_id", chain.chain_id},
            {"burn_in_seconds", chain.burn_in_seconds},
            {"sampling_seconds", chain.sampling_seconds}};
}

json encode_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

double decode_double(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    throw FormatError(fmt::format("expected a number, got {}", j.dump()));
}

json encode_vector(const std::vector<double>& v) {
    json out = json::array();
    for (double x : v) out.push_back(encode_double(x));
    return out;
}

std::vector<double> decode_vector(const json& j) {
    std::vector<double> out;
    for (const auto& x : j) out.push_back(decode_double(x));
    return out;
}

json to_json(const PointwiseAccumulator& acc) {
    return {{"count", acc.count_},
            {"max", encode_vector(acc.max_)},
            {"sumexp", encode_vector(acc.sumexp_)},
            {"mean", encode_vector(acc.mean_)},
            {"m2", encode_vector(acc.m2_)}};
}

PointwiseAccumulator pointwise_from_json(const json& j) {
    PointwiseAccumulator acc;
    acc.count_ = j.at("count").get<long>();
    acc.max_ = decode_vector(j.at("max"));
    acc.sumexp_ = decode_vector(j.at("sumexp"));
    acc.mean_ = decode_vector(j.at("mean"));
    acc.m2_ = decode_vector(j.at("m2"));
    return acc;
}

json to_json(const SurfaceMoments& m) {
    return {{"count", m.count_}, {"sum", encode_vector(m.sum_)}, {"sumsq", encode_vector(m.sumsq_)}};
}

SurfaceMoments surface_from_json(const json& j) {
    SurfaceMoments m;
    m.count_ = j.at("count").get<long>();
    m.sum_ = decode_vector(j.at("sum"));
    m.sumsq_ = decode_vector(j.at("sumsq"));
    return m;
}

json to_json(const PosteriorSummary& s) {
    return {{"mean", encode_double(s.mean)},
            {"sd", encode_double(s.sd)},
            {"q025", encode_double(s.q025)},
            {"q50", encode_double(s.q50)},
            {"q975", encode_double(s.q975)}};
}

PosteriorSummary summary_from_json(const json& j) {
    return {decode_double(j.at("mean")), decode_double(j.at("sd")), decode_double(j.at("q025")),
            decode_double(j.at("q50")), decode_double(j.at("q975"))};
}

json to_json(const ConvergenceReport& r) {
    json params = json::array();
    for (const auto& p : r.parameters) {
        params.push_back({{"name", p.name}, {"rhat", encode_double(p.rhat)}, {"ess", encode_double(p.ess)}});
    }
    return {{"threshold", r.threshold},
            {"ess_floor", r.ess_floor},
            {"converged", r.converged},
            {"failure", r.failure},
            {"parameters", params}};
}

ConvergenceReport report_from_json(const json& j) {
    ConvergenceReport r;
    r.threshold = j.at("threshold").get<double>();
    r.ess_floor = j.at("ess_floor").get<double>();
    r.converged = j.at("converged").get<bool>();
    r.failure = j.at("failure").get<std::string>();
    for (const auto& p : j.at("parameters")) {
        ParameterDiagnostics d;
        d.name = p.at("name").get<std::string>();
        d.rhat = decode_double(p.at("rhat"));
        d.ess = decode_double(p.at("ess"));
        d.efficiency = std::numeric_limits<double>::quiet_NaN();
        r.parameters.push_back(d);
    }
    return r;
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

}  // namespace scrhet
