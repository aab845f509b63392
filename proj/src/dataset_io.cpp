#include "scrhet/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace scrhet {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

template <class T>
T parse_number(std::string_view s, int line_no) {
    T value{};
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw FormatError(fmt::format("line {}: cannot parse number '{}'", line_no, s));
    }
    return value;
}

}  // namespace

std::string format_dataset(const Dataset& d, bool include_truth) {
    const Scenario& s = d.scenario;
    const int J = d.n_detectors();
    fmt::memory_buffer out;
    auto it = std::back_inserter(out);
    fmt::format_to(it, "{}\n", kDatasetMagic);
    fmt::format_to(it, "scenario_id {}\neta {}\nphi {}\nkind {}\n", s.id, s.eta, s.phi, to_string(s.kind));
    fmt::format_to(it, "n_true {}\nm {}\nsigma {}\n", s.n_true, s.m, s.sigma);
    fmt::format_to(it, "nx {}\nny {}\nspacing {}\nbuffer {}\n", s.nx, s.ny, s.spacing, s.buffer);
    fmt::format_to(it, "seed {}\nJ {}\nn_detected {}\ndetections {}\n", d.seed, J, d.n_detected,
                   d.total_detections());
    fmt::format_to(it, "[detections]\n");
    for (int i = 0; i < d.m; ++i) {
        const auto r = d.row(i);
        for (int j = 0; j < J; ++j) {
            if (r[static_cast<std::size_t>(j)]) fmt::format_to(it, "{} {}\n", i, j);
        }
    }
    if (include_truth && d.truth) {
        const Truth& t = *d.truth;
        fmt::format_to(it, "[truth]\n");
        for (std::size_t i = 0; i < t.s.size(); ++i) {
            fmt::format_to(it, "ac {} {} {} {}\n", i, t.s[i].x, t.s[i].y, t.z[i]);
        }
        for (std::size_t j = 0; j < t.w.size(); ++j) {
            fmt::format_to(it, "field {} {} {}\n", j, t.w[j], t.p0[j]);
        }
    }
    fmt::format_to(it, "[end]\n");
    return fmt::to_string(out);
}

Dataset parse_dataset(std::string_view text) {
    std::vector<std::string_view> lines;
    for (std::size_t pos = 0; pos <= text.size();) {
        const std::size_t nl = text.find('\n', pos);
        const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
        lines.push_back(text.substr(pos, end - pos));
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (lines.empty() || split_ws(lines[0]) != split_ws(kDatasetMagic)) {
        throw FormatError(fmt::format("not a dataset file: expected first line '{}'", kDatasetMagic));
    }

    std::map<std::string, std::string, std::less<>> header;
    std::size_t k = 1;
    for (; k < lines.size(); ++k) {
        const auto tok = split_ws(lines[k]);
        if (tok.empty()) continue;
        if (tok[0].starts_with('[')) break;
        if (tok.size() != 2) {
            throw FormatError(fmt::format("line {}: expected 'key value'", k + 1));
        }
        header.emplace(std::string(tok[0]), std::string(tok[1]));
    }
    auto get = [&](std::string_view key) -> std::string_view {
        const auto f = header.find(key);
        if (f == header.end()) throw FormatError(fmt::format("dataset header lacks '{}'", key));
        return f->second;
    };

    Dataset d;
    Scenario& s = d.scenario;
    s.id = parse_number<int>(get("scenario_id"), 0);
    s.eta = parse_number<double>(get("eta"), 0);
    s.phi = parse_number<double>(get("phi"), 0);
    s.kind = surface_kind_from_string(get("kind"));
    s.n_true = parse_number<int>(get("n_true"), 0);
    s.m = parse_number<int>(get("m"), 0);
    s.sigma = parse_number<double>(get("sigma"), 0);
    s.nx = parse_number<int>(get("nx"), 0);
    s.ny = parse_number<int>(get("ny"), 0);
    s.spacing = parse_number<double>(get("spacing"), 0);
    s.buffer = parse_number<double>(get("buffer"), 0);
    d.seed = parse_number<std::uint64_t>(get("seed"), 0);
    d.m = s.m;
    const int J = parse_number<int>(get("J"), 0);
    if (J != s.nx * s.ny) throw FormatError("dataset header: J does not equal nx * ny");
    if (d.m < 0 || J < 1) throw FormatError("dataset header: invalid dimensions");
    d.n_detected = parse_number<int>(get("n_detected"), 0);
    const long expected_detections = parse_number<long>(get("detections"), 0);
    d.y.assign(static_cast<std::size_t>(d.m) * static_cast<std::size_t>(J), 0);

    enum class Block { none, detections, truth, end };
    Block block = Block::none;
    Truth t;
    bool have_truth = false;
    for (; k < lines.size(); ++k) {
        const int line_no = static_cast<int>(k) + 1;
        const auto tok = split_ws(lines[k]);
        if (tok.empty()) continue;
        if (tok[0] == "[detections]") {
            block = Block::detections;
            continue;
        }
        if (tok[0] == "[truth]") {
            block = Block::truth;
            have_truth = true;
            continue;
        }
        if (tok[0] == "[end]") {
            block = Block::end;
            break;
        }
        if (block == Block::detections) {
            if (tok.size() != 2) throw FormatError(fmt::format("line {}: expected 'row detector'", line_no));
            const int i = parse_number<int>(tok[0], line_no);
            const int j = parse_number<int>(tok[1], line_no);
            if (i < 0 || i >= d.m || j < 0 || j >= J) {
                throw FormatError(fmt::format("line {}: detection ({}, {}) out of range", line_no, i, j));
            }
            d.y[static_cast<std::size_t>(i) * static_cast<std::size_t>(J) + static_cast<std::size_t>(j)] = 1;
        } else if (block == Block::truth) {
            if (tok[0] == "ac" && tok.size() == 5) {
                t.s.push_back({parse_number<double>(tok[2], line_no), parse_number<double>(tok[3], line_no)});
                t.z.push_back(parse_number<int>(tok[4], line_no));
            } else if (tok[0] == "field" && tok.size() == 4) {
                t.w.push_back(parse_number<double>(tok[2], line_no));
                t.p0.push_back(parse_number<double>(tok[3], line_no));
            } else {
                throw FormatError(fmt::format("line {}: malformed truth record", line_no));
            }
        } else {
            throw FormatError(fmt::format("line {}: unexpected content outside a block", line_no));
        }
    }
    if (block != Block::end) throw FormatError("dataset file is truncated (missing [end])");
    if (d.total_detections() != expected_detections) {
        throw FormatError("dataset header detection count does not match the detection list");
    }
    int detected_rows = 0;
    for (int i = 0; i < d.m; ++i) {
        const auto r = d.row(i);
        const bool any = std::any_of(r.begin(), r.end(), [](std::uint8_t v) { return v != 0; });
        if (any) {
            if (i != detected_rows) throw FormatError("detected rows must precede all-zero rows");
            ++detected_rows;
        }
    }
    if (detected_rows != d.n_detected) {
        throw FormatError("dataset header n_detected does not match the detection list");
    }
    if (have_truth) {
        if (static_cast<int>(t.s.size()) != d.m || static_cast<int>(t.w.size()) != J) {
            throw FormatError("truth block has the wrong number of records");
        }
        t.n_true = s.n_true;
        t.sigma = s.sigma;
        t.eta = s.eta;
        t.phi = s.phi;
        t.kind = s.kind;
        d.truth = std::move(t);
    }
    return d;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error(fmt::format("cannot open '{}' for writing", tmp.string()));
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw std::runtime_error(fmt::format("write to '{}' failed", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_dataset(const std::filesystem::path& path, const Dataset& d, bool include_truth) {
    write_file_atomic(path, format_dataset(d, include_truth));
}

Dataset read_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

}  // namespace scrhet
