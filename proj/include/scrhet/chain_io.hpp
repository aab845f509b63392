#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scrhet/dataset_io.hpp"
#include "scrhet/diagnostics.hpp"
#include "scrhet/sampler.hpp"

namespace scrhet {

inline constexpr std::string_view kChainMagic = "# scrhet-chain v1";

/// Stable 64-bit fingerprint (FNV-1a) rendered as 16 hex digits.
std::string fingerprint(std::string_view text);
std::string spec_fingerprint(const ModelSpec& spec);

/// Columnar text: magic line, tab-separated header of parameter names, one
/// row per retained iteration.
std::string format_chain(const Chain& chain);
/// Parses names and traces only.
Chain parse_chain(const std::string& text);

void write_chain(const std::filesystem::path& path, const Chain& chain);
Chain read_chain(const std::filesystem::path& path);

/// Seed, spec fingerprint, sampler settings and post-burn-in acceptance.
nlohmann::json chain_metadata(const Chain& chain, const ModelSpec& spec, const McmcConfig& cfg);
/// Wall-clock seconds; kept apart from everything compared byte for byte.
nlohmann::json chain_timing(const Chain& chain);

// Doubles that may be non-finite are stored as strings.
nlohmann::json encode_double(double x);
double decode_double(const nlohmann::json& j);
nlohmann::json encode_vector(const std::vector<double>& v);
std::vector<double> decode_vector(const nlohmann::json& j);

nlohmann::json to_json(const PointwiseAccumulator& acc);
PointwiseAccumulator pointwise_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SurfaceMoments& m);
SurfaceMoments surface_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PosteriorSummary& s);
PosteriorSummary summary_from_json(const nlohmann::json& j);
/// Rhat and ESS per parameter; efficiency and runtime are left out.
nlohmann::json to_json(const ConvergenceReport& r);
ConvergenceReport report_from_json(const nlohmann::json& j);

/// Pretty-printed JSON with a trailing newline.
std::string dump_json(const nlohmann::json& j);

}  // namespace scrhet
