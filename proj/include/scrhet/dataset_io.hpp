#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "scrhet/simulate.hpp"

namespace scrhet {

/// Raised for malformed or unreadable files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kDatasetMagic = "# scrhet-dataset v1";

/// Text dataset format: magic line, `key value` header, a `[detections]`
/// block of `row detector` pairs, an optional `[truth]` block and `[end]`.
std::string format_dataset(const Dataset& d, bool include_truth = true);
Dataset parse_dataset(std::string_view text);

void write_dataset(const std::filesystem::path& path, const Dataset& d, bool include_truth = true);
Dataset read_dataset(const std::filesystem::path& path);

/// Write to a sibling temporary file and rename over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace scrhet
