#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace squeal {

using json = nlohmann::json;

/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline. Object keys are kept sorted, so
/// equal values always serialise to equal bytes.
void write_json(const std::filesystem::path& path, const json& value);

/// Shortest round-trippable formatting used for every CSV number.
std::string fmt_num(double v);

/// splitmix64 finaliser; combines seeds into statistically independent streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_string(std::string_view s);

}  // namespace squeal
