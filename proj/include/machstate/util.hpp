#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "machstate/core.hpp"

namespace machstate {

/// Parses RFC 3339 (e.g. 2024-03-01T08:00:00Z, 2024-03-01T08:00:00.250+10:00).
Timestamp parse_rfc3339(std::string_view text);
/// Formats as UTC with a Z suffix; milliseconds printed only when non-zero.
std::string format_rfc3339(Timestamp t);

/// Minimal RFC 4180 reader: comma separated, optional double quotes.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_escape(std::string_view field);

/// Shortest round-trip decimal.
std::string format_double(double v);
double parse_double(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

/// Hex SHA-256 of `data`.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view data);

}  // namespace machstate
