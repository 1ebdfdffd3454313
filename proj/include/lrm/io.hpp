#pragma once

#include "lrm/core.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace lrm {

using json = nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Hash of the canonical (sorted-key, compact) dump of a JSON value.
std::string json_hash(const json& j);

json to_json(const Grid& g);
Grid grid_from_json(const json& j);

// Little-endian float64 payload helpers.
void write_f64(const std::string& path, const std::vector<double>& data);
std::vector<double> read_f64(const std::string& path);

// Field on disk: <base>.bin holds interleaved (re, im) float64 little-endian,
// <base>.json holds the grid, an endianness tag and the payload checksum.
void write_field(const std::string& base, const ComplexField& f, const json& extra = json::object());
ComplexField read_field(const std::string& base);

void write_text(const std::string& path, const std::string& text);
json read_json(const std::string& path);

}  // namespace lrm
