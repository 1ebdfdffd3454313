#include "lrm/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace lrm {

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string json_hash(const json& j) {
  const std::string s = j.dump();
  return hex64(fnv1a64(s.data(), s.size()));
}

json to_json(const Grid& g) {
  json j;
  j["dim"] = g.dim;
  j["origin"] = std::vector<double>(g.origin.begin(), g.origin.begin() + g.dim);
  j["spacing"] = std::vector<double>(g.spacing.begin(), g.spacing.begin() + g.dim);
  j["extent"] = std::vector<int>(g.extent.begin(), g.extent.begin() + g.dim);
  return j;
}

Grid grid_from_json(const json& j) {
  Grid g;
  g.dim = j.at("dim").get<int>();
  for (int a = 0; a < g.dim; ++a) {
    g.origin[a] = j.at("origin").at(a).get<double>();
    g.spacing[a] = j.at("spacing").at(a).get<double>();
    g.extent[a] = j.at("extent").at(a).get<int>();
  }
  validate(g);
  return g;
}

namespace {

std::uint64_t to_le(double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
  return u;
}

double from_le(std::uint64_t u) {
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

std::vector<std::uint64_t> encode(const double* p, std::size_t n) {
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = to_le(p[i]);
  return out;
}

}  // namespace

void write_f64(const std::string& path, const std::vector<double>& data) {
  auto enc = encode(data.data(), data.size());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.write(reinterpret_cast<const char*>(enc.data()), std::streamsize(enc.size() * 8));
}

std::vector<double> read_f64(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("cannot read " + path);
  const auto bytes = std::size_t(is.tellg());
  if (bytes % 8) throw std::runtime_error("truncated float64 payload: " + path);
  is.seekg(0);
  std::vector<std::uint64_t> raw(bytes / 8);
  is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(bytes));
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = from_le(raw[i]);
  return out;
}

void write_field(const std::string& base, const ComplexField& f, const json& extra) {
  const double* p = reinterpret_cast<const double*>(f.values.data());
  const std::size_t n = std::size_t(f.values.size()) * 2;
  auto enc = encode(p, n);
  {
    std::ofstream os(base + ".bin", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + base + ".bin");
    os.write(reinterpret_cast<const char*>(enc.data()), std::streamsize(n * 8));
  }
  json j = extra;
  j["grid"] = to_json(f.grid);
  j["endianness"] = "little";
  j["layout"] = "interleaved re,im float64, row-major";
  j["checksum_fnv1a64"] = hex64(fnv1a64(enc.data(), n * 8));
  write_text(base + ".json", j.dump(2) + "\n");
}

ComplexField read_field(const std::string& base) {
  json j = read_json(base + ".json");
  if (j.value("endianness", "") != "little") throw std::runtime_error("unsupported endianness in " + base);
  Grid g = grid_from_json(j.at("grid"));
  std::ifstream is(base + ".bin", std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("cannot read " + base + ".bin");
  const auto bytes = std::size_t(is.tellg());
  if (bytes != std::size_t(g.size()) * 16) throw std::runtime_error("payload size mismatch in " + base);
  is.seekg(0);
  std::vector<std::uint64_t> raw(bytes / 8);
  is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(bytes));
  if (hex64(fnv1a64(raw.data(), bytes)) != j.at("checksum_fnv1a64").get<std::string>())
    throw std::runtime_error("checksum mismatch in " + base);
  ComplexField f(g);
  double* p = reinterpret_cast<double*>(f.values.data());
  for (std::size_t i = 0; i < raw.size(); ++i) p[i] = from_le(raw[i]);
  return f;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return json::parse(is);
}

}  // namespace lrm
