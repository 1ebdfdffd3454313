#include "config.hpp"

#include <fstream>

namespace lrm::cli {

json default_config() {
  return json::parse(R"({
  "scenario": "desk",
  "scales": {"eta": 0.3141592653589793, "beta": 0.02, "alpha": 0.005},
  "stack": {"n0_sq": 1.0, "n1_sq": 1.3, "kappa1": 0.05, "n2_sq": 3.0, "kappa2": 0.5, "L": 0.2},
  "medium": {"dim": 2, "intensity": 0.5, "r_min": 0.35, "r_max": 0.5,
             "tau_re_min": 0.5, "tau_re_max": 0.8, "tau_im_min": 0.05, "tau_im_max": 0.1,
             "aspect": 1.0, "random_rotation": false},
  "solver": {"points_per_wavelength": 10, "sponge_width": 2.0, "sponge_strength": 3.0,
             "linear_solver": "iterative", "truncation": [-0.5, 0.5, -0.35, 0.3], "h": 0.0,
             "cells_per_beta": 4.0, "gmres_tol": 1e-14, "gmres_restart": 40, "gmres_max_iter": 400},
  "source": {"x": -0.25, "z": 0.15, "width": 0.04},
  "detector": [-0.45, 0.45, 0.05, 0.25],
  "ensemble": {"seed_base": 1000, "count": 300,
               "test_functions": [[-0.25, 0.15, 0.04], [0.0, 0.15, 0.04], [0.25, 0.15, 0.04]]},
  "covariance": {"method": "empirical", "samples": 200, "cells": 64, "seed": 99},
  "scaling": {"betas": [0.04, 0.02, 0.01], "seeds": 100},
  "diagnostics": {"dim": 2, "k_sweep": [20.0, 20.0, 20.0, 20.0], "kappa_sweep": [0.02, 0.05, 0.1, 0.2],
                  "z_nodes": 24, "source_depths": [0.25, 0.5, 0.75], "detector_heights": [0.1, 0.3],
                  "sup_window": 1.0, "sup_points": 9},
  "transport": {"n_theta": 64, "stride": 2, "max_bounces": 200,
                "min_rel_power": 1e-14, "detector_z": 0.3, "lateral": 3.0,
                "window": [-0.5, 0.5, -0.2, 0.3], "window_h": 0.01,
                "detector_range": [-1.0, 1.0], "detector_bins": 20, "chunks": 64},
  "correlation": {"pairs": [[0.0, 0.1, 0.0, 0.1], [0.0, 0.1, 0.01, 0.1], [-0.1, 0.15, 0.1, 0.15]]},
  "output": "runs/desk"
})");
}

namespace {

std::string type_of(const json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

json schema_of(const json& v) {
  json s;
  s["type"] = type_of(v);
  if (v.is_number_integer()) s["type"] = "integer";
  if (v.is_object()) {
    s["additionalProperties"] = false;
    for (auto it = v.begin(); it != v.end(); ++it) s["properties"][it.key()] = schema_of(it.value());
  } else if (v.is_array() && !v.empty()) {
    s["items"] = schema_of(v.front());
  }
  return s;
}

void check_value(const json& u, const json& r, const std::string& where) {
  const std::string tu = type_of(u), tr = type_of(r);
  if (tu != tr) throw ConfigError("config: " + where + " must be " + tr + ", got " + tu);
  if (r.is_number_integer() && !u.is_number_integer())
    throw ConfigError("config: " + where + " must be an integer");
  if (u.is_object()) check_against(u, r, where);
  if (u.is_array() && !r.empty())
    for (std::size_t i = 0; i < u.size(); ++i) check_value(u[i], r.front(), where + "/" + std::to_string(i));
}

}  // namespace

json config_schema() {
  json s = schema_of(default_config());
  s["$schema"] = "http://json-schema.org/draft-07/schema#";
  s["title"] = "lrm run configuration";
  return s;
}

void check_against(const json& user, const json& ref, const std::string& where) {
  if (!user.is_object()) throw ConfigError("config: " + (where.empty() ? "/" : where) + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string p = where + "/" + it.key();
    if (!ref.contains(it.key())) throw ConfigError("config: unknown key " + p);
    check_value(it.value(), ref.at(it.key()), p);
  }
}

void apply_override(json& user, const std::string& a) {
  const auto eq = a.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + a);
  const std::string key = a.substr(0, eq), val = a.substr(eq + 1);
  json v;
  try {
    v = json::parse(val);
  } catch (const json::parse_error&) {
    v = val;
  }
  std::string ptr;
  std::size_t s = 0;
  while (s <= key.size()) {
    const auto d = key.find('.', s);
    ptr += "/" + key.substr(s, d == std::string::npos ? std::string::npos : d - s);
    if (d == std::string::npos) break;
    s = d + 1;
  }
  const json::json_pointer jp(ptr);
  // validate the path against the defaults before writing
  const json ref = default_config();
  if (!ref.contains(jp)) throw ConfigError("config: unknown key " + ptr);
  user[jp] = v;
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json user = json::object();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    try {
      user = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config: parse error in ") + path + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(user, o);
  const json ref = default_config();
  check_against(user, ref);
  json merged = ref;
  merged.merge_patch(user);
  return merged;
}

std::string config_hash(const json& cfg) {
  json c = cfg;
  c.erase("output");
  return json_hash(c);
}

}  // namespace lrm::cli
