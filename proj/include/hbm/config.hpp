#pragma once

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hbm/errors.hpp"

namespace hbm {

inline constexpr const char* kVersion = "0.1.0";

enum class ValueKind { kReal, kInt, kU64, kBool, kString, kRealList };

struct SchemaEntry {
  const char* section;
  const char* key;
  const char* default_value;
  ValueKind kind;
  const char* doc;
};

/// Every key the run-config file may contain, in canonical order.
inline const std::vector<SchemaEntry>& config_schema() {
  using K = ValueKind;
  static const std::vector<SchemaEntry> schema = {
      {"run", "seed", "20240601", K::kU64, "base seed of all random streams"},
      {"run", "workers", "1", K::kInt, "worker threads"},
      {"run", "format", "csv", K::kString, "csv or json"},

      {"kernel", "rel_tol", "1e-8", K::kReal, "relative accuracy of kernel integrals"},
      {"kernel", "b_max_factor", "8", K::kReal, "truncation multiplier"},
      {"kernel", "t_min", "0.1", K::kReal, "smallest time for the oscillatory formula"},
      {"kernel", "max_subdivisions", "200", K::kInt, "adaptive panel budget"},

      {"drift", "kind", "linear_y", K::kString, "zero, linear_y, sine_x, tanh_x or table"},
      {"drift", "c", "0.5", K::kReal, "coefficient of the builtin kinds"},
      {"drift", "k0", "1", K::kReal, "growth constant, |mu| <= k0 y"},
      {"drift", "table", "", K::kString, "CSV file (x,y,mu) for kind = table"},

      {"kernels", "n", "2,4", K::kRealList, "dimensions"},
      {"kernels", "t", "0.25,1,4", K::kRealList, "times"},
      {"kernels", "r", "0,0.1,0.5,1,2,5", K::kRealList, "radii"},
      {"kernels", "tol_p2", "1e-6", K::kReal, "allowed relative gap, n = 2"},
      {"kernels", "tol_p4", "1e-4", K::kReal, "allowed relative gap, n = 4"},

      {"validate_drift", "x_lo", "-5", K::kReal, "probe box"},
      {"validate_drift", "x_hi", "5", K::kReal, "probe box"},
      {"validate_drift", "y_lo", "0.1", K::kReal, "probe box"},
      {"validate_drift", "y_hi", "5", K::kReal, "probe box"},
      {"validate_drift", "samples", "100000", K::kInt, "quasi-random probes"},

      {"estimate", "t", "0.5", K::kReal, "horizon"},
      {"estimate", "x0", "0", K::kReal, "start point"},
      {"estimate", "y0", "1", K::kReal, "start point"},
      {"estimate", "n_paths", "100000", K::kU64, "paths"},
      {"estimate", "rate", "1", K::kReal, "Poisson clock rate"},
      {"estimate", "payoffs", "x|cos_exp|box:-0.5,0.5,0.5,1.5|one", K::kString,
       "'|'-separated payoff list"},
      {"estimate", "placement", "trailing", K::kString, "trailing or leading"},
      {"estimate", "substeps", "512", K::kInt, "substeps per unit time"},
      {"estimate", "f_cap", "1e6", K::kReal, "|f| above this is flagged"},

      {"compare", "t", "0.25,0.5", K::kRealList, "horizons"},
      {"compare", "x0", "0", K::kReal, "start point"},
      {"compare", "y0", "1", K::kReal, "start point"},
      {"compare", "drifts", "zero:0:1|linear_y:0.5:1|sine_x:1:1", K::kString,
       "'|'-separated kind:c:k0 list"},
      {"compare", "payoffs", "x|cos_exp|box:-0.5,0.5,0.5,1.5|one", K::kString,
       "'|'-separated payoff list"},
      {"compare", "n_paths", "100000", K::kU64, "estimator paths"},
      {"compare", "rate", "1", K::kReal, "Poisson clock rate"},
      {"compare", "euler_steps", "1024", K::kInt, "Euler steps"},
      {"compare", "euler_paths", "100000", K::kU64, "Euler paths"},
      {"compare", "z_max", "3", K::kReal, "pass threshold on |z|"},
      {"compare", "negative_control", "false", K::kBool,
       "flip the oracle drift and require a detected mismatch"},

      {"density", "t", "0.5", K::kReal, "horizon"},
      {"density", "x0", "0", K::kReal, "start point"},
      {"density", "y0", "1", K::kReal, "start point"},
      {"density", "n_terms", "2", K::kInt, "series terms, 0..3"},
      {"density", "x_lo", "-1.25", K::kReal, "grid"},
      {"density", "x_hi", "1.75", K::kReal, "grid"},
      {"density", "y_lo", "0.45", K::kReal, "grid"},
      {"density", "y_hi", "1.85", K::kReal, "grid"},
      {"density", "nx", "8", K::kInt, "grid cells in x"},
      {"density", "ny", "8", K::kInt, "grid cells in y"},
      {"density", "gauss_points", "3", K::kInt, "cell-average nodes per axis"},
      {"density", "n_paths", "1000000", K::kU64, "paths for the histogram"},
      {"density", "rate", "1", K::kReal, "Poisson clock rate"},
      {"density", "quadrature", "default", K::kString, "default or coarse"},
      {"density", "z_max", "3", K::kReal, "pass threshold on interior |z|"},

      {"selftest", "n_paths", "20000", K::kU64, "paths per statistical check"},
      {"selftest", "clocks", "200000", K::kU64, "clocks for the Poisson check"},
      {"selftest", "theta_samples", "2000", K::kInt, "theta sweep size"},
  };
  return schema;
}

/// Parsed run configuration with every schema key present.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& e : config_schema()) {
      tree_.put(path(e.section, e.key), canonical(e, std::string(e.default_value)));
    }
  }

  static RunConfig from_string(const std::string& text) {
    std::istringstream in(text);
    return from_stream(in, "<string>");
  }

  static RunConfig from_file(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("config", "cannot open " + file);
    return from_stream(in, file);
  }

  /// Applies HBM_<SECTION>_<KEY> environment overrides for schema keys.
  void apply_env(const std::string& prefix = "HBM") {
    for (const auto& e : config_schema()) {
      std::string var = prefix + "_" + e.section + "_" + e.key;
      for (char& c : var) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (const char* v = std::getenv(var.c_str())) set(e.section, e.key, v);
    }
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    const SchemaEntry& e = entry(section, key);
    tree_.put(path(section, key), canonical(e, value));
  }

  std::string get_string(const std::string& section, const std::string& key) const {
    entry(section, key);
    return tree_.get<std::string>(path(section, key));
  }

  double get_real(const std::string& section, const std::string& key) const {
    return parse_real(section + "." + key, get_string(section, key));
  }

  long get_int(const std::string& section, const std::string& key) const {
    return parse_int(section + "." + key, get_string(section, key));
  }

  std::uint64_t get_u64(const std::string& section, const std::string& key) const {
    return parse_u64(section + "." + key, get_string(section, key));
  }

  bool get_bool(const std::string& section, const std::string& key) const {
    return parse_bool(section + "." + key, get_string(section, key));
  }

  std::vector<double> get_real_list(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get_string(section, key));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_real(section + "." + key, item));
    return out;
  }

  /// Canonical text: sections and keys in schema order, numbers in 17
  /// significant digits. serialize(from_string(serialize(c))) == serialize(c).
  std::string serialize() const {
    std::ostringstream out;
    std::string current;
    for (const auto& e : config_schema()) {
      if (current != e.section) {
        if (!current.empty()) out << '\n';
        out << '[' << e.section << "]\n";
        current = e.section;
      }
      out << e.key << " = " << tree_.get<std::string>(path(e.section, e.key)) << '\n';
    }
    return out.str();
  }

  /// FNV-1a 64 of the canonical text.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : serialize()) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  std::string hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
  }

  static std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }

 private:
  static boost::property_tree::ptree::path_type path(const std::string& s, const std::string& k) {
    return boost::property_tree::ptree::path_type(s + '\x1f' + k, '\x1f');
  }

  static const SchemaEntry& entry(const std::string& section, const std::string& key) {
    for (const auto& e : config_schema()) {
      if (section == e.section && key == e.key) return e;
    }
    throw ConfigError(section + "." + key, "unknown key");
  }

  static RunConfig from_stream(std::istream& in, const std::string& name) {
    boost::property_tree::ptree raw;
    try {
      boost::property_tree::ini_parser::read_ini(in, raw);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError("line " + std::to_string(e.line()), e.message() + " in " + name);
    }
    RunConfig cfg;
    for (const auto& [section, keys] : raw) {
      if (keys.empty() && !keys.data().empty()) {
        throw ConfigError(section, "key outside any section");
      }
      for (const auto& [key, value] : keys) {
        cfg.set(section, key, value.get_value<std::string>());
      }
    }
    return cfg;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double parse_real(const std::string& field, const std::string& text) {
    const std::string s = trim(text);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
      throw ConfigError(field, "expected a finite number, got '" + text + "'");
    }
    return v;
  }

  static long parse_int(const std::string& field, const std::string& text) {
    const std::string s = trim(text);
    char* end = nullptr;
    errno = 0;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
      throw ConfigError(field, "expected an integer, got '" + text + "'");
    }
    return v;
  }

  static std::uint64_t parse_u64(const std::string& field, const std::string& text) {
    const std::string s = trim(text);
    char* end = nullptr;
    errno = 0;
    if (!s.empty() && s[0] == '-') throw ConfigError(field, "expected a non-negative integer");
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
      throw ConfigError(field, "expected a non-negative integer, got '" + text + "'");
    }
    return v;
  }

  static bool parse_bool(const std::string& field, const std::string& text) {
    const std::string s = trim(text);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(field, "expected true or false, got '" + text + "'");
  }

  static std::string canonical(const SchemaEntry& e, const std::string& value) {
    const std::string field = std::string(e.section) + "." + e.key;
    switch (e.kind) {
      case ValueKind::kReal:
        return format_real(parse_real(field, value));
      case ValueKind::kInt:
        return std::to_string(parse_int(field, value));
      case ValueKind::kU64:
        return std::to_string(parse_u64(field, value));
      case ValueKind::kBool:
        return parse_bool(field, value) ? "true" : "false";
      case ValueKind::kString:
        return trim(value);
      case ValueKind::kRealList: {
        std::stringstream ss(value);
        std::string item, out;
        while (std::getline(ss, item, ',')) {
          if (!out.empty()) out += ',';
          out += format_real(parse_real(field, item));
        }
        if (out.empty()) throw ConfigError(field, "empty list");
        return out;
      }
    }
    return value;
  }

  boost::property_tree::ptree tree_;
};

}  // namespace hbm
