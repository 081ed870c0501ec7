#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tempgp/dataset.hpp"
#include "tempgp/error.hpp"

namespace tempgp {

/// Flat "key = value" run configuration. Every key has a default, unknown
/// keys are rejected, and later assignments override earlier ones, so a
/// config file can be patched from the command line.
class Config {
 public:
  Config() : values_(defaults()) {}

  static const std::map<std::string, std::string> &defaults() {
    static const std::map<std::string, std::string> d = {
        {"data.path", ""},
        {"data.delimiter", ","},
        {"data.response", "y"},
        {"data.time", "time"},
        {"data.covariates", ""},
        {"data.circular", ""},
        {"data.interval", "600"},
        {"sim.preset", "temporal"},
        {"sim.n", "4000"},
        {"sim.sigma_g_sq", "2"},
        {"sim.phi", "3"},
        {"sim.sigma_eps_sq", "0.1"},
        {"sim.missing", "0"},
        {"seed", "1"},
        {"partition.fractions", "0.5,0.75"},
        {"partition.boundaries", ""},
        {"models", "binning,knn,tsknn,tempgp,reggp"},
        {"binning.column", ""},
        {"binning.width", "auto"},
        {"thinning.max_lag", "200"},
        {"thinning.T", "adaptive"},
        {"kernel.family", "matern32"},
        {"kernel.time_family", "matern32"},
        {"kernel.jitter", "1e-8"},
        {"optimizer.max_iterations", "200"},
        {"optimizer.gtol", "1e-5"},
        {"optimizer.restarts", "3"},
        {"tempgp.max_full_solve", "8000"},
        {"g.cache", "true"},
        {"g.cache_overlap", "0.9"},
        {"joint.max_n", "3000"},
        {"joint.predictor", "plugin"},
        {"knn.k_grid", "5,10,20,50,100,200,400"},
        {"knn.folds", "5"},
        {"knn.cv", "random"},
        {"output.dir", ""},
        {"sweep.T_list", "1,2,4,8,16,32,64,adaptive"},
        {"compare.replicates", "1"},
        {"reproduce.dir", ""},
        {"reproduce.inland_covariates", "V,D,rho,I,S"},
        {"reproduce.offshore_covariates", "V,D,rho,I,H"},
    };
    return d;
  }

  /// Short names accepted for the CSV schema keys.
  static std::string canonical(const std::string &key) {
    static const std::map<std::string, std::string> aliases = {
        {"response", "data.response"},
        {"time", "data.time"},
        {"covariates", "data.covariates"},
        {"circular", "data.circular"},
        {"delimiter", "data.delimiter"},
    };
    const auto it = aliases.find(key);
    return it == aliases.end() ? key : it->second;
  }

  void set(const std::string &key, const std::string &value) {
    const auto k = canonical(key);
    if (!defaults().contains(k)) throw ConfigError("unknown config key '" + key + "'");
    values_[k] = value;
  }

  /// Accepts "key=value" (surrounding spaces ignored).
  void set_assignment(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("expected key=value, got '" + std::string(text) + "'");
    }
    set(std::string(detail::trim(text.substr(0, eq))), std::string(detail::trim(text.substr(eq + 1))));
  }

  void merge_stream(std::istream &in, const std::string &source = "config") {
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      const auto hash = line.find('#');
      const auto body = detail::trim(std::string_view(line).substr(0, hash));
      if (body.empty()) continue;
      try {
        set_assignment(body);
      } catch (const ConfigError &e) {
        throw ConfigError(source + ":" + std::to_string(no) + ": " + e.what());
      }
    }
  }

  void merge_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    merge_stream(in, path);
  }

  const std::string &get(const std::string &key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string &key) const {
    const auto v = detail::parse_double(get(key));
    if (!v) throw ConfigError(key + ": expected a number, got '" + get(key) + "'");
    return *v;
  }

  std::int64_t get_int(const std::string &key) const {
    const auto v = detail::parse_int(get(key));
    if (!v) throw ConfigError(key + ": expected an integer, got '" + get(key) + "'");
    return *v;
  }

  bool get_bool(const std::string &key) const {
    const auto &v = get(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
  }

  std::vector<std::string> get_list(const std::string &key) const {
    std::vector<std::string> out;
    std::string_view s = get(key);
    while (!s.empty()) {
      const auto comma = s.find(',');
      const auto item = detail::trim(s.substr(0, comma));
      if (!item.empty()) out.emplace_back(item);
      if (comma == std::string_view::npos) break;
      s.remove_prefix(comma + 1);
    }
    return out;
  }

  std::vector<double> get_doubles(const std::string &key) const {
    std::vector<double> out;
    for (const auto &item : get_list(key)) {
      const auto v = detail::parse_double(item);
      if (!v) throw ConfigError(key + ": bad number '" + item + "'");
      out.push_back(*v);
    }
    return out;
  }

  const std::map<std::string, std::string> &values() const { return values_; }

  /// Effective configuration, one sorted "key=value" per line.
  std::string echo() const {
    std::string out;
    for (const auto &[k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  /// FNV-1a 64 of echo(), as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : echo()) {
      h ^= c;
      h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace tempgp
