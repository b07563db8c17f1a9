#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rlscale/error.hpp"
#include "rlscale/frontier.hpp"
#include "rlscale/population.hpp"
#include "rlscale/sweep.hpp"
#include "rlscale/trainer.hpp"

namespace rlscale {

struct AnalysisConfig {
  double bin_width = kDefaultBinWidth;
  int grid_size = kDefaultGridSize;
  int smooth_window = kDefaultSmoothWindow;

  void validate() const {
    require(bin_width > 0.0, "analysis: bin_width must be > 0");
    require(grid_size >= 2, "analysis: grid_size must be >= 2");
    require(smooth_window >= 1 && smooth_window % 2 == 1, "analysis: smooth_window must be odd");
  }
};

namespace detail {

// Minimal TOML-like reader: [dotted.section] headers, `key = value` pairs,
// `#` comments, scalar values (integer, float, bool, bare or quoted string)
// and flat lists `[v, v, ...]`. Exactly the grammar documented in the README.
struct ConfigValue {
  std::string raw;
  int line = 0;
};

struct ParsedConfig {
  // section -> key -> value
  std::map<std::string, std::map<std::string, ConfigValue>> sections;
};

inline std::string strip(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline ParsedConfig parse_config_text(const std::string& text) {
  ParsedConfig out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', "config line " + std::to_string(lineno) + ": unterminated section");
      section = strip(line.substr(1, line.size() - 2));
      require(!section.empty(), "config line " + std::to_string(lineno) + ": empty section name");
      out.sections[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    require(eq != std::string::npos, "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    require(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
    require(!value.empty(), "config line " + std::to_string(lineno) + ": empty value for '" + key + "'");
    require(!section.empty(), "config line " + std::to_string(lineno) + ": key outside any section");
    require(!out.sections[section].count(key),
            "config line " + std::to_string(lineno) + ": duplicate key '" + section + "." + key + "'");
    out.sections[section][key] = {value, lineno};
  }
  return out;
}

// Typed accessors over one section; every fetched key is marked consumed so
// unknown keys can be rejected by name afterwards.
class SectionReader {
 public:
  SectionReader(const std::string& name, const std::map<std::string, ConfigValue>* kv)
      : name_(name), kv_(kv) {}

  bool has(const std::string& key) const { return kv_ != nullptr && kv_->count(key) > 0; }

  std::string raw(const std::string& key) {
    consumed_.push_back(key);
    return kv_->at(key).raw;
  }

  long long integer(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    const std::string v = raw(key);
    std::size_t pos = 0;
    long long parsed = 0;
    try {
      parsed = std::stoll(v, &pos);
    } catch (...) {
      throw ValidationError("config: key '" + name_ + "." + key + "' is not an integer: " + v);
    }
    require(pos == v.size(), "config: key '" + name_ + "." + key + "' is not an integer: " + v);
    return parsed;
  }

  double real(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const std::string v = raw(key);
    std::size_t pos = 0;
    double parsed = 0.0;
    try {
      parsed = std::stod(v, &pos);
    } catch (...) {
      throw ValidationError("config: key '" + name_ + "." + key + "' is not a number: " + v);
    }
    require(pos == v.size(), "config: key '" + name_ + "." + key + "' is not a number: " + v);
    return parsed;
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = raw(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw ValidationError("config: key '" + name_ + "." + key + "' must be true or false, got " + v);
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    std::string v = raw(key);
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
    return v;
  }

  std::vector<long long> integer_list(const std::string& key, std::vector<long long> fallback) {
    if (!has(key)) return fallback;
    const std::string v = raw(key);
    require(v.size() >= 2 && v.front() == '[' && v.back() == ']',
            "config: key '" + name_ + "." + key + "' must be a [list]");
    std::vector<long long> out;
    std::string body = v.substr(1, v.size() - 2);
    std::istringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = strip(item);
      if (item.empty()) continue;
      std::size_t pos = 0;
      out.push_back(std::stoll(item, &pos));
      require(pos == item.size(), "config: bad list entry '" + item + "' in " + name_ + "." + key);
    }
    require(!out.empty(), "config: empty list for '" + name_ + "." + key + "'");
    return out;
  }

  void reject_unknown() const {
    if (kv_ == nullptr) return;
    for (const auto& [key, value] : *kv_) {
      bool known = false;
      for (const auto& c : consumed_) {
        if (c == key) {
          known = true;
          break;
        }
      }
      if (!known) {
        throw ValidationError("config: unknown key '" + name_ + "." + key + "' (line " +
                              std::to_string(value.line) + ")");
      }
    }
  }

 private:
  std::string name_;
  const std::map<std::string, ConfigValue>* kv_;
  std::vector<std::string> consumed_;
};

}  // namespace detail

// One experiment file drives the whole pipeline: population generation,
// trainer defaults, sweep grid and analysis knobs. Unknown keys and sections
// are rejected by name.
struct ExperimentConfig {
  PopulationConfig population;
  TrainConfig trainer;
  SweepGrid sweep;
  AnalysisConfig analysis;

  static ExperimentConfig from_string(const std::string& text) {
    const detail::ParsedConfig parsed = detail::parse_config_text(text);
    ExperimentConfig cfg;

    std::vector<std::string> spec_sections;
    for (const auto& [name, kv] : parsed.sections) {
      if (name.rfind("population.spec.", 0) == 0) {
        spec_sections.push_back(name);
        continue;
      }
      if (name != "population" && name != "trainer" && name != "sweep" && name != "analysis") {
        throw ValidationError("config: unknown section [" + name + "]");
      }
    }

    const auto section = [&](const std::string& name) {
      const auto it = parsed.sections.find(name);
      return detail::SectionReader(name, it == parsed.sections.end() ? nullptr : &it->second);
    };

    {
      detail::SectionReader r = section("population");
      cfg.population.train_size = static_cast<int>(r.integer("train_size", cfg.population.train_size));
      cfg.population.val_size = static_cast<int>(r.integer("val_size", cfg.population.val_size));
      cfg.population.num_arms = static_cast<int>(r.integer("num_arms", cfg.population.num_arms));
      cfg.population.feature_dim = static_cast<int>(r.integer("feature_dim", cfg.population.feature_dim));
      cfg.population.cluster_count =
          static_cast<int>(r.integer("cluster_count", cfg.population.cluster_count));
      cfg.population.seed = static_cast<std::uint64_t>(r.integer("seed", 0));
      r.reject_unknown();
    }

    for (const std::string& name : spec_sections) {
      detail::SectionReader r = section(name);
      DifficultySpec spec;
      spec.name = name.substr(std::string("population.spec.").size());
      require(!spec.name.empty(), "config: empty difficulty spec name in [" + name + "]");
      spec.p0_lo = r.real("p0_lo", 0.0);
      spec.p0_hi = r.real("p0_hi", 1.0);
      spec.weight = r.real("weight", 1.0);
      r.reject_unknown();
      cfg.population.specs.push_back(spec);
    }

    {
      detail::SectionReader r = section("trainer");
      cfg.trainer.problem_batch = static_cast<int>(r.integer("B_p", cfg.trainer.problem_batch));
      cfg.trainer.group_size = static_cast<int>(r.integer("n", cfg.trainer.group_size));
      cfg.trainer.total_steps = static_cast<int>(r.integer("M", cfg.trainer.total_steps));
      cfg.trainer.lr_rule = lr_rule_from_string(r.text("lr_rule", to_string(cfg.trainer.lr_rule)));
      cfg.trainer.eta_base = r.real("eta_base", cfg.trainer.eta_base);
      cfg.trainer.batch_ref = r.real("B_ref", cfg.trainer.batch_ref);
      cfg.trainer.entropy_coef = r.real("entropy_coef", cfg.trainer.entropy_coef);
      cfg.trainer.kl_coef = r.real("kl_coef", cfg.trainer.kl_coef);
      cfg.trainer.zero_variance_filter =
          r.boolean("zero_variance_filter", cfg.trainer.zero_variance_filter);
      cfg.trainer.std_normalize = r.boolean("std_normalize", cfg.trainer.std_normalize);
      cfg.trainer.estimation_group_size =
          static_cast<int>(r.integer("n_est", cfg.trainer.estimation_group_size));
      cfg.trainer.eval_every = static_cast<int>(r.integer("eval_every", cfg.trainer.eval_every));
      cfg.trainer.seed = static_cast<std::uint64_t>(r.integer("seed", 0));
      cfg.trainer.lambda = r.real("lambda", cfg.trainer.lambda);
      cfg.trainer.baseline = baseline_from_string(r.text("baseline", to_string(cfg.trainer.baseline)));
      r.reject_unknown();
    }

    {
      detail::SectionReader r = section("sweep");
      const auto to_int_vec = [](const std::vector<long long>& v) {
        std::vector<int> out;
        out.reserve(v.size());
        for (long long x : v) out.push_back(static_cast<int>(x));
        return out;
      };
      if (r.has("B_p_values")) {
        cfg.sweep.problem_batch_values = to_int_vec(r.integer_list("B_p_values", {}));
      }
      if (r.has("n_values")) {
        cfg.sweep.group_size_values = to_int_vec(r.integer_list("n_values", {}));
      }
      cfg.sweep.mode = sweep_mode_from_string(r.text("mode", to_string(cfg.sweep.mode)));
      cfg.sweep.batch_cap = r.integer("B_max", cfg.sweep.batch_cap);
      cfg.sweep.run_budget = r.integer("C_total", cfg.sweep.run_budget);
      cfg.sweep.fixed_batch = r.integer("fixed_B", cfg.sweep.fixed_batch);
      cfg.sweep.base_seed = static_cast<std::uint64_t>(r.integer("base_seed", 0));
      cfg.sweep.replicates = static_cast<int>(r.integer("replicates", cfg.sweep.replicates));
      r.reject_unknown();
    }

    {
      detail::SectionReader r = section("analysis");
      cfg.analysis.bin_width = r.real("bin_width", cfg.analysis.bin_width);
      cfg.analysis.grid_size = static_cast<int>(r.integer("grid_size", cfg.analysis.grid_size));
      cfg.analysis.smooth_window =
          static_cast<int>(r.integer("smooth_window", cfg.analysis.smooth_window));
      r.reject_unknown();
    }

    return cfg;
  }

  static ExperimentConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
  }
};

}  // namespace rlscale
