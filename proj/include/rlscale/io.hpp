#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlscale/csv.hpp"
#include "rlscale/error.hpp"
#include "rlscale/policy.hpp"
#include "rlscale/population.hpp"
#include "rlscale/trainer.hpp"

namespace rlscale {

inline constexpr int kPopulationFormatVersion = 1;
inline constexpr int kPolicyFormatVersion = 1;

using nlohmann::json;

inline void write_text_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- population ---

inline json population_config_to_json(const PopulationConfig& cfg) {
  json specs = json::array();
  for (const auto& s : cfg.specs) {
    specs.push_back({{"name", s.name}, {"p0_lo", s.p0_lo}, {"p0_hi", s.p0_hi}, {"weight", s.weight}});
  }
  return json{{"train_size", cfg.train_size}, {"val_size", cfg.val_size},
              {"num_arms", cfg.num_arms},     {"feature_dim", cfg.feature_dim},
              {"cluster_count", cfg.cluster_count}, {"specs", specs},
              {"seed", cfg.seed}};
}

inline PopulationConfig population_config_from_json(const json& j) {
  PopulationConfig cfg;
  cfg.train_size = j.at("train_size").get<int>();
  cfg.val_size = j.at("val_size").get<int>();
  cfg.num_arms = j.at("num_arms").get<int>();
  cfg.feature_dim = j.at("feature_dim").get<int>();
  cfg.cluster_count = j.at("cluster_count").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& s : j.at("specs")) {
    DifficultySpec spec;
    spec.name = s.at("name").get<std::string>();
    spec.p0_lo = s.at("p0_lo").get<double>();
    spec.p0_hi = s.at("p0_hi").get<double>();
    spec.weight = s.at("weight").get<double>();
    cfg.specs.push_back(spec);
  }
  return cfg;
}

inline json problem_to_json(const Problem& p) {
  return json{{"id", p.id},
              {"num_arms", p.num_arms},
              {"correct_arms", p.correct_arms},
              {"feature", p.feature},
              {"target_p0", p.target_p0}};
}

inline Problem problem_from_json(const json& j) {
  Problem p;
  p.id = j.at("id").get<std::uint64_t>();
  p.num_arms = j.at("num_arms").get<int>();
  p.correct_arms = j.at("correct_arms").get<std::vector<int>>();
  p.feature = j.at("feature").get<std::vector<double>>();
  p.target_p0 = j.at("target_p0").get<double>();
  return p;
}

inline json population_to_json(const Population& pop) {
  json train = json::array();
  for (const auto& p : pop.train) train.push_back(problem_to_json(p));
  json val = json::array();
  for (const auto& p : pop.val) val.push_back(problem_to_json(p));
  return json{{"format_version", kPopulationFormatVersion},
              {"config", population_config_to_json(pop.config)},
              {"train", train},
              {"val", val}};
}

inline Population population_from_json(const json& j) {
  require(j.at("format_version").get<int>() == kPopulationFormatVersion,
          "population file: unsupported format_version");
  Population pop;
  pop.config = population_config_from_json(j.at("config"));
  for (const auto& p : j.at("train")) pop.train.push_back(problem_from_json(p));
  for (const auto& p : j.at("val")) pop.val.push_back(problem_from_json(p));
  return pop;
}

inline void save_population(const Population& pop, const std::filesystem::path& path) {
  write_text_file_atomic(path, population_to_json(pop).dump(1));
}

inline Population load_population(const std::filesystem::path& path) {
  return population_from_json(json::parse(read_text_file(path)));
}

// --- policy snapshots ---

inline json policy_to_json(const PolicyState& st) {
  return json{{"format_version", kPolicyFormatVersion},
              {"num_problems", st.num_problems()},
              {"num_arms", st.num_arms()},
              {"feature_dim", st.feature_dim()},
              {"lambda", st.lambda()},
              {"tabular_bias", std::vector<double>(st.tabular_bias().begin(), st.tabular_bias().end())},
              {"shared_weights",
               std::vector<double>(st.shared_weights().begin(), st.shared_weights().end())},
              {"base_tabular_bias",
               std::vector<double>(st.base_tabular_bias().begin(), st.base_tabular_bias().end())},
              {"base_shared_weights",
               std::vector<double>(st.base_shared_weights().begin(), st.base_shared_weights().end())}};
}

inline PolicyState policy_from_json(const json& j, const Population* pop = nullptr) {
  require(j.at("format_version").get<int>() == kPolicyFormatVersion,
          "policy file: unsupported format_version");
  PolicyState st = PolicyState::from_parts(
      j.at("num_problems").get<int>(), j.at("num_arms").get<int>(), j.at("feature_dim").get<int>(),
      j.at("lambda").get<double>(), j.at("tabular_bias").get<std::vector<double>>(),
      j.at("shared_weights").get<std::vector<double>>(),
      j.at("base_tabular_bias").get<std::vector<double>>(),
      j.at("base_shared_weights").get<std::vector<double>>());
  if (pop != nullptr) st.rebuild_base_probs(*pop);
  return st;
}

inline void save_policy(const PolicyState& st, const std::filesystem::path& path) {
  write_text_file_atomic(path, policy_to_json(st).dump());
}

inline PolicyState load_policy(const std::filesystem::path& path, const Population* pop = nullptr) {
  return policy_from_json(json::parse(read_text_file(path)), pop);
}

// --- train config echo ---

inline json train_config_to_json(const TrainConfig& cfg) {
  return json{{"B_p", cfg.problem_batch},
              {"n", cfg.group_size},
              {"M", cfg.total_steps},
              {"lr_rule", to_string(cfg.lr_rule)},
              {"eta_base", cfg.eta_base},
              {"B_ref", cfg.batch_ref},
              {"entropy_coef", cfg.entropy_coef},
              {"kl_coef", cfg.kl_coef},
              {"zero_variance_filter", cfg.zero_variance_filter},
              {"std_normalize", cfg.std_normalize},
              {"n_est", cfg.estimation_group_size},
              {"eval_every", cfg.eval_every},
              {"seed", cfg.seed},
              {"lambda", cfg.lambda},
              {"baseline", to_string(cfg.baseline)}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.problem_batch = j.at("B_p").get<int>();
  cfg.group_size = j.at("n").get<int>();
  cfg.total_steps = j.at("M").get<int>();
  cfg.lr_rule = lr_rule_from_string(j.at("lr_rule").get<std::string>());
  cfg.eta_base = j.at("eta_base").get<double>();
  cfg.batch_ref = j.at("B_ref").get<double>();
  cfg.entropy_coef = j.at("entropy_coef").get<double>();
  cfg.kl_coef = j.at("kl_coef").get<double>();
  cfg.zero_variance_filter = j.at("zero_variance_filter").get<bool>();
  cfg.std_normalize = j.at("std_normalize").get<bool>();
  cfg.estimation_group_size = j.at("n_est").get<int>();
  cfg.eval_every = j.at("eval_every").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.lambda = j.at("lambda").get<double>();
  cfg.baseline = baseline_from_string(j.at("baseline").get<std::string>());
  return cfg;
}

// --- run logs ---

inline constexpr const char* kRunLogHeader =
    "run_id,B_p,n,M_total,step,compute,train_reward,val_avg,val_best4,val_worst4,"
    "zero_pass_frac,entropy,kl,lr";

inline std::string runlog_to_csv(const RunLog& log) {
  std::ostringstream out;
  out << kRunLogHeader << "\n";
  for (const StepRecord& r : log.records) {
    out << log.run_id << ',' << log.config.problem_batch << ',' << log.config.group_size << ','
        << log.config.total_steps << ',' << r.step << ',' << format_double(r.compute) << ','
        << format_double(r.train_reward) << ',' << format_double(r.val_avg) << ','
        << format_double(r.val_best4) << ',' << format_double(r.val_worst4) << ','
        << format_double(r.zero_pass_frac) << ',' << format_double(r.entropy) << ','
        << format_double(r.kl) << ',' << format_double(r.lr) << "\n";
  }
  return out.str();
}

// Writes runlog.csv, the config.json sidecar, and the final policy snapshot
// into `dir`; fills log.checkpoint with the snapshot path.
inline void save_run(RunLog& log, const std::filesystem::path& dir, bool save_checkpoint = true) {
  std::filesystem::create_directories(dir);
  write_text_file_atomic(dir / "runlog.csv", runlog_to_csv(log));
  json sidecar = train_config_to_json(log.config);
  sidecar["run_id"] = log.run_id;
  if (save_checkpoint) {
    save_policy(log.final_state, dir / "policy.json");
    log.checkpoint = (dir / "policy.json").string();
    sidecar["checkpoint"] = "policy.json";
  }
  write_text_file_atomic(dir / "config.json", sidecar.dump(1));
}

}  // namespace rlscale
