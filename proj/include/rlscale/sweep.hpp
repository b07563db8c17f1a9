#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rlscale/csv.hpp"
#include "rlscale/error.hpp"
#include "rlscale/frontier.hpp"
#include "rlscale/io.hpp"
#include "rlscale/trainer.hpp"

namespace rlscale {

enum class SweepMode { kFixBp, kFixB, kJoint };

inline std::string to_string(SweepMode mode) {
  switch (mode) {
    case SweepMode::kFixBp: return "fix_Bp";
    case SweepMode::kFixB: return "fix_B";
    case SweepMode::kJoint: return "joint";
  }
  return "joint";
}

inline SweepMode sweep_mode_from_string(const std::string& s) {
  if (s == "fix_Bp") return SweepMode::kFixBp;
  if (s == "fix_B") return SweepMode::kFixB;
  if (s == "joint") return SweepMode::kJoint;
  throw ValidationError("sweep: unknown mode '" + s + "'");
}

struct SweepGrid {
  std::vector<int> problem_batch_values = {32, 64, 128, 256, 512, 1024};
  std::vector<int> group_size_values = {8, 16, 32, 64, 128, 256, 512, 1024, 2048};
  SweepMode mode = SweepMode::kJoint;
  long long batch_cap = 65536;    // B_max: every config satisfies B_p * n <= batch_cap
  long long run_budget = 0;       // C_total: rollouts per run, M = floor(C / (B_p * n))
  long long fixed_batch = 0;      // required when mode == kFixB
  std::uint64_t base_seed = 0;
  int replicates = 1;

  void validate() const {
    require(!problem_batch_values.empty(), "sweep: B_p_values must be non-empty");
    require(!group_size_values.empty(), "sweep: n_values must be non-empty");
    for (int v : problem_batch_values) require(v >= 1, "sweep: B_p values must be >= 1");
    for (int v : group_size_values) require(v >= 1, "sweep: n values must be >= 1");
    require(batch_cap >= 1, "sweep: B_max must be >= 1");
    require(run_budget >= 1, "sweep: C_total must be >= 1");
    require(replicates >= 1, "sweep: replicates must be >= 1");
    if (mode == SweepMode::kFixB) require(fixed_batch >= 1, "sweep: fix_B mode requires fixed_B");
    if (mode == SweepMode::kFixBp) {
      require(problem_batch_values.size() == 1, "sweep: fix_Bp mode requires exactly one B_p value");
    }
  }
};

enum class RunStatus { kPending, kCompleted, kFailed, kSkipped };

inline std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::kPending: return "pending";
    case RunStatus::kCompleted: return "completed";
    case RunStatus::kFailed: return "failed";
    case RunStatus::kSkipped: return "skipped";
  }
  return "pending";
}

inline RunStatus run_status_from_string(const std::string& s) {
  if (s == "pending") return RunStatus::kPending;
  if (s == "completed") return RunStatus::kCompleted;
  if (s == "failed") return RunStatus::kFailed;
  if (s == "skipped") return RunStatus::kSkipped;
  throw ValidationError("sweep: unknown run status '" + s + "'");
}

struct SweepEntry {
  std::string run_id;
  int problem_batch = 0;
  int group_size = 0;
  long long steps = 0;  // M = floor(C_total / (B_p * n)); 0 marks a skipped config
  int replicate = 0;
  std::uint64_t seed = 0;
  std::string path;  // run directory, relative to the sweep directory
  RunStatus status = RunStatus::kPending;
  std::string error;
};

struct SweepManifest {
  SweepGrid grid;
  std::vector<SweepEntry> entries;
};

// Cross product of (B_p, n) filtered by mode and the batch cap; M comes from
// the per-run budget and configs that cannot afford a single step are listed
// as skipped. Seeds derive from (base_seed, B_p, n, replicate) only, so
// adding configs never perturbs existing ones.
inline SweepManifest enumerate_configs(const SweepGrid& grid) {
  grid.validate();
  SweepManifest manifest;
  manifest.grid = grid;
  int runnable = 0;
  for (int bp : grid.problem_batch_values) {
    for (int n : grid.group_size_values) {
      const long long batch = static_cast<long long>(bp) * n;
      if (grid.mode == SweepMode::kFixB && batch != grid.fixed_batch) continue;
      if (batch > grid.batch_cap) continue;
      const long long steps = grid.run_budget / batch;
      for (int rep = 0; rep < grid.replicates; ++rep) {
        SweepEntry e;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "bp%04d_n%04d_rep%d", bp, n, rep);
        e.run_id = buf;
        e.problem_batch = bp;
        e.group_size = n;
        e.steps = steps;
        e.replicate = rep;
        e.seed = derive_seed(grid.base_seed, static_cast<std::uint64_t>(bp),
                             static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep));
        e.path = e.run_id;
        e.status = steps >= 1 ? RunStatus::kPending : RunStatus::kSkipped;
        if (e.status == RunStatus::kPending) ++runnable;
        manifest.entries.push_back(std::move(e));
      }
    }
  }
  require(runnable >= 1, "sweep: empty feasible set (no config fits the constraints)");
  return manifest;
}

inline json sweep_grid_to_json(const SweepGrid& g) {
  return json{{"B_p_values", g.problem_batch_values},
              {"n_values", g.group_size_values},
              {"mode", to_string(g.mode)},
              {"B_max", g.batch_cap},
              {"C_total", g.run_budget},
              {"fixed_B", g.fixed_batch},
              {"base_seed", g.base_seed},
              {"replicates", g.replicates}};
}

inline SweepGrid sweep_grid_from_json(const json& j) {
  SweepGrid g;
  g.problem_batch_values = j.at("B_p_values").get<std::vector<int>>();
  g.group_size_values = j.at("n_values").get<std::vector<int>>();
  g.mode = sweep_mode_from_string(j.at("mode").get<std::string>());
  g.batch_cap = j.at("B_max").get<long long>();
  g.run_budget = j.at("C_total").get<long long>();
  g.fixed_batch = j.at("fixed_B").get<long long>();
  g.base_seed = j.at("base_seed").get<std::uint64_t>();
  g.replicates = j.at("replicates").get<int>();
  return g;
}

inline json manifest_to_json(const SweepManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    json je{{"run_id", e.run_id}, {"B_p", e.problem_batch}, {"n", e.group_size},
            {"M", e.steps},       {"replicate", e.replicate}, {"seed", e.seed},
            {"path", e.path},     {"status", to_string(e.status)}};
    if (!e.error.empty()) je["error"] = e.error;
    entries.push_back(std::move(je));
  }
  return json{{"format_version", 1}, {"grid", sweep_grid_to_json(m.grid)}, {"entries", entries}};
}

inline SweepManifest manifest_from_json(const json& j) {
  SweepManifest m;
  m.grid = sweep_grid_from_json(j.at("grid"));
  for (const auto& je : j.at("entries")) {
    SweepEntry e;
    e.run_id = je.at("run_id").get<std::string>();
    e.problem_batch = je.at("B_p").get<int>();
    e.group_size = je.at("n").get<int>();
    e.steps = je.at("M").get<long long>();
    e.replicate = je.at("replicate").get<int>();
    e.seed = je.at("seed").get<std::uint64_t>();
    e.path = je.at("path").get<std::string>();
    e.status = run_status_from_string(je.at("status").get<std::string>());
    if (je.contains("error")) e.error = je.at("error").get<std::string>();
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline void save_manifest(const SweepManifest& m, const std::filesystem::path& path) {
  write_text_file_atomic(path, manifest_to_json(m).dump(1));
}

inline SweepManifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(json::parse(read_text_file(path)));
}

// Auto eval cadence for sweep runs: roughly this many records per run.
inline constexpr long long kAutoEvalTargetRecords = 256;

struct SweepOptions {
  int workers = 1;
  bool retry_failed = false;
  bool save_checkpoints = true;
};

// Executes every pending entry with trainer::run_training. Runs are
// independent (each owns its derived seed), so outputs are bit-identical for
// any worker count and any execution order. The manifest file is the single
// synchronization point, rewritten atomically after each run finishes.
//
// Re-invoking on a directory with a manifest resumes it: completed runs are
// never recomputed; failed runs are retried only with retry_failed.
inline void run_sweep(SweepManifest& manifest, const Population& pop, const TrainConfig& defaults,
                      const std::filesystem::path& sweep_dir, const SweepOptions& options = {}) {
  require(options.workers >= 1, "sweep: workers must be >= 1");
  std::filesystem::create_directories(sweep_dir);
  const std::filesystem::path manifest_path = sweep_dir / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    SweepManifest existing = load_manifest(manifest_path);
    require(sweep_grid_to_json(existing.grid) == sweep_grid_to_json(manifest.grid),
            "sweep: directory already holds a manifest for a different grid");
    std::map<std::string, const SweepEntry*> by_id;
    for (const auto& e : existing.entries) by_id[e.run_id] = &e;
    for (auto& e : manifest.entries) {
      const auto it = by_id.find(e.run_id);
      if (it == by_id.end()) continue;
      e.status = it->second->status;
      e.error = it->second->error;
      if (e.status == RunStatus::kFailed && options.retry_failed) {
        e.status = RunStatus::kPending;
        e.error.clear();
      }
    }
  }

  std::vector<std::size_t> worklist;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].status == RunStatus::kPending) worklist.push_back(i);
  }
  save_manifest(manifest, manifest_path);

  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (;;) {
      const std::size_t w = next.fetch_add(1);
      if (w >= worklist.size()) return;
      SweepEntry& entry = manifest.entries[worklist[w]];
      RunStatus status = RunStatus::kCompleted;
      std::string error;
      try {
        TrainConfig cfg = defaults;
        cfg.problem_batch = entry.problem_batch;
        cfg.group_size = entry.group_size;
        cfg.total_steps = static_cast<int>(entry.steps);
        cfg.seed = entry.seed;
        if (cfg.eval_every == 0) {
          cfg.eval_every = static_cast<int>(std::max<long long>(1, entry.steps / kAutoEvalTargetRecords));
        }
        RunLog log = run_training(pop, cfg, entry.run_id);
        save_run(log, sweep_dir / entry.path, options.save_checkpoints);
      } catch (const std::exception& e) {
        status = RunStatus::kFailed;
        error = e.what();
      }
      const std::lock_guard<std::mutex> lock(mutex);
      entry.status = status;
      entry.error = error;
      save_manifest(manifest, manifest_path);
    }
  };

  if (options.workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < options.workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
}

// Aggregation key: (B_p or -1, n).
using AggregateKey = std::pair<int, int>;

// Concatenates the chosen runlog column into per-key RewardPoint series,
// sorted by compute. Step-0 records carry zero compute and are dropped (a
// RewardPoint must have positive compute). Scans every subdirectory holding
// a runlog.csv, so it also works on directories without a manifest.
inline std::map<AggregateKey, std::vector<RewardPoint>> aggregate(
    const std::filesystem::path& run_dir, const std::string& column = "val_avg",
    bool key_by_problem_batch = false) {
  std::map<AggregateKey, std::vector<RewardPoint>> groups;
  std::vector<std::filesystem::path> logs;
  if (std::filesystem::exists(run_dir / "runlog.csv")) logs.push_back(run_dir / "runlog.csv");
  if (std::filesystem::is_directory(run_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "runlog.csv")) {
        logs.push_back(entry.path() / "runlog.csv");
      }
    }
  }
  std::sort(logs.begin(), logs.end());
  require(!logs.empty(), "aggregate: no completed runs under " + run_dir.string());
  for (const auto& path : logs) {
    const CsvTable table = read_csv(path.string());
    const int col_bp = table.column("B_p");
    const int col_n = table.column("n");
    const int col_compute = table.column("compute");
    const int col_value = table.column(column);
    for (std::size_t row = 0; row < table.rows.size(); ++row) {
      const double compute = table.value(row, col_compute);
      if (compute <= 0.0) continue;
      const AggregateKey key{key_by_problem_batch ? static_cast<int>(table.ivalue(row, col_bp)) : -1,
                             static_cast<int>(table.ivalue(row, col_n))};
      groups[key].push_back({compute, table.value(row, col_value)});
    }
  }
  for (auto& [key, points] : groups) {
    std::sort(points.begin(), points.end(),
              [](const RewardPoint& a, const RewardPoint& b) { return a.compute < b.compute; });
  }
  return groups;
}

}  // namespace rlscale
