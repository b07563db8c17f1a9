#include "rlscale/sweep.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "test_util.hpp"

namespace rlscale {
namespace {

using rlscale::testing::TempDir;

std::string read_file(const std::filesystem::path& p) { return read_text_file(p); }

TEST(EnumerateConfigs, FixedTotalBatchKeepsExactFactorPairs) {
  SweepGrid grid;
  grid.mode = SweepMode::kFixB;
  grid.fixed_batch = 8192;
  grid.run_budget = 1 << 22;
  const SweepManifest manifest = enumerate_configs(grid);
  std::set<std::pair<int, int>> pairs;
  for (const auto& e : manifest.entries) pairs.insert({e.problem_batch, e.group_size});
  const std::set<std::pair<int, int>> expected = {{32, 256}, {64, 128}, {128, 64},
                                                  {256, 32}, {512, 16}, {1024, 8}};
  EXPECT_EQ(pairs, expected);
}

TEST(EnumerateConfigs, BatchCapExcludesOversizedConfigs) {
  SweepGrid grid;
  grid.batch_cap = 16384;
  grid.run_budget = 1 << 22;
  const SweepManifest manifest = enumerate_configs(grid);
  for (const auto& e : manifest.entries) {
    EXPECT_LE(static_cast<long long>(e.problem_batch) * e.group_size, 16384);
  }
  bool has_512_32 = false;
  for (const auto& e : manifest.entries) {
    EXPECT_FALSE(e.problem_batch == 1024 && e.group_size == 32);  // product 32768
    has_512_32 = has_512_32 || (e.problem_batch == 512 && e.group_size == 32);
  }
  EXPECT_TRUE(has_512_32);
}

TEST(EnumerateConfigs, FloorBoundaryOnBudget) {
  SweepGrid grid;
  grid.problem_batch_values = {32};
  grid.group_size_values = {8, 16};
  grid.mode = SweepMode::kFixBp;
  grid.run_budget = 256;  // exactly B_p*n for n=8, below it for n=16
  const SweepManifest manifest = enumerate_configs(grid);
  ASSERT_EQ(manifest.entries.size(), 2u);
  EXPECT_EQ(manifest.entries[0].steps, 1);
  EXPECT_EQ(manifest.entries[0].status, RunStatus::kPending);
  EXPECT_EQ(manifest.entries[1].steps, 0);
  EXPECT_EQ(manifest.entries[1].status, RunStatus::kSkipped);

  grid.run_budget = 255;  // nothing fits
  EXPECT_THROW(enumerate_configs(grid), ValidationError);
}

TEST(EnumerateConfigs, BudgetInvariant) {
  SweepGrid grid;
  grid.run_budget = 1 << 20;
  grid.batch_cap = 16384;
  const SweepManifest manifest = enumerate_configs(grid);
  for (const auto& e : manifest.entries) {
    if (e.status == RunStatus::kSkipped) continue;
    const long long batch = static_cast<long long>(e.problem_batch) * e.group_size;
    EXPECT_LE(batch * e.steps, grid.run_budget);
    EXPECT_GT(batch * (e.steps + 1), grid.run_budget);
  }
}

TEST(EnumerateConfigs, SeedsStableUnderGridExtension) {
  SweepGrid small;
  small.problem_batch_values = {32};
  small.group_size_values = {8};
  small.mode = SweepMode::kFixBp;
  small.run_budget = 4096;
  small.base_seed = 99;
  SweepGrid big = small;
  big.group_size_values = {8, 16, 32};
  big.replicates = 2;
  const SweepManifest a = enumerate_configs(small);
  const SweepManifest b = enumerate_configs(big);
  std::map<std::string, std::uint64_t> seeds;
  for (const auto& e : b.entries) seeds[e.run_id] = e.seed;
  EXPECT_EQ(seeds.at(a.entries[0].run_id), a.entries[0].seed);
  EXPECT_NE(seeds.at("bp0032_n0008_rep0"), seeds.at("bp0032_n0008_rep1"));
}

TEST(EnumerateConfigs, FixBpRequiresSingleBatchValue) {
  SweepGrid grid;
  grid.mode = SweepMode::kFixBp;
  grid.run_budget = 4096;
  EXPECT_THROW(enumerate_configs(grid), ValidationError);  // six B_p values
}

struct SmallSweep {
  Population pop = rlscale::testing::make_band_population(24, 8, 0.3, 0.6, 4, 8, 4, 7);
  SweepGrid grid;
  TrainConfig defaults;

  SmallSweep() {
    grid.problem_batch_values = {4};
    grid.group_size_values = {2, 4};
    grid.mode = SweepMode::kFixBp;
    grid.run_budget = 128;  // M = 16 and 8
    grid.base_seed = 5;
    defaults.eval_every = 1;
    defaults.lambda = 0.5;
  }
};

TEST(RunSweep, ProducesLogsMatchingManifest) {
  SmallSweep s;
  TempDir dir("sweep_basic");
  SweepManifest manifest = enumerate_configs(s.grid);
  run_sweep(manifest, s.pop, s.defaults, dir.path);
  for (const auto& e : manifest.entries) {
    EXPECT_EQ(e.status, RunStatus::kCompleted);
    EXPECT_TRUE(std::filesystem::exists(dir.path / e.path / "runlog.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir.path / e.path / "config.json"));
  }
  const SweepManifest reloaded = load_manifest(dir.path / "manifest.json");
  EXPECT_EQ(reloaded.entries.size(), manifest.entries.size());
}

TEST(RunSweep, CompletedRunsAreNeverRecomputed) {
  SmallSweep s;
  TempDir dir("sweep_idem");
  SweepManifest manifest = enumerate_configs(s.grid);
  run_sweep(manifest, s.pop, s.defaults, dir.path);
  const auto sentinel_path = dir.path / manifest.entries[0].path / "runlog.csv";
  { std::ofstream(sentinel_path, std::ios::trunc) << "SENTINEL"; }
  SweepManifest manifest2 = enumerate_configs(s.grid);
  run_sweep(manifest2, s.pop, s.defaults, dir.path);
  EXPECT_EQ(read_file(sentinel_path), "SENTINEL");
  for (const auto& e : manifest2.entries) EXPECT_EQ(e.status, RunStatus::kCompleted);
}

TEST(RunSweep, WorkerCountDoesNotChangeOutputs) {
  SmallSweep s;
  TempDir dir1("sweep_w1");
  TempDir dir3("sweep_w3");
  SweepManifest m1 = enumerate_configs(s.grid);
  run_sweep(m1, s.pop, s.defaults, dir1.path);
  SweepManifest m3 = enumerate_configs(s.grid);
  SweepOptions options;
  options.workers = 3;
  run_sweep(m3, s.pop, s.defaults, dir3.path, options);
  for (const auto& e : m1.entries) {
    EXPECT_EQ(read_file(dir1.path / e.path / "runlog.csv"), read_file(dir3.path / e.path / "runlog.csv"));
    EXPECT_EQ(read_file(dir1.path / e.path / "config.json"),
              read_file(dir3.path / e.path / "config.json"));
  }
  EXPECT_EQ(read_file(dir1.path / "manifest.json"), read_file(dir3.path / "manifest.json"));
}

TEST(RunSweep, FailedRunIsQuarantinedAndRetriable) {
  SmallSweep s;
  TempDir dir("sweep_fail");
  SweepManifest manifest = enumerate_configs(s.grid);
  std::filesystem::create_directories(dir.path);
  // A plain file where the first run's directory must go makes that run fail.
  { std::ofstream(dir.path / manifest.entries[0].path) << "blocker"; }
  run_sweep(manifest, s.pop, s.defaults, dir.path);
  EXPECT_EQ(manifest.entries[0].status, RunStatus::kFailed);
  EXPECT_FALSE(manifest.entries[0].error.empty());
  EXPECT_EQ(manifest.entries[1].status, RunStatus::kCompleted);

  std::filesystem::remove(dir.path / manifest.entries[0].path);
  SweepManifest retry = enumerate_configs(s.grid);
  SweepOptions options;
  options.retry_failed = true;
  run_sweep(retry, s.pop, s.defaults, dir.path, options);
  EXPECT_EQ(retry.entries[0].status, RunStatus::kCompleted);
}

TEST(RunSweep, MismatchedGridRejected) {
  SmallSweep s;
  TempDir dir("sweep_mismatch");
  SweepManifest manifest = enumerate_configs(s.grid);
  run_sweep(manifest, s.pop, s.defaults, dir.path);
  SweepGrid other = s.grid;
  other.run_budget = 256;
  SweepManifest manifest2 = enumerate_configs(other);
  EXPECT_THROW(run_sweep(manifest2, s.pop, s.defaults, dir.path), ValidationError);
}

TEST(Aggregate, DropsStepZeroAndSortsByCompute) {
  SmallSweep s;
  TempDir dir("sweep_agg");
  SweepManifest manifest = enumerate_configs(s.grid);
  run_sweep(manifest, s.pop, s.defaults, dir.path);
  const auto groups = aggregate(dir.path);
  ASSERT_EQ(groups.size(), 2u);  // n = 2 and n = 4
  const auto& n2 = groups.at({-1, 2});
  EXPECT_EQ(n2.size(), 16u);  // M=16 records, step 0 dropped
  for (std::size_t i = 0; i < n2.size(); ++i) {
    EXPECT_GT(n2[i].compute, 0.0);
    if (i > 0) EXPECT_GE(n2[i].compute, n2[i - 1].compute);
  }
  const auto by_bp = aggregate(dir.path, "val_avg", true);
  EXPECT_TRUE(by_bp.count({4, 2}) == 1);
}

TEST(Aggregate, SelectsRequestedColumnAndRejectsEmptyDir) {
  SmallSweep s;
  TempDir dir("sweep_col");
  SweepManifest manifest = enumerate_configs(s.grid);
  run_sweep(manifest, s.pop, s.defaults, dir.path);
  const auto best = aggregate(dir.path, "val_best4");
  const auto avg = aggregate(dir.path, "val_avg");
  const auto& b = best.at({-1, 4});
  const auto& a = avg.at({-1, 4});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_GE(b[i].reward, a[i].reward - 1e-12);

  TempDir empty("agg_empty");
  EXPECT_THROW(aggregate(empty.path), ValidationError);
}

}  // namespace
}  // namespace rlscale
