#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rlscale/experiment_config.hpp"
#include "rlscale/frontier.hpp"
#include "rlscale/io.hpp"
#include "rlscale/metrics.hpp"
#include "rlscale/sweep.hpp"
#include "rlscale/trainer.hpp"

namespace rlscale::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

inline std::string metric_column(const std::string& metric) {
  if (metric == "avg") return "val_avg";
  if (metric == "best4") return "val_best4";
  if (metric == "worst4") return "val_worst4";
  throw ValidationError("analyze: unknown metric '" + metric + "' (use avg|best4|worst4)");
}

// --- generate ---

struct GenerateArgs {
  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
};

inline void cmd_generate(const GenerateArgs& args, std::ostream& out) {
  ExperimentConfig cfg = ExperimentConfig::from_file(args.config_path);
  if (args.seed) cfg.population.seed = *args.seed;
  const Population pop = generate_population(cfg.population);
  save_population(pop, args.out_path);

  out << "population: " << pop.train.size() << " train / " << pop.val.size() << " val, K="
      << pop.config.num_arms << ", d=" << pop.config.feature_dim << ", clusters="
      << pop.config.cluster_count << "\n";
  out << "difficulty histogram (target_p0, train split):\n";
  constexpr int kBins = 10;
  std::vector<int> hist(kBins, 0);
  for (const Problem& p : pop.train) {
    hist[std::min(kBins - 1, static_cast<int>(p.target_p0 * kBins))] += 1;
  }
  for (int b = 0; b < kBins; ++b) {
    char line[64];
    std::snprintf(line, sizeof(line), "  [%.1f,%.1f%s %6d", b / 10.0, (b + 1) / 10.0,
                  b == kBins - 1 ? "]" : ")", hist[b]);
    out << line << "\n";
  }
  out << "wrote " << args.out_path << "\n";
}

// --- train ---

struct TrainArgs {
  std::string config_path;
  std::string out_dir;
  std::string population_path;  // optional: reuse a generated population file
  std::string run_id = "run";
  std::optional<int> problem_batch;
  std::optional<int> group_size;
  std::optional<int> total_steps;
  std::optional<std::uint64_t> seed;
};

inline void cmd_train(const TrainArgs& args, std::ostream& out) {
  ExperimentConfig cfg = ExperimentConfig::from_file(args.config_path);
  TrainConfig train_cfg = cfg.trainer;
  if (args.problem_batch) train_cfg.problem_batch = *args.problem_batch;
  if (args.group_size) train_cfg.group_size = *args.group_size;
  if (args.total_steps) train_cfg.total_steps = *args.total_steps;
  if (args.seed) train_cfg.seed = *args.seed;
  if (train_cfg.eval_every == 0) train_cfg.eval_every = 1;
  train_cfg.validate();

  const Population pop = args.population_path.empty() ? generate_population(cfg.population)
                                                      : load_population(args.population_path);
  RunLog log = run_training(pop, train_cfg, args.run_id);
  save_run(log, fs::path(args.out_dir) / args.run_id);
  out << "run " << args.run_id << ": " << log.records.size() << " records, final val_avg="
      << format_double(log.records.back().val_avg) << "\n";
  out << "wrote " << (fs::path(args.out_dir) / args.run_id / "runlog.csv").string() << "\n";
}

// --- sweep ---

struct SweepArgs {
  std::string config_path;
  std::string out_dir;
  std::string population_path;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<long long> fixed_batch;
  bool resume = false;
};

inline int default_workers() {
  if (const char* env = std::getenv("RLSCALE_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) return w;
  }
  return 1;
}

inline void cmd_sweep(const SweepArgs& args, std::ostream& out) {
  ExperimentConfig cfg = ExperimentConfig::from_file(args.config_path);
  if (args.seed) cfg.sweep.base_seed = *args.seed;
  if (args.mode) cfg.sweep.mode = sweep_mode_from_string(*args.mode);
  if (args.fixed_batch) cfg.sweep.fixed_batch = *args.fixed_batch;

  SweepManifest manifest = enumerate_configs(cfg.sweep);
  const Population pop = args.population_path.empty() ? generate_population(cfg.population)
                                                      : load_population(args.population_path);
  SweepOptions options;
  options.workers = args.workers ? *args.workers : default_workers();
  options.retry_failed = args.resume;
  run_sweep(manifest, pop, cfg.trainer, args.out_dir, options);

  int completed = 0, failed = 0, skipped = 0;
  for (const auto& e : manifest.entries) {
    completed += e.status == RunStatus::kCompleted ? 1 : 0;
    failed += e.status == RunStatus::kFailed ? 1 : 0;
    skipped += e.status == RunStatus::kSkipped ? 1 : 0;
  }
  out << "sweep: " << completed << " completed, " << failed << " failed, " << skipped
      << " skipped; manifest at " << (fs::path(args.out_dir) / "manifest.json").string() << "\n";
  if (failed > 0) throw std::runtime_error("sweep finished with failed runs (see manifest)");
}

// --- analyze ---

struct AnalyzeArgs {
  std::string runs_dir;
  std::string out_dir;
  std::string config_path;  // optional, for analysis defaults
  std::string metric = "avg";
  bool by_problem_batch = false;
  std::optional<double> bin_width;
  std::optional<int> grid_size;
  std::optional<int> window;
};

namespace detail {

struct AnalysisOutput {
  std::map<int, SigmoidFit> fits;
  std::vector<std::pair<int, std::string>> skipped;
  FrontierCurve curve;
  SigmoidFit nstar_fit;
  std::vector<int> swept_n;
};

inline AnalysisOutput analyze_group(const std::map<int, std::vector<RewardPoint>>& series,
                                    const AnalysisConfig& cfg) {
  AnalysisOutput out;
  double c_min = 0.0, c_max = 0.0;
  for (const auto& [n, points] : series) {
    for (const RewardPoint& p : points) {
      c_min = c_min == 0.0 ? p.compute : std::min(c_min, p.compute);
      c_max = std::max(c_max, p.compute);
    }
  }
  for (const auto& [n, points] : series) {
    try {
      const auto records = extract_record_breaking(points, cfg.bin_width);
      out.fits[n] = fit_monotone_sigmoid(records);
      out.swept_n.push_back(n);
    } catch (const std::exception& e) {
      out.skipped.emplace_back(n, e.what());
    }
  }
  require(!out.fits.empty(), "analyze: no curve had enough data to fit");
  const std::vector<double> grid = log_spaced_grid(c_min, c_max, cfg.grid_size);
  out.curve = frontier_envelope(out.fits, grid);
  out.curve.smoothed_log2_nstar = smooth_nstar(out.curve, cfg.smooth_window);
  const double log2_n_max = std::log2(static_cast<double>(out.fits.rbegin()->first));
  out.nstar_fit = fit_nstar_sigmoid(grid, out.curve.smoothed_log2_nstar, log2_n_max);
  return out;
}

inline json sigmoid_fit_to_json(const SigmoidFit& f) {
  return json{{"lo", f.lo},
              {"hi", f.hi},
              {"k", f.k},
              {"c0", f.midpoint},
              {"rmse", f.rmse},
              {"compute_min", f.compute_min},
              {"compute_max", f.compute_max},
              {"low_confidence", f.low_confidence},
              {"num_points", f.num_points}};
}

inline SigmoidFit sigmoid_fit_from_json(const json& j) {
  SigmoidFit f;
  f.lo = j.at("lo").get<double>();
  f.hi = j.at("hi").get<double>();
  f.k = j.at("k").get<double>();
  f.midpoint = j.at("c0").get<double>();
  f.rmse = j.at("rmse").get<double>();
  f.compute_min = j.at("compute_min").get<double>();
  f.compute_max = j.at("compute_max").get<double>();
  f.low_confidence = j.at("low_confidence").get<bool>();
  f.num_points = j.at("num_points").get<int>();
  return f;
}

// Writes frontier/fits/nstar/summary files for one analysis group.
inline void write_analysis(const AnalysisOutput& analysis, const AnalysisConfig& cfg,
                           const std::string& metric, const std::string& suffix,
                           const fs::path& out_dir,
                           const std::map<int, std::vector<RewardPoint>>& zero_pass_series) {
  fs::create_directories(out_dir);

  {
    std::ostringstream csv;
    csv << "compute,envelope_reward,frontier_n,smoothed_log2_nstar\n";
    for (std::size_t i = 0; i < analysis.curve.grid.size(); ++i) {
      csv << format_double(analysis.curve.grid[i]) << ','
          << format_double(analysis.curve.envelope_reward[i]) << ',' << analysis.curve.frontier_n[i]
          << ',' << format_double(analysis.curve.smoothed_log2_nstar[i]) << "\n";
    }
    write_text_file_atomic(out_dir / ("frontier_" + metric + suffix + ".csv"), csv.str());
  }

  {
    std::ostringstream csv;
    csv << "compute,recommended_n\n";
    for (double budget : analysis.curve.grid) {
      csv << format_double(budget) << ',' << recommend_n(analysis.nstar_fit, budget, analysis.swept_n)
          << "\n";
    }
    write_text_file_atomic(out_dir / ("nstar_" + metric + suffix + ".csv"), csv.str());
  }

  json per_n = json::array();
  for (const auto& [n, fit] : analysis.fits) {
    json entry = sigmoid_fit_to_json(fit);
    entry["n"] = n;
    per_n.push_back(std::move(entry));
  }
  json skipped = json::array();
  for (const auto& [n, reason] : analysis.skipped) {
    skipped.push_back({{"n", n}, {"reason", reason}});
  }
  const json fits_doc{{"metric", metric},
                      {"bin_width", cfg.bin_width},
                      {"grid_size", cfg.grid_size},
                      {"smooth_window", cfg.smooth_window},
                      {"per_n", per_n},
                      {"skipped", skipped},
                      {"nstar_fit", sigmoid_fit_to_json(analysis.nstar_fit)}};
  write_text_file_atomic(out_dir / ("fits_" + metric + suffix + ".json"), fits_doc.dump(1));

  // Summary: per-n saturation, fitted value at the largest budget, the
  // argmax-n there, and zero-pass fractions at the largest matched compute.
  const double c_max = analysis.curve.grid.back();
  json summary_per_n = json::array();
  int argmax_n = 0;
  double argmax_value = -1.0;
  for (const auto& [n, fit] : analysis.fits) {
    const double v = fit.predict(c_max);
    if (v > argmax_value + 1e-15) {
      argmax_value = v;
      argmax_n = n;
    }
    summary_per_n.push_back({{"n", n}, {"saturation_hi", fit.hi}, {"value_at_cmax", v}});
  }
  double matched = 0.0;
  bool have_matched = !zero_pass_series.empty();
  for (const auto& [n, points] : zero_pass_series) {
    if (points.empty()) {
      have_matched = false;
      break;
    }
    const double run_max = points.back().compute;
    matched = matched == 0.0 ? run_max : std::min(matched, run_max);
  }
  json zero_pass = json::array();
  if (have_matched) {
    for (const auto& [n, points] : zero_pass_series) {
      double value = points.front().reward;
      for (const RewardPoint& p : points) {
        if (p.compute <= matched) value = p.reward;
      }
      zero_pass.push_back({{"n", n}, {"zero_pass_frac", value}});
    }
  }
  const json summary{{"metric", metric},
                     {"compute_max", c_max},
                     {"argmax_n", argmax_n},
                     {"argmax_value", argmax_value},
                     {"per_n", summary_per_n},
                     {"matched_compute", matched},
                     {"zero_pass_at_matched", zero_pass}};
  write_text_file_atomic(out_dir / ("summary_" + metric + suffix + ".json"), summary.dump(1));
}

}  // namespace detail

inline void cmd_analyze(const AnalyzeArgs& args, std::ostream& out) {
  AnalysisConfig cfg;
  if (!args.config_path.empty()) cfg = ExperimentConfig::from_file(args.config_path).analysis;
  if (args.bin_width) cfg.bin_width = *args.bin_width;
  if (args.grid_size) cfg.grid_size = *args.grid_size;
  if (args.window) cfg.smooth_window = *args.window;
  cfg.validate();

  const std::string column = metric_column(args.metric);
  const auto groups = aggregate(args.runs_dir, column, args.by_problem_batch);
  const auto zero_groups = aggregate(args.runs_dir, "zero_pass_frac", args.by_problem_batch);

  // Partition by B_p (a single partition with key -1 when not grouping).
  std::map<int, std::map<int, std::vector<RewardPoint>>> partitions;
  std::map<int, std::map<int, std::vector<RewardPoint>>> zero_partitions;
  for (const auto& [key, points] : groups) partitions[key.first][key.second] = points;
  for (const auto& [key, points] : zero_groups) zero_partitions[key.first][key.second] = points;

  for (const auto& [bp, series] : partitions) {
    const std::string suffix = bp < 0 ? "" : "_bp" + std::to_string(bp);
    const detail::AnalysisOutput analysis = detail::analyze_group(series, cfg);
    detail::write_analysis(analysis, cfg, args.metric, suffix, args.out_dir, zero_partitions[bp]);
    out << "analysis[" << args.metric << suffix << "]: " << analysis.fits.size() << " fitted curves";
    if (!analysis.skipped.empty()) out << ", " << analysis.skipped.size() << " skipped";
    out << ", n*(C_max) fit hi=" << format_double(analysis.nstar_fit.hi) << " rmse="
        << format_double(analysis.nstar_fit.rmse) << "\n";
  }
  out << "wrote analysis to " << args.out_dir << "\n";
}

// --- report ---

struct ReportArgs {
  std::string analysis_dir;
  std::string out_path;  // optional file copy of the report
};

inline void cmd_report(const ReportArgs& args, std::ostream& console) {
  std::vector<fs::path> summaries;
  for (const auto& entry : fs::directory_iterator(args.analysis_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("summary_", 0) == 0 && entry.path().extension() == ".json") {
      summaries.push_back(entry.path());
    }
  }
  std::sort(summaries.begin(), summaries.end());
  require(!summaries.empty(), "report: no analysis summaries under " + args.analysis_dir);

  std::ostringstream out;
  std::vector<std::pair<std::string, int>> argmax_rows;
  for (const auto& path : summaries) {
    const json summary = json::parse(read_text_file(path));
    const std::string metric = summary.at("metric").get<std::string>();
    std::string label = path.filename().string();
    label = label.substr(std::string("summary_").size());
    label = label.substr(0, label.size() - std::string(".json").size());

    out << "== analysis '" << label << "' ==\n";
    out << "per-n saturation (fit hi) and fitted value at C_max="
        << format_double(summary.at("compute_max").get<double>()) << ":\n";
    out << "      n   saturation   value_at_cmax\n";
    for (const auto& row : summary.at("per_n")) {
      char line[96];
      std::snprintf(line, sizeof(line), "  %5d   %10.4f   %13.4f", row.at("n").get<int>(),
                    row.at("saturation_hi").get<double>(), row.at("value_at_cmax").get<double>());
      out << line << "\n";
    }
    argmax_rows.emplace_back(label, summary.at("argmax_n").get<int>());

    const auto& zero = summary.at("zero_pass_at_matched");
    if (!zero.empty()) {
      out << "zero-pass fraction at matched compute "
          << format_double(summary.at("matched_compute").get<double>()) << ":\n";
      for (const auto& row : zero) {
        char line[64];
        std::snprintf(line, sizeof(line), "  n=%-5d %.4f", row.at("n").get<int>(),
                      row.at("zero_pass_frac").get<double>());
        out << line << "\n";
      }
    }

    const fs::path nstar_path = fs::path(args.analysis_dir) / ("nstar_" + label + ".csv");
    if (fs::exists(nstar_path)) {
      const CsvTable table = read_csv(nstar_path.string());
      const int col_c = table.column("compute");
      const int col_n = table.column("recommended_n");
      out << "recommended n*(C):\n";
      const std::size_t stride = std::max<std::size_t>(1, table.rows.size() / 8);
      for (std::size_t row = 0; row < table.rows.size(); row += stride) {
        char line[64];
        std::snprintf(line, sizeof(line), "  C=%-12.4g n*=%lld", table.value(row, col_c),
                      table.ivalue(row, col_n));
        out << line << "\n";
      }
    }
    out << "\n";
  }

  out << "== argmax-n per metric (at largest budget) ==\n";
  for (const auto& [label, n] : argmax_rows) {
    out << "  " << label << ": n=" << n << "\n";
  }

  console << out.str();
  if (!args.out_path.empty()) write_text_file_atomic(args.out_path, out.str());
}

// --- entry point ---

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Compute-allocation laboratory for on-policy RL on synthetic bandit populations"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* cmd_gen = app.add_subcommand("generate", "Generate a problem population file");
  cmd_gen->add_option("--config", gen.config_path, "Experiment config file")->required();
  cmd_gen->add_option("--out", gen.out_path, "Output population file (JSON)")->required();
  std::uint64_t gen_seed = 0;
  auto* gen_seed_opt = cmd_gen->add_option("--seed", gen_seed, "Override population seed");

  TrainArgs train;
  auto* cmd_tr = app.add_subcommand("train", "Run one training configuration");
  cmd_tr->add_option("--config", train.config_path, "Experiment config file")->required();
  cmd_tr->add_option("--out", train.out_dir, "Output directory")->required();
  cmd_tr->add_option("--population", train.population_path, "Reuse a population file");
  cmd_tr->add_option("--run-id", train.run_id, "Run identifier (default 'run')");
  int train_bp = 0, train_n = 0, train_m = 0;
  std::uint64_t train_seed = 0;
  auto* tr_bp = cmd_tr->add_option("--B_p", train_bp, "Problems per step");
  auto* tr_n = cmd_tr->add_option("--n", train_n, "Rollouts per problem");
  auto* tr_m = cmd_tr->add_option("--M", train_m, "Update steps");
  auto* tr_seed = cmd_tr->add_option("--seed", train_seed, "Trainer seed");

  SweepArgs sweep;
  auto* cmd_sw = app.add_subcommand("sweep", "Enumerate and execute a configuration sweep");
  cmd_sw->add_option("--config", sweep.config_path, "Experiment config file")->required();
  cmd_sw->add_option("--out", sweep.out_dir, "Sweep output directory")->required();
  cmd_sw->add_option("--population", sweep.population_path, "Reuse a population file");
  int sweep_workers = 0;
  std::uint64_t sweep_seed = 0;
  std::string sweep_mode;
  long long sweep_fixed_b = 0;
  auto* sw_workers = cmd_sw->add_option("--workers", sweep_workers, "Parallel runs (env RLSCALE_WORKERS)");
  auto* sw_seed = cmd_sw->add_option("--seed", sweep_seed, "Override sweep base seed");
  auto* sw_mode = cmd_sw->add_option("--mode", sweep_mode, "Sweep mode: fix_Bp|fix_B|joint");
  auto* sw_fixed = cmd_sw->add_option("--fixed-B", sweep_fixed_b, "Total batch for fix_B mode");
  cmd_sw->add_flag("--resume", sweep.resume, "Retry failed runs of an interrupted sweep");

  AnalyzeArgs analyze;
  auto* cmd_an = app.add_subcommand("analyze", "Frontier analysis over a run directory");
  cmd_an->add_option("--runs", analyze.runs_dir, "Directory of run logs")->required();
  cmd_an->add_option("--out", analyze.out_dir, "Analysis output directory")->required();
  cmd_an->add_option("--config", analyze.config_path, "Experiment config for analysis defaults");
  cmd_an->add_option("--emit", analyze.metric, "Metric: avg|best4|worst4 (default avg)");
  cmd_an->add_flag("--by-bp", analyze.by_problem_batch, "Analyze each B_p group separately");
  double an_bin = 0.0;
  int an_grid = 0, an_window = 0;
  auto* an_bin_opt = cmd_an->add_option("--bin", an_bin, "Record-breaking reward bin width");
  auto* an_grid_opt = cmd_an->add_option("--grid", an_grid, "Budget grid size");
  auto* an_window_opt = cmd_an->add_option("--window", an_window, "n* smoothing window (odd)");

  ReportArgs report;
  auto* cmd_re = app.add_subcommand("report", "Summarize an analysis directory");
  cmd_re->add_option("--analysis", report.analysis_dir, "Analysis directory")->required();
  cmd_re->add_option("--out", report.out_path, "Also write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (cmd_gen->parsed()) {
      if (gen_seed_opt->count() > 0) gen.seed = gen_seed;
      cmd_generate(gen, out);
    } else if (cmd_tr->parsed()) {
      if (tr_bp->count() > 0) train.problem_batch = train_bp;
      if (tr_n->count() > 0) train.group_size = train_n;
      if (tr_m->count() > 0) train.total_steps = train_m;
      if (tr_seed->count() > 0) train.seed = train_seed;
      cmd_train(train, out);
    } else if (cmd_sw->parsed()) {
      if (sw_workers->count() > 0) sweep.workers = sweep_workers;
      if (sw_seed->count() > 0) sweep.seed = sweep_seed;
      if (sw_mode->count() > 0) sweep.mode = sweep_mode;
      if (sw_fixed->count() > 0) sweep.fixed_batch = sweep_fixed_b;
      cmd_sweep(sweep, out);
    } else if (cmd_an->parsed()) {
      if (an_bin_opt->count() > 0) analyze.bin_width = an_bin;
      if (an_grid_opt->count() > 0) analyze.grid_size = an_grid;
      if (an_window_opt->count() > 0) analyze.window = an_window;
      cmd_analyze(analyze, out);
    } else if (cmd_re->parsed()) {
      cmd_report(report, out);
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.push_back("rlscale");
  for (const auto& a : args) argv_storage.push_back(a);
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace rlscale::cli
