// taurnn: data generation, training, ablation sweeps, seed spreads and the
// verification batteries.
//
// Exit codes: 0 success, 1 runtime failure, 2 config or usage error,
// 3 verification failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "taurnn/config.hpp"
#include "taurnn/dde.hpp"
#include "taurnn/manifest.hpp"
#include "taurnn/svg.hpp"
#include "taurnn/training.hpp"
#include "taurnn/verify.hpp"

namespace fs = std::filesystem;
using namespace taurnn;

namespace {

enum Exit { kOk = 0, kRuntime = 1, kConfig = 2, kVerify = 3 };

struct Outputs {
  fs::path dir;
  std::vector<std::string> written;

  void write(const std::string& name, const std::string& content) {
    write_file_atomic(dir / name, content);
    written.push_back((dir / name).string());
  }
};

RunManifest start_manifest(int argc, char** argv, std::uint64_t seed,
                           const std::string& config_text) {
  RunManifest m;
  m.command_line.assign(argv, argv + argc);
  m.config_hash = hex64(fnv1a(config_text));
  m.seed = seed;
  m.started = utc_timestamp();
  return m;
}

void finish_manifest(RunManifest m, Outputs& out, const fs::path& path) {
  m.outputs = out.written;
  m.finished = utc_timestamp();
  write_manifest(path, m);
}

std::string default_out_dir(const std::string& command, const std::string& config_path) {
  return command + "_" + fs::path(config_path).stem().string();
}

std::string epoch_csv(const std::vector<EpochRecord>& recs) {
  std::ostringstream os;
  write_epoch_csv(os, recs);
  return os.str();
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& task, const std::string& out_path, std::uint64_t seed,
                 std::size_t n, std::size_t N, int argc, char** argv) {
  std::ostringstream data;
  if (task == "adding") {
    if (N < 2) {
      std::cerr << "error: --N must be >= 2 for the adding task\n";
      return kConfig;
    }
    write_adding_csv(data, gen_adding_task(N, n, seed));
  } else if (task == "mackey_glass") {
    dde::write_series_csv(data, dde::gen_mackey_glass(seed, n));
  } else if (task == "enso") {
    dde::write_series_csv(data, dde::gen_enso(seed, n));
  } else {
    std::cerr << "error: unknown task '" << task
              << "' (expected adding, mackey_glass or enso)\n";
    return kConfig;
  }
  const std::string config_text = "task = " + task + "\nseed = " + std::to_string(seed) +
                                  "\nn = " + std::to_string(n) +
                                  (task == "adding" ? "\nN = " + std::to_string(N) : "") + "\n";
  RunManifest m = start_manifest(argc, argv, seed, config_text);
  const fs::path path(out_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  Outputs out{path.parent_path(), {}};
  write_file_atomic(path, data.str());
  out.written.push_back(path.string());
  finish_manifest(m, out, fs::path(out_path + ".manifest.json"));
  std::cout << "wrote " << n << " samples to " << out_path << "\n";
  return kOk;
}

int cmd_train(const RunConfig& rc, const std::string& dir, bool svg, int argc, char** argv) {
  RunManifest m = start_manifest(argc, argv, rc.train.seed, canonical_config(rc));
  const TaskData data = load_task(rc.train);
  const std::size_t every = std::max<std::size_t>(1, rc.train.epochs / 20);
  const TrainResult r = train(rc.train, data, [&](const EpochRecord& e) {
    if (e.epoch % every == 0 || e.epoch == rc.train.epochs) {
      std::fprintf(stderr, "epoch %zu/%zu  train MSE %.6g  test MSE %.6g\n", e.epoch,
                   rc.train.epochs, e.train_loss, e.test_loss);
    }
  });
  fs::create_directories(dir);
  Outputs out{dir, {}};
  const std::string csv = epoch_csv(r.epochs);
  out.write("epochs.csv", csv);
  {
    std::ostringstream params;
    write_params(params, r.params, rc.train.variant.kind);
    out.write("params.bin", params.str());
  }
  if (svg) out.write("epochs.svg", svg::epoch_chart(csv, "train/test RMSE"));
  finish_manifest(m, out, fs::path(dir) / "manifest.json");

  std::printf("task %s, cell %s, d=%zu, tau=%zu, params %zu\n",
              std::string(to_string(rc.train.task)).c_str(),
              ablation_name(rc.train.variant, rc.train.variant.delay_m).c_str(), rc.train.d,
              rc.train.variant.delay_m, r.param_count);
  std::printf("initial train MSE %.6g, final train MSE %.6g\n", r.initial_train_loss,
              r.final_train_loss);
  std::printf("final test MSE %.6g\n", r.final_test_loss);
  if (rc.train.task != TaskKind::Adding) {
    std::printf("persistence baseline test MSE %.6g\n", persistence_mse(data.test));
  } else {
    std::printf("no-learning baseline test MSE %.6g\n", 1.0 / 6.0);
  }
  std::printf("outputs in %s\n", dir.c_str());
  return kOk;
}

int cmd_ablate(const RunConfig& rc, const std::string& dir, bool svg, int argc, char** argv) {
  RunManifest m = start_manifest(argc, argv, rc.train.seed, canonical_config(rc));
  const TaskData data = load_task(rc.train);
  const auto rows = ablate(rc.train, rc.grid, data);
  fs::create_directories(dir);
  Outputs out{dir, {}};
  std::ostringstream results;
  write_results_csv(results, rows);
  out.write("results.csv", results.str());
  for (const auto& row : rows) out.write("epochs_" + row.name + ".csv", epoch_csv(row.epochs));
  if (svg) {
    std::vector<svg::Series> curves;
    for (const auto& row : rows) {
      auto s = svg::series_from_csv(epoch_csv(row.epochs), {"test_rmse"});
      s[0].name = row.name;
      curves.push_back(std::move(s[0]));
    }
    out.write("ablation.svg", svg::line_chart(curves, {"test RMSE", "epoch", "RMSE", true}));
    std::vector<std::size_t> taus;
    for (const auto& row : rows)
      if (row.variant.kind == CellKind::TauGru) taus.push_back(row.variant.delay_m);
    std::sort(taus.begin(), taus.end());
    if (std::unique(taus.begin(), taus.end()) - taus.begin() > 1) {
      // test MSE against tau for the rows that differ from the base only in tau
      svg::Series sweep{"test MSE", {}, {}};
      for (const auto& row : rows) {
        const CellVariant& v = row.variant;
        const CellVariant& b = rc.train.variant;
        if (v.kind == CellKind::TauGru && v.alpha == b.alpha && v.beta == b.beta &&
            v.use_weighting_a == b.use_weighting_a) {
          sweep.xs.push_back(static_cast<double>(v.delay_m));
          sweep.ys.push_back(row.test_metric);
        }
      }
      out.write("tau_sweep.svg",
                svg::line_chart({sweep}, {"test MSE vs delay", "tau", "MSE", true}));
    }
  }
  finish_manifest(m, out, fs::path(dir) / "manifest.json");
  std::printf("%-36s %12s %8s\n", "name", "test MSE", "params");
  for (const auto& row : rows)
    std::printf("%-36s %12.6g %8zu\n", row.name.c_str(), row.test_metric, row.param_count);
  std::printf("outputs in %s\n", dir.c_str());
  return kOk;
}

int cmd_seed_spread(const RunConfig& rc, const std::string& dir, bool svg, int argc,
                    char** argv) {
  RunManifest m = start_manifest(argc, argv, rc.train.seed, canonical_config(rc));
  const TaskData data = load_task(rc.train);
  const SeedSpread s = evaluate_seed_spread(rc.train, data, rc.n_seeds);
  fs::create_directories(dir);
  Outputs out{dir, {}};
  std::ostringstream seeds, summary;
  write_seed_spread_csv(seeds, s);
  write_seed_summary_csv(summary, s);
  out.write("seeds.csv", seeds.str());
  out.write("summary.csv", summary.str());
  for (std::size_t i = 0; i < s.seeds.size(); ++i)
    out.write("epochs_seed" + std::to_string(s.seeds[i]) + ".csv", epoch_csv(s.curves[i]));
  if (svg) {
    std::vector<svg::Series> curves;
    for (std::size_t i = 0; i < s.seeds.size(); ++i) {
      auto c = svg::series_from_csv(epoch_csv(s.curves[i]), {"test_rmse"});
      c[0].name = "seed " + std::to_string(s.seeds[i]);
      curves.push_back(std::move(c[0]));
    }
    out.write("seeds.svg", svg::line_chart(curves, {"test RMSE per seed", "epoch", "RMSE", true}));
  }
  finish_manifest(m, out, fs::path(dir) / "manifest.json");
  std::printf("seeds %llu..%llu: max %.6g  min %.6g  mean %.6g  std %.6g  median %.6g\n",
              static_cast<unsigned long long>(s.seeds.front()),
              static_cast<unsigned long long>(s.seeds.back()), s.max, s.min, s.mean, s.std,
              s.median);
  std::printf("outputs in %s\n", dir.c_str());
  return kOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  if (!verify::suites().count(suite)) {
    std::cerr << "error: unknown suite '" << suite << "'; expected one of:";
    for (const auto& [name, _] : verify::suites()) std::cerr << ' ' << name;
    std::cerr << "\n";
    return kConfig;
  }
  const auto results = verify::run_suite(suite, seed);
  verify::print_table(std::cout, results);
  bool ok = true;
  for (const auto& r : results) ok = ok && r.passed;
  std::cout << (ok ? "all batteries passed\n" : "verification FAILED\n");
  return ok ? kOk : kVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delay-feedback recurrent networks: data, training and verification"};
  app.require_subcommand(1);

  std::string task, out_path;
  std::uint64_t seed = 0;
  std::size_t n = 32, N = 200;
  auto* gen = app.add_subcommand("gen-data", "Generate a dataset file");
  gen->add_option("task", task, "adding | mackey_glass | enso")->required();
  gen->add_option("--out", out_path, "Output file")->required();
  gen->add_option("--seed", seed, "Dataset seed");
  gen->add_option("--n", n, "Number of samples");
  gen->add_option("--N", N, "Sequence length (adding task)");

  std::string config_path, out_dir;
  bool svg = false;
  auto add_run = [&](const char* name, const char* help) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("config", config_path, "Config file (key = value)")->required();
    sc->add_option("--out-dir", out_dir, "Output directory");
    sc->add_flag("--svg", svg, "Also render SVG line charts");
    return sc;
  };
  auto* train_cmd = add_run("train", "Train one configuration");
  auto* ablate_cmd = add_run("ablate", "Train every configuration of the grid");
  auto* spread_cmd = add_run("seed-spread", "Train with n_seeds consecutive seeds");

  std::string suite = "all";
  std::uint64_t verify_seed = 0;
  auto* verify_cmd = app.add_subcommand("verify", "Run verification batteries");
  verify_cmd->add_option("suite", suite,
                         "all | gradients | prop1 | bounds | lipschitz | convergence | "
                         "determinism");
  verify_cmd->add_option("--seed", verify_seed, "Seed for the randomized batteries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(task, out_path, seed, n, N, argc, argv);
    if (verify_cmd->parsed()) return cmd_verify(suite, verify_seed);

    const RunConfig rc = parse_config_file(config_path);
    if (train_cmd->parsed()) {
      return cmd_train(rc, out_dir.empty() ? default_out_dir("train", config_path) : out_dir,
                       svg, argc, argv);
    }
    if (ablate_cmd->parsed()) {
      return cmd_ablate(rc, out_dir.empty() ? default_out_dir("ablate", config_path) : out_dir,
                        svg, argc, argv);
    }
    if (spread_cmd->parsed()) {
      return cmd_seed_spread(
          rc, out_dir.empty() ? default_out_dir("seed_spread", config_path) : out_dir, svg,
          argc, argv);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}
