#pragma once

// Supervised datasets, Adam, and the training / ablation / seed-spread loops.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taurnn/bptt.hpp"
#include "taurnn/dde.hpp"
#include "taurnn/delay_cells.hpp"
#include "taurnn/numerics.hpp"
#include "taurnn/parallel.hpp"
#include "taurnn/rng.hpp"

namespace taurnn {

// ---------------------------------------------------------------------------
// Datasets.

/// One sequence; targets[k] is compared against the output at target_steps[k].
struct Sample {
  std::vector<Vector> inputs;
  std::vector<std::size_t> target_steps;
  std::vector<Vector> targets;
};

struct SupervisedDataset {
  std::size_t p = 0, q = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
};

struct AddingSample {
  std::vector<double> u, v;
  double target = 0.0;
};

/// u ~ U(0,1)^N; v has a one at i in [0, floor(N/2) - 1] and at j in
/// [ceil(N/2) - 1, N - 1] (j redrawn on the rare collision i == j);
/// target = sum(u * v).
inline std::vector<AddingSample> gen_adding_task(std::size_t N,
                                                 std::size_t n_samples,
                                                 std::uint64_t seed) {
  if (N < 2) throw std::invalid_argument("gen_adding_task: N must be >= 2");
  std::vector<AddingSample> out(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    SplitMix64 rng = SplitMix64::stream(seed, s);
    AddingSample& a = out[s];
    a.u.resize(N);
    for (double& x : a.u) x = rng.uniform();
    a.v.assign(N, 0.0);
    const std::size_t i = rng.uniform_int(0, N / 2 - 1);
    std::size_t j;
    do {
      j = rng.uniform_int((N + 1) / 2 - 1, N - 1);
    } while (j == i);
    a.v[i] = 1.0;
    a.v[j] = 1.0;
    a.target = a.u[i] + a.u[j];
  }
  return out;
}

/// x_n = (u_n, v_n); scalar target read at the final step only.
inline SupervisedDataset adding_to_supervised(const std::vector<AddingSample>& data) {
  SupervisedDataset ds{2, 1, {}};
  ds.samples.reserve(data.size());
  for (const AddingSample& a : data) {
    Sample s;
    s.inputs.reserve(a.u.size());
    for (std::size_t n = 0; n < a.u.size(); ++n) s.inputs.push_back(Vector{a.u[n], a.v[n]});
    s.target_steps = {a.u.size() - 1};
    s.targets = {Vector{a.target}};
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

/// One-step-ahead prediction: inputs s_0..s_{L-2}, targets s_1..s_{L-1}.
inline SupervisedDataset make_prediction_task(
    const std::vector<std::vector<double>>& series) {
  SupervisedDataset ds{1, 1, {}};
  for (const auto& row : series) {
    if (row.size() < 2) {
      throw std::invalid_argument("make_prediction_task: series length must be >= 2");
    }
    Sample s;
    const std::size_t L = row.size() - 1;
    s.inputs.reserve(L);
    s.targets.reserve(L);
    s.target_steps.resize(L);
    for (std::size_t n = 0; n < L; ++n) {
      s.inputs.push_back(Vector{row[n]});
      s.targets.push_back(Vector{row[n + 1]});
      s.target_steps[n] = n;
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline SupervisedDataset make_prediction_task(const dde::SeriesDataset& series) {
  return make_prediction_task(series.series);
}

/// MSE of predicting every target by the current input (y_n = s_n).
inline double persistence_mse(const SupervisedDataset& ds) {
  double s = 0.0;
  std::size_t count = 0;
  for (const Sample& smp : ds.samples)
    for (std::size_t k = 0; k < smp.targets.size(); ++k)
      for (std::size_t i = 0; i < ds.q; ++i, ++count) {
        const double e = smp.inputs[smp.target_steps[k]][i] - smp.targets[k][i];
        s += e * e;
      }
  return count ? s / static_cast<double>(count) : 0.0;
}

// ---------------------------------------------------------------------------
// Configuration.

enum class TaskKind { Adding, MackeyGlass, Enso };

inline std::string_view to_string(TaskKind t) {
  switch (t) {
    case TaskKind::Adding: return "adding";
    case TaskKind::MackeyGlass: return "mackey_glass";
    case TaskKind::Enso: return "enso";
  }
  return "?";
}

inline TaskKind task_kind_from_string(std::string_view s) {
  if (s == "adding") return TaskKind::Adding;
  if (s == "mackey_glass") return TaskKind::MackeyGlass;
  if (s == "enso") return TaskKind::Enso;
  throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}

struct TrainConfig {
  CellVariant variant;
  std::size_t d = 16;
  double lr = 0.01;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;       // initialization and shuffling
  std::uint64_t data_seed = 0;  // dataset generation
  std::size_t batch_size = 0;   // 0: full batch
  TaskKind task = TaskKind::MackeyGlass;
  std::size_t N = 200;          // adding sequence length
  std::size_t n_train = 32;
  std::size_t n_test = 32;
  std::optional<double> grad_clip;

  std::size_t p() const { return task == TaskKind::Adding ? 2 : 1; }
  std::size_t q() const { return 1; }

  void validate() const {
    variant.validate();
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be > 0");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (d < 1) throw std::invalid_argument("config: d must be >= 1");
    if (n_train < 1 || n_test < 1) {
      throw std::invalid_argument("config: n_train and n_test must be >= 1");
    }
    if (task == TaskKind::Adding && N < 2) {
      throw std::invalid_argument("config: N must be >= 2 for the adding task");
    }
    if (grad_clip && !(*grad_clip > 0.0)) {
      throw std::invalid_argument("config: grad_clip must be > 0");
    }
  }
};

struct TaskData {
  SupervisedDataset train, test;
};

/// Generates n_train + n_test samples from data_seed; the first n_train
/// form the training split.
inline TaskData load_task(const TrainConfig& cfg) {
  const std::size_t total = cfg.n_train + cfg.n_test;
  SupervisedDataset all;
  switch (cfg.task) {
    case TaskKind::Adding:
      all = adding_to_supervised(gen_adding_task(cfg.N, total, cfg.data_seed));
      break;
    case TaskKind::MackeyGlass:
      all = make_prediction_task(dde::gen_mackey_glass(cfg.data_seed, total));
      break;
    case TaskKind::Enso:
      all = make_prediction_task(dde::gen_enso(cfg.data_seed, total));
      break;
  }
  TaskData td;
  td.train.p = td.test.p = all.p;
  td.train.q = td.test.q = all.q;
  auto mid = all.samples.begin() + static_cast<std::ptrdiff_t>(cfg.n_train);
  td.train.samples.assign(std::make_move_iterator(all.samples.begin()),
                          std::make_move_iterator(mid));
  td.test.samples.assign(std::make_move_iterator(mid),
                         std::make_move_iterator(all.samples.end()));
  return td;
}

// ---------------------------------------------------------------------------
// Loss and gradients.

namespace detail {

inline std::size_t target_count(const SupervisedDataset& ds,
                                std::span<const std::size_t> idx) {
  std::size_t n = 0;
  for (std::size_t i : idx) n += ds.samples[i].targets.size() * ds.q;
  return n;
}

/// Sum of squared errors of one sample and, if requested, dLoss/dy per step
/// for Loss = SSE / norm.
inline double sample_sse(const std::vector<Vector>& ys, const Sample& s,
                         double norm, std::vector<Vector>* grads) {
  double sse = 0.0;
  if (grads) grads->assign(ys.size(), Vector(ys.front().size()));
  for (std::size_t k = 0; k < s.targets.size(); ++k) {
    const Vector& y = ys[s.target_steps[k]];
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double e = y[i] - s.targets[k][i];
      sse += e * e;
      if (grads) (*grads)[s.target_steps[k]][i] += 2.0 * e / norm;
    }
  }
  return sse;
}

inline void add_into(ParamGrads& acc, const ParamGrads& g) {
  std::vector<std::span<double>> a;
  acc.for_each_block([&](std::string_view, std::span<double> s) { a.push_back(s); });
  std::size_t b = 0;
  g.for_each_block([&](std::string_view, std::span<const double> s) {
    for (std::size_t i = 0; i < s.size(); ++i) a[b][i] += s[i];
    ++b;
  });
}

}  // namespace detail

/// MSE over every target of the dataset.
inline double evaluate_mse(const CellParams& params, const CellVariant& variant,
                           const SupervisedDataset& ds) {
  std::vector<double> sse(ds.size());
  parallel_for(ds.size(), [&](std::size_t i) {
    const Sample& s = ds.samples[i];
    sse[i] = detail::sample_sse(predict(params, variant, s.inputs), s, 1.0, nullptr);
  });
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  const double count = static_cast<double>(detail::target_count(ds, all));
  return std::accumulate(sse.begin(), sse.end(), 0.0) / count;
}

struct BatchGradient {
  double loss = 0.0;  // MSE over the batch targets
  ParamGrads grads;
};

/// Loss and gradient of the batch MSE. Per-sample gradients are reduced in
/// index order, so the result does not depend on the worker count.
inline BatchGradient batch_gradient(const CellParams& params,
                                    const CellVariant& variant,
                                    const SupervisedDataset& ds,
                                    std::span<const std::size_t> idx) {
  const double norm = static_cast<double>(detail::target_count(ds, idx));
  std::vector<ParamGrads> per(idx.size());
  std::vector<double> sse(idx.size());
  parallel_for(idx.size(), [&](std::size_t b) {
    const Sample& s = ds.samples[idx[b]];
    const SequenceRun run = run_sequence(params, variant, s.inputs);
    std::vector<Vector> lg;
    sse[b] = detail::sample_sse(run.ys, s, norm, &lg);
    per[b] = backward(run.tape, params, lg);
  });
  BatchGradient out{0.0, CellParams::zeros(params.d, params.p, params.q)};
  for (std::size_t b = 0; b < idx.size(); ++b) {
    detail::add_into(out.grads, per[b]);
    out.loss += sse[b];
  }
  out.loss /= norm;
  return out;
}

// ---------------------------------------------------------------------------
// Adam.

struct AdamState {
  ParamGrads m, v;
  std::size_t step_count = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState for_params(const CellParams& p) {
    return {CellParams::zeros(p.d, p.p, p.q), CellParams::zeros(p.d, p.p, p.q)};
  }
};

inline double global_norm(const ParamGrads& g) {
  double s = 0.0;
  g.for_each_block([&](std::string_view, std::span<const double> b) {
    for (double x : b) s += x * x;
  });
  return std::sqrt(s);
}

/// One bias-corrected Adam update. With grad_clip set, gradients whose global
/// norm exceeds it are rescaled to that norm first.
inline void adam_step(CellParams& params, const ParamGrads& grads, AdamState& st,
                      double lr, std::optional<double> grad_clip = std::nullopt) {
  if (grads.d != params.d || grads.p != params.p || grads.q != params.q ||
      st.m.d != params.d || st.m.p != params.p || st.m.q != params.q) {
    throw ShapeError("adam_step: parameter, gradient and state shapes differ");
  }
  double scale = 1.0;
  if (grad_clip) {
    const double n = global_norm(grads);
    if (n > *grad_clip) scale = *grad_clip / n;
  }
  ++st.step_count;
  const double t = static_cast<double>(st.step_count);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);
  std::vector<std::span<double>> P, M, V;
  std::vector<std::span<const double>> G;
  params.for_each_block([&](std::string_view, std::span<double> s) { P.push_back(s); });
  st.m.for_each_block([&](std::string_view, std::span<double> s) { M.push_back(s); });
  st.v.for_each_block([&](std::string_view, std::span<double> s) { V.push_back(s); });
  grads.for_each_block([&](std::string_view, std::span<const double> s) { G.push_back(s); });
  for (std::size_t b = 0; b < P.size(); ++b) {
    for (std::size_t i = 0; i < P[b].size(); ++i) {
      const double g = scale * G[b][i];
      M[b][i] = st.beta1 * M[b][i] + (1.0 - st.beta1) * g;
      V[b][i] = st.beta2 * V[b][i] + (1.0 - st.beta2) * g * g;
      const double mhat = M[b][i] / c1, vhat = V[b][i] / c2;
      P[b][i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop.

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean of the epoch's batch MSEs
  double test_loss = 0.0;   // MSE on the test split after the epoch
  double wall_seconds = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(std::size_t epoch)
      : std::runtime_error("training diverged: non-finite loss in epoch " +
                           std::to_string(epoch)),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

struct TrainResult {
  CellParams params;
  std::vector<EpochRecord> epochs;
  double initial_train_loss = 0.0;
  double initial_test_loss = 0.0;
  double final_train_loss = 0.0;  // full training split after the last epoch
  double final_test_loss = 0.0;
  std::size_t optimizer_steps = 0;
  std::size_t param_count = 0;    // effective count for the variant
};

inline constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Optional on_epoch is called after every epoch (progress reporting).
inline TrainResult train(const TrainConfig& cfg, const TaskData& data,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.train.p != cfg.p() || data.test.p != cfg.p()) {
    throw ShapeError("train: dataset input width does not match the task");
  }
  TrainResult res;
  res.params = init_params(cfg.d, cfg.p(), cfg.q(), cfg.seed);
  res.param_count = effective_param_count(cfg.variant, cfg.d, cfg.p(), cfg.q());
  AdamState adam = AdamState::for_params(res.params);
  SplitMix64 shuffle_rng = SplitMix64::stream(cfg.seed, kShuffleStream);

  const std::size_t n = data.train.size();
  const std::size_t bs = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  res.initial_train_loss = evaluate_mse(res.params, cfg.variant, data.train);
  res.initial_test_loss = evaluate_mse(res.params, cfg.variant, data.test);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    if (bs < n) {
      for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
      }
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < n; lo += bs) {
      const std::size_t hi = std::min(n, lo + bs);
      const auto bg = batch_gradient(
          res.params, cfg.variant, data.train,
          std::span<const std::size_t>(order.data() + lo, hi - lo));
      if (!std::isfinite(bg.loss)) throw TrainingDiverged(epoch);
      adam_step(res.params, bg.grads, adam, cfg.lr, cfg.grad_clip);
      loss_sum += bg.loss;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.test_loss = evaluate_mse(res.params, cfg.variant, data.test);
    if (!std::isfinite(rec.test_loss)) throw TrainingDiverged(epoch);
    rec.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
    res.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  res.optimizer_steps = adam.step_count;
  res.final_train_loss = evaluate_mse(res.params, cfg.variant, data.train);
  res.final_test_loss = res.epochs.back().test_loss;
  return res;
}

inline TrainResult train(const TrainConfig& cfg) { return train(cfg, load_task(cfg)); }

// ---------------------------------------------------------------------------
// Ablation grid and seed spread.

struct AblationGrid {
  std::vector<double> alphas{1.0};
  std::vector<double> betas{1.0};
  std::vector<std::size_t> taus;  // empty: the base config's delay
  std::vector<bool> weightings{true};
  bool include_simple_delay_gru = false;
};

struct AblationRow {
  std::string name;
  CellVariant variant;
  double test_metric = 0.0;
  std::size_t param_count = 0;
  std::vector<EpochRecord> epochs;
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

/// "tau_gru" for the full model, otherwise the settings that differ from it.
inline std::string ablation_name(const CellVariant& v, std::size_t base_tau) {
  if (v.kind == CellKind::SimpleDelayGru) return "simple_delay_gru";
  std::vector<std::string> diffs;
  if (v.alpha != 1.0) diffs.push_back("alpha=" + format_number(v.alpha));
  if (v.beta != 1.0) diffs.push_back("beta=" + format_number(v.beta));
  if (!v.use_weighting_a) diffs.push_back("weighting=off");
  if (v.delay_m != base_tau) diffs.push_back("tau=" + std::to_string(v.delay_m));
  std::string name = "tau_gru";
  if (!diffs.empty()) {
    name += "[";
    for (std::size_t i = 0; i < diffs.size(); ++i) name += (i ? "," : "") + diffs[i];
    name += "]";
  }
  return name;
}

/// Cartesian product of the grid (rows with alpha = beta = 0 are skipped,
/// they have no candidate), plus the simple delay GRU when requested.
inline std::vector<CellVariant> ablation_variants(const TrainConfig& base,
                                                  const AblationGrid& grid) {
  const std::vector<std::size_t> taus =
      grid.taus.empty() ? std::vector<std::size_t>{base.variant.delay_m} : grid.taus;
  std::vector<CellVariant> out;
  for (std::size_t tau : taus)
    for (double a : grid.alphas)
      for (double b : grid.betas)
        for (bool w : grid.weightings) {
          if (a == 0.0 && b == 0.0) continue;
          out.push_back({CellKind::TauGru, a, b, w, tau});
        }
  if (grid.include_simple_delay_gru) {
    out.push_back({CellKind::SimpleDelayGru, 1.0, 1.0, true, base.variant.delay_m});
  }
  if (out.empty()) throw std::invalid_argument("ablate: empty grid");
  return out;
}

/// Trains every grid variant with the base config's seeds and data.
inline std::vector<AblationRow> ablate(const TrainConfig& base, const AblationGrid& grid,
                                       const TaskData& data) {
  const auto variants = ablation_variants(base, grid);
  std::vector<AblationRow> rows(variants.size());
  parallel_for(variants.size(), [&](std::size_t i) {
    TrainConfig cfg = base;
    cfg.variant = variants[i];
    const TrainResult r = train(cfg, data);
    rows[i] = {ablation_name(variants[i], base.variant.delay_m), variants[i],
               r.final_test_loss, r.param_count, r.epochs};
  });
  return rows;
}

struct SeedSpread {
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;  // final test MSE per seed
  double max = 0.0, min = 0.0, mean = 0.0, std = 0.0, median = 0.0;
  std::vector<std::vector<EpochRecord>> curves;  // per seed, when recorded
};

inline SeedSpread summarize(std::vector<std::uint64_t> seeds, std::vector<double> values) {
  if (values.size() < 2) throw std::invalid_argument("seed spread: need >= 2 values");
  SeedSpread s;
  s.seeds = std::move(seeds);
  s.values = std::move(values);
  s.max = *std::max_element(s.values.begin(), s.values.end());
  s.min = *std::min_element(s.values.begin(), s.values.end());
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) /
           static_cast<double>(s.values.size());
  double ss = 0.0;
  for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(s.values.size() - 1));
  std::vector<double> sorted = s.values;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = sorted.size();
  s.median = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
  return s;
}

/// Trains with seeds base.seed, base.seed + 1, ... on the same data.
inline SeedSpread evaluate_seed_spread(const TrainConfig& base, const TaskData& data,
                                       std::size_t n_seeds = 8) {
  if (n_seeds < 2) throw std::invalid_argument("seed spread: n_seeds must be >= 2");
  std::vector<std::uint64_t> seeds(n_seeds);
  std::vector<double> values(n_seeds);
  std::vector<std::vector<EpochRecord>> curves(n_seeds);
  for (std::size_t i = 0; i < n_seeds; ++i) seeds[i] = base.seed + i;
  parallel_for(n_seeds, [&](std::size_t i) {
    TrainConfig cfg = base;
    cfg.seed = seeds[i];
    TrainResult r = train(cfg, data);
    values[i] = r.final_test_loss;
    curves[i] = std::move(r.epochs);
  });
  SeedSpread s = summarize(std::move(seeds), std::move(values));
  s.curves = std::move(curves);
  return s;
}

// ---------------------------------------------------------------------------
// CSV output.

/// `epoch,train_rmse,test_rmse,wall_seconds`
inline void write_epoch_csv(std::ostream& os, const std::vector<EpochRecord>& recs) {
  os << "epoch,train_rmse,test_rmse,wall_seconds\n";
  for (const EpochRecord& r : recs) {
    os << r.epoch << ',' << dde::format_double(std::sqrt(r.train_loss)) << ','
       << dde::format_double(std::sqrt(r.test_loss)) << ','
       << dde::format_double(r.wall_seconds) << '\n';
  }
}

/// `name,alpha,beta,tau,weighting,test_metric,param_count`
inline void write_results_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "name,alpha,beta,tau,weighting,test_metric,param_count\n";
  for (const AblationRow& r : rows) {
    os << r.name << ',' << format_number(r.variant.alpha) << ','
       << format_number(r.variant.beta) << ',' << r.variant.delay_m << ','
       << (r.variant.use_weighting_a ? "on" : "off") << ','
       << dde::format_double(r.test_metric) << ',' << r.param_count << '\n';
  }
}

/// `seed,test_metric` per seed followed by the summary statistics.
inline void write_seed_spread_csv(std::ostream& os, const SeedSpread& s) {
  os << "seed,test_metric\n";
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    os << s.seeds[i] << ',' << dde::format_double(s.values[i]) << '\n';
  }
}

inline void write_seed_summary_csv(std::ostream& os, const SeedSpread& s) {
  os << "statistic,value\n"
     << "max," << dde::format_double(s.max) << '\n'
     << "min," << dde::format_double(s.min) << '\n'
     << "mean," << dde::format_double(s.mean) << '\n'
     << "std," << dde::format_double(s.std) << '\n'
     << "median," << dde::format_double(s.median) << '\n';
}

/// `# adding, 1, 0, n_samples, N` then u_0..u_{N-1}, v_0..v_{N-1}, target.
inline void write_adding_csv(std::ostream& os, const std::vector<AddingSample>& data) {
  const std::size_t N = data.empty() ? 0 : data.front().u.size();
  os << "# adding, 1, 0, " << data.size() << ", " << N << '\n';
  for (const AddingSample& a : data) {
    for (double x : a.u) os << dde::format_double(x) << ',';
    for (double x : a.v) os << dde::format_double(x) << ',';
    os << dde::format_double(a.target) << '\n';
  }
}

inline std::vector<AddingSample> read_adding_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw dde::DatasetFormatError("empty dataset file");
  const dde::DatasetHeader h = dde::read_dataset_header(line);
  if (h.name != "adding") {
    throw dde::DatasetFormatError("expected an adding dataset, found '" + h.name + "'");
  }
  const auto rows = dde::read_rows(is, h, 2 * h.len + 1);
  std::vector<AddingSample> out;
  for (const auto& r : rows) {
    AddingSample a;
    a.u.assign(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(h.len));
    a.v.assign(r.begin() + static_cast<std::ptrdiff_t>(h.len),
               r.begin() + static_cast<std::ptrdiff_t>(2 * h.len));
    a.target = r.back();
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace taurnn
