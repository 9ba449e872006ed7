#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>
#include <sstream>

#include "taurnn/training.hpp"
#include "test_util.hpp"

using namespace taurnn;

namespace {

CellVariant taugru(std::size_t m) { return {CellKind::TauGru, 1.0, 1.0, true, m}; }

SupervisedDataset random_prediction_set(std::uint64_t seed, std::size_t n,
                                        std::size_t len) {
  SplitMix64 rng(seed);
  std::vector<std::vector<double>> series(n, std::vector<double>(len));
  for (auto& row : series)
    for (double& x : row) x = rng.uniform(-1.0, 1.0);
  return make_prediction_task(series);
}

TrainConfig small_config(std::size_t m) {
  TrainConfig cfg;
  cfg.variant = taugru(m);
  cfg.d = 4;
  cfg.lr = 0.01;
  cfg.epochs = 3;
  cfg.seed = 7;
  cfg.n_train = 6;
  cfg.n_test = 3;
  return cfg;
}

class ScopedThreads {
 public:
  explicit ScopedThreads(const char* n) {
    if (const char* old = std::getenv("TAU_RNN_THREADS")) old_ = old;
    setenv("TAU_RNN_THREADS", n, 1);
  }
  ~ScopedThreads() {
    if (old_.empty()) unsetenv("TAU_RNN_THREADS");
    else setenv("TAU_RNN_THREADS", old_.c_str(), 1);
  }

 private:
  std::string old_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Adding task.

TEST(AddingTask, TwoOnesOneInEachHalf) {
  for (std::size_t N : {2u, 3u, 10u, 11u, 200u}) {
    const auto data = gen_adding_task(N, 300, 11);
    for (const auto& a : data) {
      ASSERT_EQ(a.u.size(), N);
      std::vector<std::size_t> ones;
      for (std::size_t k = 0; k < N; ++k) {
        ASSERT_TRUE(a.v[k] == 0.0 || a.v[k] == 1.0);
        if (a.v[k] == 1.0) ones.push_back(k);
        ASSERT_GT(a.u[k], 0.0);
        ASSERT_LT(a.u[k], 1.0);
      }
      ASSERT_EQ(ones.size(), 2u);
      EXPECT_LE(ones[0], N / 2 - 1);
      EXPECT_GE(ones[1], (N + 1) / 2 - 1);
      EXPECT_EQ(a.target, a.u[ones[0]] + a.u[ones[1]]);
    }
  }
}

TEST(AddingTask, DeterministicPerSeedAndPrefixStable) {
  const auto a = gen_adding_task(20, 10, 3);
  const auto b = gen_adding_task(20, 10, 3);
  const auto c = gen_adding_task(20, 4, 3);
  const auto d = gen_adding_task(20, 10, 4);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a[i].u, b[i].u);
    EXPECT_EQ(a[i].v, b[i].v);
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a[i].u, c[i].u);
  EXPECT_NE(a[0].u, d[0].u);
}

TEST(AddingTask, MeanPredictorBaselineIsOneSixth) {
  // u_i + u_j with independent U(0,1) terms has mean 1 and variance 1/6.
  const auto data = gen_adding_task(12, 40000, 5);
  double mean = 0.0;
  for (const auto& a : data) mean += a.target;
  mean /= static_cast<double>(data.size());
  double mse = 0.0;
  for (const auto& a : data) mse += (a.target - 1.0) * (a.target - 1.0);
  mse /= static_cast<double>(data.size());
  EXPECT_NEAR(mean, 1.0, 0.01);
  EXPECT_NEAR(mse, 1.0 / 6.0, 0.005);
}

TEST(AddingTask, SupervisedLayout) {
  const auto data = gen_adding_task(7, 2, 1);
  const auto ds = adding_to_supervised(data);
  ASSERT_EQ(ds.p, 2u);
  ASSERT_EQ(ds.size(), 2u);
  const Sample& s = ds.samples[1];
  ASSERT_EQ(s.inputs.size(), 7u);
  for (std::size_t n = 0; n < 7; ++n) {
    EXPECT_EQ(s.inputs[n][0], data[1].u[n]);
    EXPECT_EQ(s.inputs[n][1], data[1].v[n]);
  }
  ASSERT_EQ(s.target_steps, std::vector<std::size_t>{6});
  EXPECT_EQ(s.targets[0][0], data[1].target);
}

TEST(AddingTask, CsvRoundTrip) {
  const auto data = gen_adding_task(9, 3, 2);
  std::stringstream ss;
  write_adding_csv(ss, data);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  EXPECT_EQ(header, "# adding, 1, 0, 3, 9");
  const auto back = read_adding_csv(ss);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].u, data[i].u);
    EXPECT_EQ(back[i].v, data[i].v);
    EXPECT_EQ(back[i].target, data[i].target);
  }
}

TEST(AddingTask, RejectsTooShort) {
  EXPECT_THROW(gen_adding_task(1, 1, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Prediction task.

TEST(PredictionTask, OneStepAheadPairs) {
  const auto ds = make_prediction_task(std::vector<std::vector<double>>{{1.0, 2.0, 3.0, 5.0}});
  ASSERT_EQ(ds.size(), 1u);
  const Sample& s = ds.samples[0];
  ASSERT_EQ(s.inputs.size(), 3u);
  for (std::size_t n = 0; n < 3; ++n) EXPECT_EQ(s.target_steps[n], n);
  EXPECT_EQ(s.inputs[2][0], 3.0);
  EXPECT_EQ(s.targets[2][0], 5.0);
  // Persistence errors 1, 1, 2.
  EXPECT_DOUBLE_EQ(persistence_mse(ds), 2.0);
  EXPECT_THROW(make_prediction_task(std::vector<std::vector<double>>{{1.0}}), std::invalid_argument);
}

TEST(PredictionTask, LoadTaskSplitsTrainThenTest) {
  TrainConfig cfg = small_config(2);
  cfg.task = TaskKind::Enso;
  cfg.n_train = 2;
  cfg.n_test = 1;
  const TaskData td = load_task(cfg);
  const auto series = dde::gen_enso(cfg.data_seed, 3);
  ASSERT_EQ(td.train.size(), 2u);
  ASSERT_EQ(td.test.size(), 1u);
  EXPECT_EQ(td.train.samples[1].inputs[0][0], series.series[1][0]);
  EXPECT_EQ(td.test.samples[0].targets.back()[0], series.series[2].back());
  EXPECT_EQ(td.test.samples[0].inputs.size(), series.length() - 1);
}

// ---------------------------------------------------------------------------
// Adam.

TEST(Adam, MatchesHandComputedTwoSteps) {
  auto params = CellParams::zeros(1, 1, 1);
  auto g = CellParams::zeros(1, 1, 1);
  AdamState st = AdamState::for_params(params);
  const double lr = 0.1, eps = 1e-8;

  g.c[0] = 1.0;
  adam_step(params, g, st, lr);
  double m = 0.1 * 1.0, v = 0.001 * 1.0;
  double expect = -lr * (m / 0.1) / (std::sqrt(v / 0.001) + eps);
  EXPECT_NEAR(params.c[0], expect, 1e-15);

  g.c[0] = -2.0;
  adam_step(params, g, st, lr);
  m = 0.9 * m + 0.1 * -2.0;
  v = 0.999 * v + 0.001 * 4.0;
  const double mhat = m / (1.0 - 0.81), vhat = v / (1.0 - 0.999 * 0.999);
  expect -= lr * mhat / (std::sqrt(vhat) + eps);
  EXPECT_NEAR(params.c[0], expect, 1e-15);
  EXPECT_EQ(st.step_count, 2u);
  EXPECT_EQ(params.W1(0, 0), 0.0);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  SplitMix64 rng(3);
  auto params = testutil::random_params(rng, 3, 2, 1, 0.5);
  const auto before = params;
  AdamState st = AdamState::for_params(params);
  for (int i = 0; i < 5; ++i) adam_step(params, CellParams::zeros(3, 2, 1), st, 0.1);
  EXPECT_EQ(params.W1, before.W1);
  EXPECT_EQ(params.b4, before.b4);
  EXPECT_EQ(params.c, before.c);
}

TEST(Adam, ClippingRescalesToGlobalNorm) {
  auto params = CellParams::zeros(1, 1, 1);
  auto g = CellParams::zeros(1, 1, 1);
  g.c[0] = 3.0;
  g.b1[0] = 4.0;
  EXPECT_DOUBLE_EQ(global_norm(g), 5.0);
  AdamState st = AdamState::for_params(params);
  adam_step(params, g, st, 0.1, 1.0);
  EXPECT_NEAR(st.m.c[0], 0.1 * 0.6, 1e-15);
  EXPECT_NEAR(st.m.b1[0], 0.1 * 0.8, 1e-15);

  AdamState loose = AdamState::for_params(params);
  adam_step(params, g, loose, 0.1, 100.0);
  EXPECT_DOUBLE_EQ(loose.m.c[0], 0.1 * 3.0);
}

TEST(Adam, RejectsShapeMismatch) {
  auto params = CellParams::zeros(2, 1, 1);
  AdamState st = AdamState::for_params(params);
  EXPECT_THROW(adam_step(params, CellParams::zeros(3, 1, 1), st, 0.1), ShapeError);
}

// ---------------------------------------------------------------------------
// Loss and gradients.

TEST(BatchGradient, MatchesFiniteDifferenceOfMse) {
  const auto ds = random_prediction_set(1, 3, 9);
  SplitMix64 rng(2);
  const auto params = testutil::random_params(rng, 3, 1, 1, 0.6);
  const CellVariant v = taugru(2);
  const std::vector<std::size_t> idx{0, 1, 2};
  const auto bg = batch_gradient(params, v, ds, idx);
  EXPECT_NEAR(bg.loss, evaluate_mse(params, v, ds), 1e-14);

  auto work = params;
  std::vector<std::span<double>> wb;
  work.for_each_block([&](std::string_view, std::span<double> s) { wb.push_back(s); });
  std::vector<std::span<const double>> gb;
  bg.grads.for_each_block(
      [&](std::string_view, std::span<const double> s) { gb.push_back(s); });
  const double h = 1e-6;
  for (std::size_t b = 0; b < wb.size(); ++b) {
    for (std::size_t i = 0; i < wb[b].size(); ++i) {
      const double x = wb[b][i];
      wb[b][i] = x + h;
      const double up = evaluate_mse(work, v, ds);
      wb[b][i] = x - h;
      const double dn = evaluate_mse(work, v, ds);
      wb[b][i] = x;
      EXPECT_NEAR(gb[b][i], (up - dn) / (2 * h), 1e-7) << "block " << b << " i " << i;
    }
  }
}

TEST(BatchGradient, IndependentOfWorkerCount) {
  const auto ds = random_prediction_set(4, 7, 12);
  SplitMix64 rng(5);
  const auto params = testutil::random_params(rng, 4, 1, 1, 0.5);
  const std::vector<std::size_t> idx{6, 2, 0, 3, 5, 1, 4};
  BatchGradient one, many;
  {
    ScopedThreads t("1");
    one = batch_gradient(params, taugru(3), ds, idx);
  }
  {
    ScopedThreads t("4");
    many = batch_gradient(params, taugru(3), ds, idx);
  }
  EXPECT_EQ(one.loss, many.loss);
  EXPECT_EQ(one.grads.W2, many.grads.W2);
  EXPECT_EQ(one.grads.U1, many.grads.U1);
  EXPECT_EQ(one.grads.c, many.grads.c);
}

TEST(BatchGradient, BetaZeroGivesNoGradientThroughCandidateU) {
  const auto ds = random_prediction_set(8, 2, 10);
  SplitMix64 rng(9);
  const auto params = testutil::random_params(rng, 3, 1, 1, 0.5);
  const CellVariant v{CellKind::TauGru, 1.0, 0.0, true, 2};
  const auto bg = batch_gradient(params, v, ds, std::vector<std::size_t>{0, 1});
  for (double x : bg.grads.W1.span()) EXPECT_EQ(x, 0.0);
  for (double x : bg.grads.U1.span()) EXPECT_EQ(x, 0.0);
  for (double x : bg.grads.b1) EXPECT_EQ(x, 0.0);
  EXPECT_GT(global_norm(bg.grads), 0.0);
}

TEST(BatchGradient, NestedParallelCallsRunInline) {
  ScopedThreads t("3");
  std::vector<double> out(3);
  const auto ds = random_prediction_set(2, 4, 6);
  SplitMix64 rng(1);
  const auto params = testutil::random_params(rng, 2, 1, 1, 0.5);
  parallel_for(3, [&](std::size_t i) {
    out[i] = batch_gradient(params, taugru(i), ds, std::vector<std::size_t>{0, 1, 2, 3}).loss;
  });
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(out[i], batch_gradient(params, taugru(i), ds,
                                     std::vector<std::size_t>{0, 1, 2, 3}).loss);
  }
}

// ---------------------------------------------------------------------------
// Training loop.

TEST(Train, DeterministicForFixedSeeds) {
  TaskData td{random_prediction_set(1, 6, 15), random_prediction_set(2, 3, 15)};
  TrainConfig cfg = small_config(3);
  cfg.batch_size = 2;
  cfg.epochs = 10;
  const auto a = train(cfg, td);
  const auto b = train(cfg, td);
  ASSERT_EQ(a.epochs.size(), 10u);
  for (std::size_t e = 0; e < 10; ++e) {
    EXPECT_EQ(a.epochs[e].train_loss, b.epochs[e].train_loss);
    EXPECT_EQ(a.epochs[e].test_loss, b.epochs[e].test_loss);
  }
  EXPECT_EQ(a.params.W1, b.params.W1);
  cfg.seed = 8;
  EXPECT_NE(train(cfg, td).final_test_loss, a.final_test_loss);
}

TEST(Train, StepCountPerEpoch) {
  TaskData td{random_prediction_set(1, 7, 6), random_prediction_set(2, 2, 6)};
  TrainConfig cfg = small_config(1);
  cfg.epochs = 1;
  cfg.batch_size = 3;
  EXPECT_EQ(train(cfg, td).optimizer_steps, 3u);
  cfg.batch_size = 0;
  EXPECT_EQ(train(cfg, td).optimizer_steps, 1u);
  cfg.batch_size = 100;
  cfg.epochs = 4;
  EXPECT_EQ(train(cfg, td).optimizer_steps, 4u);
}

TEST(Train, FullBatchEpochLossIsPreUpdateMse) {
  TaskData td{random_prediction_set(3, 4, 8), random_prediction_set(4, 2, 8)};
  TrainConfig cfg = small_config(2);
  cfg.epochs = 2;
  const auto r = train(cfg, td);
  EXPECT_NEAR(r.epochs[0].train_loss, r.initial_train_loss, 1e-14);
  EXPECT_GE(r.epochs[0].wall_seconds, 0.0);
}

TEST(Train, LearnsConstantSeries) {
  std::vector<std::vector<double>> rows(4, std::vector<double>(20, 0.7));
  const auto ds = make_prediction_task(rows);
  TrainConfig cfg = small_config(2);
  cfg.epochs = 3000;
  cfg.lr = 0.01;
  const auto r = train(cfg, TaskData{ds, ds});
  EXPECT_LT(r.final_test_loss, 1e-6);
  EXPECT_LT(r.final_train_loss, r.initial_train_loss);
}

TEST(Train, ReducesLossOnMackeyGlass) {
  TrainConfig cfg = small_config(10);
  cfg.task = TaskKind::MackeyGlass;
  cfg.n_train = 2;
  cfg.n_test = 1;
  cfg.epochs = 20;
  const auto r = train(cfg);
  EXPECT_LT(r.final_train_loss, r.initial_train_loss);
  EXPECT_LT(r.final_test_loss, r.initial_test_loss);
  EXPECT_EQ(r.param_count, effective_param_count(cfg.variant, 4, 1, 1));
}

TEST(Train, NonFiniteLossReportsEpoch) {
  auto ds = random_prediction_set(1, 2, 5);
  ds.samples[1].targets[2][0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg = small_config(1);
  try {
    train(cfg, TaskData{ds, ds});
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.epoch(), 1u);
  }
}

TEST(Train, RejectsInvalidConfig) {
  TaskData td{random_prediction_set(1, 2, 5), random_prediction_set(2, 1, 5)};
  TrainConfig cfg = small_config(1);
  cfg.lr = 0.0;
  EXPECT_THROW(train(cfg, td), std::invalid_argument);
  cfg = small_config(1);
  cfg.epochs = 0;
  EXPECT_THROW(train(cfg, td), std::invalid_argument);
  cfg = small_config(1);
  cfg.grad_clip = -1.0;
  EXPECT_THROW(train(cfg, td), std::invalid_argument);
  cfg = small_config(1);
  cfg.task = TaskKind::Adding;
  EXPECT_THROW(train(cfg, td), ShapeError);
}

// ---------------------------------------------------------------------------
// Ablation and seed spread.

TEST(Ablation, GridSkipsDegenerateRowAndNamesDiffs) {
  TrainConfig base = small_config(5);
  AblationGrid grid;
  grid.alphas = {0.0, 1.0};
  grid.betas = {0.0, 1.0};
  grid.weightings = {true, false};
  grid.include_simple_delay_gru = true;
  const auto vs = ablation_variants(base, grid);
  EXPECT_EQ(vs.size(), 7u);
  std::set<std::string> names;
  for (const auto& v : vs) {
    EXPECT_FALSE(v.alpha == 0.0 && v.beta == 0.0);
    names.insert(ablation_name(v, 5));
  }
  EXPECT_EQ(names.size(), 7u);
  EXPECT_TRUE(names.count("tau_gru"));
  EXPECT_TRUE(names.count("tau_gru[alpha=0]"));
  EXPECT_TRUE(names.count("tau_gru[beta=0,weighting=off]"));
  EXPECT_TRUE(names.count("simple_delay_gru"));
  EXPECT_EQ(ablation_name({CellKind::TauGru, 1, 1, true, 3}, 5), "tau_gru[tau=3]");

  grid = {};
  grid.alphas = {0.0};
  grid.betas = {0.0};
  EXPECT_THROW(ablation_variants(base, grid), std::invalid_argument);
}

TEST(Ablation, RowsMatchIndividualRuns) {
  TaskData td{random_prediction_set(1, 3, 8), random_prediction_set(2, 2, 8)};
  TrainConfig base = small_config(2);
  base.epochs = 2;
  AblationGrid grid;
  grid.alphas = {0.0, 1.0};
  grid.include_simple_delay_gru = true;
  const auto rows = ablate(base, grid, td);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) {
    TrainConfig cfg = base;
    cfg.variant = row.variant;
    EXPECT_EQ(row.test_metric, train(cfg, td).final_test_loss) << row.name;
    EXPECT_EQ(row.param_count, effective_param_count(row.variant, 4, 1, 1));
  }
  std::stringstream ss;
  write_results_csv(ss, rows);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "name,alpha,beta,tau,weighting,test_metric,param_count");
  std::getline(ss, line);
  EXPECT_EQ(line.rfind("tau_gru[alpha=0],0,1,2,on,", 0), 0u) << line;
}

TEST(SeedSpread, SummaryStatistics) {
  const auto s = summarize({1, 2, 3, 4}, {1.0, 3.0, 2.0, 6.0});
  EXPECT_EQ(s.max, 6.0);
  EXPECT_EQ(s.min, 1.0);
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(14.0 / 3.0));
  EXPECT_DOUBLE_EQ(s.median, 2.5);
  EXPECT_THROW(summarize({1}, {1.0}), std::invalid_argument);
}

TEST(SeedSpread, UsesConsecutiveSeedsOnFixedData) {
  TaskData td{random_prediction_set(1, 3, 8), random_prediction_set(2, 2, 8)};
  TrainConfig base = small_config(2);
  base.epochs = 2;
  base.seed = 40;
  const auto s = evaluate_seed_spread(base, td, 3);
  ASSERT_EQ(s.seeds, (std::vector<std::uint64_t>{40, 41, 42}));
  TrainConfig cfg = base;
  cfg.seed = 41;
  EXPECT_EQ(s.values[1], train(cfg, td).final_test_loss);
}

TEST(EpochCsv, RmseColumns) {
  std::stringstream ss;
  write_epoch_csv(ss, {{1, 4.0, 0.25, 0.5}});
  EXPECT_EQ(ss.str(), "epoch,train_rmse,test_rmse,wall_seconds\n1,2,0.5,0.5\n");
}
