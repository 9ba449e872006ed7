#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles/direct_cells.hpp"
#include "taurnn/delay_cells.hpp"
#include "test_util.hpp"

using namespace taurnn;
using testutil::random_inputs;
using testutil::random_params;

namespace {

CellVariant tau_variant(std::size_t m, double alpha = 1.0, double beta = 1.0,
                        bool weighting = true) {
  return {CellKind::TauGru, alpha, beta, weighting, m};
}

double max_diff(const std::vector<Vector>& a,
                const std::vector<std::vector<double>>& b) {
  double m = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n)
    for (std::size_t i = 0; i < a[n].size(); ++i)
      m = std::max(m, std::abs(a[n][i] - b[n][i]));
  return m;
}

}  // namespace

TEST(InitParams, DeterministicInSeed) {
  EXPECT_EQ(init_params(8, 3, 2, 7), init_params(8, 3, 2, 7));
  EXPECT_NE(init_params(8, 3, 2, 7), init_params(8, 3, 2, 8));
}

TEST(InitParams, BiasesZeroAndWeightsBounded) {
  const auto cp = init_params(16, 1, 1, 1);
  for (const Vector* b : {&cp.b1, &cp.b2, &cp.b3, &cp.b4, &cp.c})
    for (double x : *b) EXPECT_EQ(x, 0.0);
  EXPECT_LE(max_abs(cp.W1.span()), 0.25);
  EXPECT_LE(max_abs(cp.U4.span()), 0.25);
  EXPECT_GT(max_abs(cp.W1.span()), 0.0);
}

TEST(ParamCount, TauGruSixteenUnits) {
  EXPECT_EQ(init_params(16, 1, 1, 0).param_count(), 1169u);
  EXPECT_EQ(effective_param_count(tau_variant(10), 16, 1, 1), 1169u);
}

TEST(ParamCount, VariantsExcludeDeadSubgraphs) {
  // simple delay GRU keeps W1, W2, W3, U1, U3, b1, b3 and the decoder
  CellVariant simple{CellKind::SimpleDelayGru, 1, 1, true, 10};
  EXPECT_EQ(effective_param_count(simple, 16, 1, 1), 849u);
  // alpha = 0 removes the delayed unit and its weighting
  EXPECT_EQ(effective_param_count(tau_variant(10, 0.0), 16, 1, 1), 593u);
  EXPECT_EQ(effective_param_count(tau_variant(10, 1.0, 0.0), 16, 1, 1), 881u);
  EXPECT_EQ(effective_param_count(tau_variant(10, 1, 1, false), 16, 1, 1), 881u);
}

TEST(HiddenHistory, LookupAndZeroInitialFunction) {
  HiddenHistory h(3, 2);
  EXPECT_EQ(h.capacity(), 4u);
  for (std::size_t j = 0; j <= 3; ++j) EXPECT_EQ(h.lookup(j), Vector(2));
  for (int n = 1; n <= 5; ++n) h.push(Vector{double(n), -double(n)});
  EXPECT_EQ(h.lookup(0), (Vector{5, -5}));
  EXPECT_EQ(h.lookup(3), (Vector{2, -2}));
  EXPECT_EQ(h.delayed(), (Vector{2, -2}));
  EXPECT_EQ(h.capacity(), 4u);
  EXPECT_EQ(h.step_count(), 5u);
  EXPECT_THROW(h.lookup(4), std::out_of_range);

  HiddenHistory early(4, 1);
  early.push(Vector{1.0});
  EXPECT_EQ(early.lookup(1), Vector{0.0});  // h_0
  EXPECT_EQ(early.lookup(4), Vector{0.0});  // h_{-3}
}

TEST(HiddenHistory, ZeroDelayReadsCurrentSlot) {
  HiddenHistory h(0, 1);
  h.push(Vector{2.0});
  EXPECT_EQ(h.current(), h.delayed());
}

TEST(StepTauGru, ZeroParametersFixedPoint) {
  const auto cp = CellParams::zeros(3, 2, 1);
  HiddenHistory hist(2, 3);
  const auto s = step_taugru(cp, tau_variant(2), Vector{0.7, -1.2}, hist);
  EXPECT_EQ(s.g, (Vector{0.5, 0.5, 0.5}));
  EXPECT_EQ(s.a, (Vector{0.5, 0.5, 0.5}));
  EXPECT_EQ(s.u, Vector(3));
  EXPECT_EQ(s.z, Vector(3));
  EXPECT_EQ(s.h_out, Vector(3));
  EXPECT_EQ(hist.current(), Vector(3));
}

TEST(StepTauGru, ShapeMismatchThrows) {
  const auto cp = CellParams::zeros(3, 2, 1);
  HiddenHistory hist(1, 3);
  EXPECT_THROW(step_taugru(cp, tau_variant(1), Vector{1.0}, hist), ShapeError);
  HiddenHistory wrong(1, 4);
  EXPECT_THROW(step_taugru(cp, tau_variant(1), Vector{1.0, 2.0}, wrong),
               ShapeError);
  HiddenHistory wrong_cap(3, 3);
  EXPECT_THROW(step_taugru(cp, tau_variant(1), Vector{1.0, 2.0}, wrong_cap),
               std::invalid_argument);
}

TEST(StepTauGru, MatchesDirectTranscription) {
  SplitMix64 rng(42);
  const auto cp = random_params(rng, 4, 2, 1, 0.8);
  const auto xs = random_inputs(rng, 10, 2);
  for (std::size_t m : {0u, 1u, 3u}) {
    const auto run = run_sequence(cp, tau_variant(m), xs);
    const auto ref = oracle::direct_taugru(testutil::to_raw(cp),
                                           testutil::to_raw(xs), m, 1, 1, true);
    EXPECT_LE(max_diff(run.hs, ref), 1e-14) << "m=" << m;
  }
}

TEST(StepTauGru, AblationsMatchDirectTranscription) {
  SplitMix64 rng(4242);
  const auto cp = random_params(rng, 5, 3, 2, 0.9);
  const auto xs = random_inputs(rng, 25, 3);
  for (double alpha : {0.0, 0.3, 1.0})
    for (double beta : {0.0, 0.6, 1.0})
      for (bool w : {true, false}) {
        const auto run = run_sequence(cp, tau_variant(4, alpha, beta, w), xs);
        const auto ref = oracle::direct_taugru(
            testutil::to_raw(cp), testutil::to_raw(xs), 4, alpha, beta, w);
        EXPECT_LE(max_diff(run.hs, ref), 1e-14);
      }
}

TEST(StepTauGru, AlphaZeroIgnoresDelayAndDelayedWeights) {
  SplitMix64 rng(1);
  auto cp = random_params(rng, 4, 2, 1, 1.0);
  const auto xs = random_inputs(rng, 30, 2);
  const auto base = run_sequence(cp, tau_variant(0, 0.0), xs).hs;
  for (std::size_t m : {1u, 5u, 29u})
    EXPECT_EQ(run_sequence(cp, tau_variant(m, 0.0), xs).hs, base);
  cp.W2 = testutil::random_matrix(rng, 4, 4, 3.0);
  cp.U2 = testutil::random_matrix(rng, 4, 2, 3.0);
  cp.b2 = testutil::random_vector(rng, 4, 3.0);
  EXPECT_EQ(run_sequence(cp, tau_variant(7, 0.0), xs).hs, base);
}

TEST(StepTauGru, ZeroDelayWithTiedWeightsGivesZEqualsU) {
  SplitMix64 rng(2);
  auto cp = random_params(rng, 3, 2, 1, 1.0);
  cp.W2 = cp.W1;
  cp.U2 = cp.U1;
  cp.b2 = cp.b1;
  HiddenHistory hist(0, 3);
  hist.set_current(testutil::random_vector(rng, 3));
  const Vector h = hist.current();
  const auto s = step_taugru(cp, tau_variant(0), Vector{0.3, -0.4}, hist);
  EXPECT_EQ(s.z, s.u);
  for (std::size_t i = 0; i < 3; ++i) {
    const double expect =
        (1 - s.g[i]) * h[i] + s.g[i] * (s.u[i] + s.a[i] * s.u[i]);
    EXPECT_DOUBLE_EQ(s.h_out[i], expect);
  }
}

TEST(StepTauGru, GateRanges) {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto cp = random_params(rng, 6, 2, 1, 2.0);
    const auto run = run_sequence(cp, tau_variant(rng.uniform_int(0, 6)),
                                  random_inputs(rng, 40, 2, 2.0));
    for (const auto& s : run.tape.steps) {
      for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_GT(s.g[i], 0.0); EXPECT_LT(s.g[i], 1.0);
        EXPECT_GT(s.a[i], 0.0); EXPECT_LT(s.a[i], 1.0);
        EXPECT_GT(s.u[i], -1.0); EXPECT_LT(s.u[i], 1.0);
        EXPECT_GT(s.z[i], -1.0); EXPECT_LT(s.z[i], 1.0);
      }
    }
  }
}

TEST(StepTauGru, ActivationsSatisfyUpdateIdentity) {
  SplitMix64 rng(6);
  const auto cp = random_params(rng, 4, 1, 1, 1.0);
  const auto v = tau_variant(2, 0.7, 0.4, true);
  const auto run = run_sequence(cp, v, random_inputs(rng, 12, 1));
  for (const auto& s : run.tape.steps)
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_DOUBLE_EQ(s.h_out[i],
                       (1 - s.g[i]) * s.h_in[i] +
                           s.g[i] * (0.4 * s.u[i] + 0.7 * s.a[i] * s.z[i]));
}

// Every hidden component stays in [-2, 2] from the zero initial function.
TEST(StepTauGru, StateBoundProperty) {
  SplitMix64 rng(777);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = rng.uniform_int(1, 6), p = rng.uniform_int(1, 3);
    const double scale = rng.uniform(0.1, 20.0);
    const auto cp = random_params(rng, d, p, 1, scale);
    const auto v = tau_variant(rng.uniform_int(0, 50), rng.uniform(0, 1),
                               rng.uniform(0, 1), rng.uniform() < 0.5);
    const auto xs = random_inputs(rng, rng.uniform_int(1, 500), p, scale);
    for (const auto& h : run_sequence(cp, v, xs).hs)
      worst = std::max(worst, max_abs(h.span()));
  }
  EXPECT_LE(worst, 2.0);
}

TEST(StepSimpleDelayGru, ZeroParamsStayAtZero) {
  const auto cp = CellParams::zeros(3, 1, 1);
  HiddenHistory hist(4, 3);
  for (int n = 0; n < 10; ++n) step_simple_delay_gru(cp, Vector{1.0}, hist);
  EXPECT_EQ(hist.current(), Vector(3));
}

TEST(StepSimpleDelayGru, WithoutDelayMatrixTrajectoryIgnoresDelay) {
  SplitMix64 rng(8);
  auto cp = random_params(rng, 4, 2, 1, 1.0);
  cp.W2.fill(0.0);
  const auto xs = random_inputs(rng, 30, 2);
  CellVariant v{CellKind::SimpleDelayGru, 1, 1, true, 0};
  const auto base = run_sequence(cp, v, xs).hs;
  for (std::size_t m : {1u, 6u, 40u}) {
    v.delay_m = m;
    EXPECT_EQ(run_sequence(cp, v, xs).hs, base);
  }
}

TEST(StepSimpleDelayGru, MatchesDirectTranscription) {
  SplitMix64 rng(9);
  const auto cp = random_params(rng, 5, 2, 1, 1.0);
  const auto xs = random_inputs(rng, 30, 2);
  for (std::size_t m : {0u, 2u, 7u}) {
    CellVariant v{CellKind::SimpleDelayGru, 1, 1, true, m};
    const auto ref = oracle::direct_simple_delay_gru(
        testutil::to_raw(cp), testutil::to_raw(xs), m);
    EXPECT_LE(max_diff(run_sequence(cp, v, xs).hs, ref), 1e-14);
  }
}

TEST(StepLinear, NoRecurrenceCopiesInput) {
  const Matrix A = Matrix::zeros(2, 2), B = Matrix::zeros(2, 2);
  const Matrix C{{1, 2}, {3, 4}};
  HiddenHistory hist(1, 2);
  EXPECT_EQ(step_linear(A, B, C, Vector{1, 1}, hist), (Vector{3, 7}));
  EXPECT_EQ(step_linear(A, B, C, Vector{0, 1}, hist), (Vector{2, 4}));
}

TEST(StepLinear, ScalarHandIteration) {
  const Matrix I = Matrix::identity(1);
  HiddenHistory hist(1, 1);
  EXPECT_EQ(step_linear(I, I, I, Vector{1}, hist), Vector{1});
  EXPECT_EQ(step_linear(I, I, I, Vector{1}, hist), Vector{2});
  EXPECT_EQ(step_linear(I, I, I, Vector{1}, hist), Vector{4});
}

TEST(StepLinear, ShapeErrors) {
  HiddenHistory hist(1, 2);
  EXPECT_THROW(step_linear(Matrix(2, 3), Matrix(2, 2), Matrix(2, 1), Vector{1},
                           hist),
               ShapeError);
  EXPECT_THROW(step_linear(Matrix(2, 2), Matrix(2, 2), Matrix(2, 1),
                           Vector{1, 2}, hist),
               ShapeError);
}

// h_{m+1+j} = sum_i (A^{m+j-i} + (j-i) A^{j-i-1} B [i < j]) C u_i for
// diagonal A, B and j = 1..m+1; evaluated entrywise with scalar powers.
TEST(StepLinear, MatchesDelayExpansionForDiagonalMatrices) {
  SplitMix64 rng(10);
  for (std::size_t m : {1u, 2u, 4u}) {
    const std::size_t d = 3;
    std::vector<double> a(d), b(d);
    for (std::size_t i = 0; i < d; ++i) {
      a[i] = rng.uniform(-0.9, 0.9);
      b[i] = rng.uniform(-0.9, 0.9);
    }
    const Matrix A = Matrix::diag(a), B = Matrix::diag(b);
    const Matrix C = testutil::random_matrix(rng, d, 2);
    const auto us = random_inputs(rng, 2 * m + 2, 2);
    HiddenHistory hist(m, d);
    std::vector<Vector> hs{Vector(d)};
    for (const auto& u : us) hs.push_back(step_linear(A, B, C, u, hist));
    for (std::size_t j = 1; j <= m + 1; ++j) {
      const std::size_t n = m + 1 + j;
      for (std::size_t r = 0; r < d; ++r) {
        double expect = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double coeff = std::pow(a[r], double(m + j - i));
          if (i < j) coeff += double(j - i) * std::pow(a[r], double(j - i - 1)) * b[r];
          expect += coeff * (C(r, 0) * us[i][0] + C(r, 1) * us[i][1]);
        }
        EXPECT_NEAR(hs[n][r], expect, 1e-13) << "m=" << m << " j=" << j;
      }
    }
  }
}

TEST(RunSequence, ZeroParamsDecodeToBias) {
  auto cp = CellParams::zeros(4, 1, 2);
  cp.c = Vector{0.25, -3.0};
  const auto run = run_sequence(cp, tau_variant(3), std::vector<Vector>(7, Vector{1.0}));
  for (const auto& y : run.ys) EXPECT_EQ(y, cp.c);
}

TEST(RunSequence, LengthOneEqualsSingleStep) {
  SplitMix64 rng(12);
  const auto cp = random_params(rng, 4, 2, 3, 1.0);
  const Vector x{0.5, -0.5};
  const auto run = run_sequence(cp, tau_variant(2), std::vector<Vector>{x});
  HiddenHistory hist(2, 4);
  const auto s = step_taugru(cp, tau_variant(2), x, hist);
  ASSERT_EQ(run.ys.size(), 1u);
  EXPECT_EQ(run.hs[0], s.h_out);
  EXPECT_EQ(run.ys[0], decode(cp, s.h_out));
}

TEST(RunSequence, InitializedParamsMatchDirectTranscription) {
  const auto cp = init_params(6, 2, 1, 0);
  SplitMix64 rng(13);
  const auto xs = random_inputs(rng, 20, 2);
  const auto run = run_sequence(cp, tau_variant(5), xs);
  const auto ref = oracle::direct_taugru(testutil::to_raw(cp),
                                         testutil::to_raw(xs), 5, 1, 1, true);
  EXPECT_LE(max_diff(run.hs, ref), 1e-14);
  const auto ys = predict(cp, tau_variant(5), xs);
  EXPECT_EQ(ys, run.ys);
}

TEST(RunSequence, EmptyInputRejected) {
  EXPECT_THROW(run_sequence(CellParams::zeros(2, 1, 1), tau_variant(1),
                            std::vector<Vector>{}),
               std::invalid_argument);
}

TEST(RunSequence, TapeReplayIsBitExact) {
  SplitMix64 rng(14);
  const auto cp = random_params(rng, 5, 2, 1, 1.5);
  const auto run = run_sequence(cp, tau_variant(4, 1, 1, true),
                                random_inputs(rng, 60, 2));
  const auto replay = run_sequence(cp, run.tape.variant, run.tape.inputs);
  ASSERT_EQ(replay.tape.steps.size(), run.tape.steps.size());
  for (std::size_t n = 0; n < run.tape.size(); ++n)
    EXPECT_EQ(replay.tape.steps[n].h_out, run.tape.steps[n].h_out);
}

TEST(ParamFile, RoundTripIsBitExact) {
  SplitMix64 rng(15);
  auto cp = random_params(rng, 5, 3, 2, 1.0);
  cp.W1(0, 0) = -0.0;
  cp.b3[1] = 1e-310;  // subnormal
  std::stringstream ss;
  write_params(ss, cp, CellKind::SimpleDelayGru);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.size(), 6 * 8 + cp.param_count() * 8);
  // little-endian header: d = 5 at word 2
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 5);
  EXPECT_EQ(bytes[17], 0);
  const auto loaded = read_params(ss);
  EXPECT_EQ(loaded.kind, CellKind::SimpleDelayGru);
  std::stringstream again;
  write_params(again, loaded.params, loaded.kind);
  EXPECT_EQ(again.str(), bytes);
  EXPECT_TRUE(std::signbit(loaded.params.W1(0, 0)));
}

TEST(ParamFile, RejectsCorruptInput) {
  std::stringstream bad("not a parameter file at all, clearly not......");
  EXPECT_THROW(read_params(bad), FormatError);
  std::stringstream ss;
  write_params(ss, CellParams::zeros(2, 1, 1), CellKind::TauGru);
  std::string truncated = ss.str().substr(0, 60);
  std::stringstream tr(truncated);
  EXPECT_THROW(read_params(tr), FormatError);
}
