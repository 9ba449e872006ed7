#pragma once

// Randomized verification batteries behind `taurnn verify`.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "taurnn/bptt.hpp"
#include "taurnn/dde.hpp"
#include "taurnn/delay_cells.hpp"
#include "taurnn/parallel.hpp"
#include "taurnn/rng.hpp"
#include "taurnn/training.hpp"

namespace taurnn::verify {

struct BatteryResult {
  std::string name;
  bool passed = false;
  std::size_t trials = 0;
  std::size_t violations = 0;
  double worst = 0.0;  // worst observed quantity
  double bound = 0.0;  // the limit it is compared against
  std::string what;    // what `worst` measures
};

using Battery = std::function<BatteryResult(std::uint64_t seed)>;

namespace detail {

inline Matrix random_matrix(SplitMix64& rng, std::size_t r, std::size_t c, double scale) {
  Matrix m(r, c);
  for (double& x : m.span()) x = rng.uniform(-scale, scale);
  return m;
}

inline CellParams random_params(SplitMix64& rng, std::size_t d, std::size_t p,
                                std::size_t q, double scale) {
  auto cp = CellParams::zeros(d, p, q);
  cp.for_each_block([&](std::string_view, std::span<double> s) {
    for (double& x : s) x = rng.uniform(-scale, scale);
  });
  return cp;
}

inline std::vector<Vector> random_inputs(SplitMix64& rng, std::size_t n, std::size_t p,
                                         double scale = 1.0) {
  std::vector<Vector> xs(n, Vector(p));
  for (auto& x : xs)
    for (double& v : x) v = rng.uniform(-scale, scale);
  return xs;
}

inline double relative_error(double a, double b) {
  const double diff = std::abs(a - b);
  if (diff <= 1e-10) return 0.0;
  return diff / std::max(std::abs(a), std::abs(b));
}

inline double worst_relative_error(const ParamGrads& a, const ParamGrads& b) {
  std::vector<std::span<const double>> sa, sb;
  a.for_each_block([&](std::string_view, std::span<const double> s) { sa.push_back(s); });
  b.for_each_block([&](std::string_view, std::span<const double> s) { sb.push_back(s); });
  double worst = 0.0;
  for (std::size_t k = 0; k < sa.size(); ++k)
    for (std::size_t i = 0; i < sa[k].size(); ++i)
      worst = std::max(worst, relative_error(sa[k][i], sb[k][i]));
  return worst;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.span().size(); ++i)
    w = std::max(w, std::abs(a.span()[i] - b.span()[i]));
  return w;
}

/// Per-trial worst values folded in trial order.
inline BatteryResult fold(std::string name, std::string what, double bound,
                          const std::vector<double>& worst_per_trial,
                          const std::vector<char>& violated) {
  BatteryResult r;
  r.name = std::move(name);
  r.what = std::move(what);
  r.bound = bound;
  r.trials = worst_per_trial.size();
  for (std::size_t i = 0; i < r.trials; ++i) {
    r.worst = std::max(r.worst, worst_per_trial[i]);
    r.violations += violated[i] ? 1 : 0;
  }
  r.passed = r.violations == 0;
  return r;
}

}  // namespace detail

/// Backward vs central differences over every variant and m in {0, 1, 5, 20}.
inline BatteryResult gradients(std::uint64_t seed) {
  struct Case {
    CellVariant v;
    std::size_t d, p, q, steps;
    double scale;
  };
  const std::vector<Case> cases{
      {{CellKind::TauGru, 1, 1, true, 0}, 4, 2, 1, 25, 0.8},
      {{CellKind::TauGru, 1, 1, true, 1}, 4, 2, 1, 25, 0.8},
      {{CellKind::TauGru, 1, 1, true, 5}, 5, 1, 2, 30, 0.8},
      {{CellKind::TauGru, 1, 1, true, 20}, 3, 2, 1, 45, 0.8},
      {{CellKind::TauGru, 0.4, 0.7, true, 5}, 4, 2, 1, 30, 1.0},
      {{CellKind::TauGru, 1, 1, false, 5}, 4, 2, 1, 30, 1.0},
      {{CellKind::TauGru, 0, 1, true, 5}, 4, 2, 1, 30, 1.0},
      {{CellKind::TauGru, 1, 0, true, 5}, 4, 2, 1, 30, 1.0},
      {{CellKind::SimpleDelayGru, 1, 1, true, 0}, 4, 2, 1, 25, 0.8},
      {{CellKind::SimpleDelayGru, 1, 1, true, 5}, 4, 2, 1, 30, 0.8},
      {{CellKind::SimpleDelayGru, 1, 1, true, 20}, 3, 1, 1, 45, 0.8},
      {{CellKind::LinearDelayed, 1, 1, true, 1}, 3, 2, 1, 20, 0.3},
      {{CellKind::LinearDelayed, 1, 1, true, 5}, 3, 2, 1, 30, 0.3},
      {{CellKind::LinearDelayed, 1, 1, true, 20}, 2, 1, 1, 45, 0.3}};
  const double tol = 1e-5;
  std::vector<double> worst(cases.size());
  std::vector<char> bad(cases.size());
  parallel_for(cases.size(), [&](std::size_t k) {
    const Case& c = cases[k];
    SplitMix64 rng = SplitMix64::stream(seed, k);
    const auto cp = detail::random_params(rng, c.d, c.p, c.q, c.scale);
    const auto xs = detail::random_inputs(rng, c.steps, c.p);
    const auto targets = detail::random_inputs(rng, c.steps, c.q);
    const double count = static_cast<double>(c.steps * c.q);
    auto loss = [&](const std::vector<Vector>& ys) {
      double s = 0.0;
      for (std::size_t n = 0; n < ys.size(); ++n)
        for (std::size_t i = 0; i < c.q; ++i)
          s += (ys[n][i] - targets[n][i]) * (ys[n][i] - targets[n][i]);
      return s / count;
    };
    const auto run = run_sequence(cp, c.v, xs);
    std::vector<Vector> lg(c.steps, Vector(c.q));
    for (std::size_t n = 0; n < c.steps; ++n)
      for (std::size_t i = 0; i < c.q; ++i)
        lg[n][i] = 2.0 * (run.ys[n][i] - targets[n][i]) / count;
    const auto analytic = backward(run.tape, cp, lg);
    const auto numeric = fd_gradient(cp, c.v, xs, loss, 1e-5);
    worst[k] = detail::worst_relative_error(analytic, numeric);
    bad[k] = !(worst[k] < tol);
  });
  return detail::fold("gradients", "max relative error", tol, worst, bad);
}

/// Closed-form linear-cell input gradients vs reverse mode, diagonal and
/// polynomial (commuting) A, B, every i < n <= 2m + 2, m in {1, 2, 5}.
inline BatteryResult prop1(std::uint64_t seed) {
  const double tol = 1e-12;
  const std::vector<std::size_t> ms{1, 2, 5};
  const std::size_t per_m = 10;
  std::vector<double> worst(ms.size() * per_m);
  std::vector<char> bad(worst.size());
  parallel_for(worst.size(), [&](std::size_t t) {
    const std::size_t m = ms[t / per_m];
    SplitMix64 rng = SplitMix64::stream(seed, t);
    const std::size_t d = rng.uniform_int(1, 4), p = rng.uniform_int(1, 3);
    Matrix A, B;
    if (t % 2 == 0) {
      A = Matrix::zeros(d, d);
      B = Matrix::zeros(d, d);
      for (std::size_t i = 0; i < d; ++i) {
        A(i, i) = rng.uniform(-0.9, 0.9);
        B(i, i) = rng.uniform(-0.9, 0.9);
      }
    } else {
      A = detail::random_matrix(rng, d, d, 0.4);
      B = rng.uniform(-0.3, 0.3) * Matrix::identity(d) + rng.uniform(-0.5, 0.5) * A +
          rng.uniform(-0.5, 0.5) * matmul(A, A);
    }
    const Matrix C = detail::random_matrix(rng, d, p, 1.0);
    auto cp = CellParams::zeros(d, p, 1);
    cp.W1 = A;
    cp.W2 = B;
    cp.U1 = C;
    const CellVariant v{CellKind::LinearDelayed, 1, 1, true, m};
    const auto run = run_sequence(cp, v, detail::random_inputs(rng, 2 * m + 2, p));
    double w = 0.0;
    for (std::size_t n = 1; n <= 2 * m + 2; ++n)
      for (std::size_t i = 0; i < n; ++i)
        w = std::max(w, detail::max_abs_diff(prop1_oracle(A, B, C, m, n, i),
                                             input_jacobian(run.tape, cp, n, i)));
    worst[t] = w;
    bad[t] = !(w <= tol);
  });
  return detail::fold("prop1", "max |oracle - bptt|", tol, worst, bad);
}

/// 1000 random tau-GRU runs; every hidden component must satisfy |h| <= 2.
inline BatteryResult state_bound(std::uint64_t seed) {
  const std::size_t trials = 1000;
  std::vector<double> worst(trials);
  std::vector<char> bad(trials);
  parallel_for(trials, [&](std::size_t t) {
    SplitMix64 rng = SplitMix64::stream(seed, t);
    const std::size_t d = rng.uniform_int(1, 6), p = rng.uniform_int(1, 3);
    const double scale = rng.uniform(0.1, 20.0);
    const auto cp = detail::random_params(rng, d, p, 1, scale);
    const CellVariant v{CellKind::TauGru, rng.uniform(), rng.uniform(),
                        rng.uniform() < 0.5, rng.uniform_int(0, 50)};
    const auto xs = detail::random_inputs(rng, rng.uniform_int(1, 500), p, scale);
    double w = 0.0;
    for (const auto& h : run_sequence(cp, v, xs).hs)
      for (double x : h) w = std::max(w, std::abs(x));
    worst[t] = w;
    bad[t] = !(w <= 2.0);
  });
  return detail::fold("state_bound", "max |h|", 2.0, worst, bad);
}

/// 500 random instances with 1 <= n - k <= m + 1. `worst` is the largest
/// observed / bound ratio.
inline BatteryResult grad_norm_bound(std::uint64_t seed) {
  const std::size_t trials = 500;
  std::vector<double> worst(trials);
  std::vector<char> bad(trials);
  parallel_for(trials, [&](std::size_t t) {
    SplitMix64 rng = SplitMix64::stream(seed, t);
    const std::size_t d = rng.uniform_int(1, 8), p = rng.uniform_int(1, 3);
    const std::size_t m = rng.uniform_int(1, 12);
    const double scale = rng.uniform(0.05, 3.0);
    const auto cp = detail::random_params(rng, d, p, 1, scale);
    const CellVariant v{CellKind::TauGru, 1, 1, true, m};
    const std::size_t N = m + 2 + rng.uniform_int(0, 20);
    const auto run = run_sequence(cp, v, detail::random_inputs(rng, N, p, scale));
    const std::size_t gap = rng.uniform_int(1, m + 1);
    const std::size_t n = rng.uniform_int(gap, N);
    const auto r = grad_norm_bound_check(run.tape, cp, n, n - gap);
    worst[t] = r.bound > 0.0 ? r.observed / r.bound : (r.observed > 0 ? INFINITY : 0.0);
    bad[t] = !r.holds;
  });
  return detail::fold("grad_norm_bound", "max observed/bound", 1.0, worst, bad);
}

/// 100 continuous-time trials with ||W|| <= 1 and constant histories over
/// five delay intervals. `worst` is the largest distance / (bound + slack).
inline BatteryResult lipschitz(std::uint64_t seed) {
  const std::size_t trials = 100;
  std::vector<double> worst(trials);
  std::vector<char> bad(trials);
  parallel_for(trials, [&](std::size_t t) {
    SplitMix64 rng = SplitMix64::stream(seed, t);
    const std::size_t d = rng.uniform_int(1, 4);
    auto cp = detail::random_params(rng, d, 1, 1, 1.0);
    for (Matrix* w : {&cp.W1, &cp.W2, &cp.W3, &cp.W4}) {
      const double n = operator_norm(*w);
      if (n > 1.0) *w = (1.0 / n) * *w;
    }
    const double tau = rng.uniform(0.5, 2.0);
    Vector a(d), b(d);
    for (double& x : a) x = rng.uniform(-1.0, 1.0);
    for (double& x : b) x = rng.uniform(-1.0, 1.0);
    const double freq = rng.uniform(0.5, 3.0);
    const auto run = dde::integrate_continuous_taugru(
        cp, [freq](double s) { return Vector{std::cos(freq * s)}; },
        dde::constant_history(a), dde::constant_history(b), tau, 5 * tau, tau / 20);
    worst[t] = run.report.worst_ratio;
    bad[t] = !run.report.holds();
  });
  return detail::fold("lipschitz", "max distance/(bound+slack)", 1.0, worst, bad);
}

/// Empirical order on Mackey-Glass over [17, 27]: RK4 >= 3, Euler >= 1.
/// `worst` is the shortfall below the required order (0 when met).
inline BatteryResult integrator_order(std::uint64_t) {
  const auto rk4 = dde::mackey_glass_convergence(dde::Scheme::RK4);
  const auto euler = dde::mackey_glass_convergence(dde::Scheme::Euler);
  const double short_rk4 = std::max(0.0, 3.0 - rk4.order);
  const double short_euler = std::max(0.0, 1.0 - euler.order);
  auto r = detail::fold("integrator_order", "order shortfall", 0.0,
                        {short_rk4, short_euler},
                        {static_cast<char>(!(rk4.ratio >= 8.0)),
                         static_cast<char>(!(euler.ratio >= 2.0))});
  char buf[96];
  std::snprintf(buf, sizeof buf, "order shortfall (rk4 %.2f, euler %.2f)", rk4.order,
                euler.order);
  r.what = buf;
  return r;
}

/// Mackey-Glass x = 1 within 1e-10 over [17, 117]; ENSO T = 0 exactly.
inline BatteryResult fixed_points(std::uint64_t) {
  const dde::MackeyGlassParams mg;
  dde::DdeProblem p;
  p.rhs = dde::mackey_glass_rhs(mg);
  p.tau = mg.delta;
  p.initial_fn = dde::constant_history(Vector{1.0});
  p.t_end = mg.delta + 100.0;
  p.dt = 0.25;
  double mg_dev = 0.0;
  const auto mg_sol = dde::integrate(p, dde::Scheme::RK4);
  for (const auto& v : mg_sol.values())
    mg_dev = std::max(mg_dev, std::abs(v[0] - 1.0));

  const dde::EnsoParams en;
  p.rhs = dde::enso_rhs(en);
  p.tau = en.delta;
  p.initial_fn = dde::constant_history(Vector{0.0});
  p.t_end = 400.0;
  p.dt = 0.1;
  double enso_dev = 0.0;
  const auto enso_sol = dde::integrate(p, dde::Scheme::RK4);
  for (const auto& v : enso_sol.values())
    enso_dev = std::max(enso_dev, std::abs(v[0]));
  return detail::fold("fixed_points", "max deviation", 1e-10, {mg_dev, enso_dev},
                      {static_cast<char>(!(mg_dev <= 1e-10)),
                       static_cast<char>(enso_dev != 0.0)});
}

/// Generators and a short training run repeated with the same seeds must
/// agree bit for bit. `worst` counts mismatching checks.
inline BatteryResult determinism(std::uint64_t seed) {
  std::vector<double> mismatch;
  auto check = [&](bool same) { mismatch.push_back(same ? 0.0 : 1.0); };

  check(dde::gen_mackey_glass(seed, 2).series == dde::gen_mackey_glass(seed, 2).series);
  check(dde::gen_enso(seed, 2).series == dde::gen_enso(seed, 2).series);
  const auto a1 = gen_adding_task(50, 8, seed), a2 = gen_adding_task(50, 8, seed);
  bool same = true;
  for (std::size_t i = 0; i < a1.size(); ++i)
    same = same && a1[i].u == a2[i].u && a1[i].v == a2[i].v && a1[i].target == a2[i].target;
  check(same);

  TrainConfig cfg;
  cfg.variant = {CellKind::TauGru, 1, 1, true, 3};
  cfg.d = 4;
  cfg.lr = 0.01;
  cfg.epochs = 3;
  cfg.seed = seed;
  cfg.data_seed = seed;
  cfg.task = TaskKind::Adding;
  cfg.N = 20;
  cfg.n_train = 8;
  cfg.n_test = 4;
  cfg.batch_size = 3;
  const TaskData td = load_task(cfg);
  const auto r1 = train(cfg, td), r2 = train(cfg, td);
  same = r1.params == r2.params;
  for (std::size_t e = 0; e < r1.epochs.size(); ++e)
    same = same && r1.epochs[e].train_loss == r2.epochs[e].train_loss &&
           r1.epochs[e].test_loss == r2.epochs[e].test_loss;
  check(same);
  return detail::fold("determinism", "mismatching reruns", 0.0, mismatch,
                      std::vector<char>(mismatch.begin(), mismatch.end()));
}

// ---------------------------------------------------------------------------
// Registry.

inline const std::vector<std::pair<std::string, Battery>>& batteries() {
  static const std::vector<std::pair<std::string, Battery>> b{
      {"gradients", gradients},         {"prop1", prop1},
      {"state_bound", state_bound},     {"grad_norm_bound", grad_norm_bound},
      {"lipschitz", lipschitz},         {"integrator_order", integrator_order},
      {"fixed_points", fixed_points},   {"determinism", determinism}};
  return b;
}

/// Named suites; `all` is every registered battery.
inline const std::map<std::string, std::vector<std::string>>& suites() {
  static const std::map<std::string, std::vector<std::string>> s = [] {
    std::map<std::string, std::vector<std::string>> m{
        {"gradients", {"gradients"}},
        {"prop1", {"prop1"}},
        {"bounds", {"state_bound", "grad_norm_bound"}},
        {"lipschitz", {"lipschitz"}},
        {"convergence", {"integrator_order", "fixed_points"}},
        {"determinism", {"determinism"}}};
    for (const auto& [name, _] : batteries()) m["all"].push_back(name);
    return m;
  }();
  return s;
}

inline std::vector<BatteryResult> run_suite(const std::string& suite, std::uint64_t seed) {
  const auto it = suites().find(suite);
  if (it == suites().end()) throw std::invalid_argument("unknown verify suite '" + suite + "'");
  std::vector<BatteryResult> out;
  for (const auto& name : it->second) {
    const auto b = std::find_if(batteries().begin(), batteries().end(),
                                [&](const auto& e) { return e.first == name; });
    out.push_back(b->second(seed));
  }
  return out;
}

inline void print_table(std::ostream& os, const std::vector<BatteryResult>& results) {
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %-6s %8s %10s  %-40s %12s %12s\n", "battery",
                "status", "trials", "violations", "measure", "worst", "bound");
  os << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-18s %-6s %8zu %10zu  %-40s %12.4g %12.4g\n",
                  r.name.c_str(), r.passed ? "pass" : "FAIL", r.trials, r.violations,
                  r.what.c_str(), r.worst, r.bound);
    os << line;
  }
}

}  // namespace taurnn::verify
