#pragma once

// Fixed-step method-of-steps integration for constant-delay DDEs
//   h'(t) = F(t, h(t), h(t - tau)),  h = initial_fn on [t0 - tau, t0],
// with delayed values served by cubic Hermite dense output.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "taurnn/delay_cells.hpp"
#include "taurnn/numerics.hpp"
#include "taurnn/parallel.hpp"
#include "taurnn/rng.hpp"

namespace taurnn::dde {

using Rhs = std::function<Vector(double t, const Vector& h, const Vector& h_delayed)>;
/// Initial function, called with theta in [-tau, 0].
using InitialFn = std::function<Vector(double theta)>;
using InputFn = std::function<Vector(double t)>;

struct DdeProblem {
  Rhs rhs;
  double tau = 0.0;
  InitialFn initial_fn;
  double t0 = 0.0;
  double t_end = 1.0;
  double dt = 0.1;

  void validate() const {
    if (!rhs || !initial_fn) {
      throw std::invalid_argument("DdeProblem: rhs and initial_fn required");
    }
    if (!(dt > 0.0)) throw std::invalid_argument("DdeProblem: dt must be > 0");
    if (!(t_end > t0)) {
      throw std::invalid_argument("DdeProblem: t_end must exceed t0");
    }
    if (!(tau >= 0.0)) throw std::invalid_argument("DdeProblem: tau must be >= 0");
  }

  /// Number of steps; the last node t0 + steps*dt is the first node >= t_end
  /// (up to 1e-9 relative slack for round-off in (t_end - t0) / dt).
  std::size_t steps() const {
    const double ratio = (t_end - t0) / dt;
    return static_cast<std::size_t>(std::ceil(ratio - 1e-9 * std::max(1.0, ratio)));
  }
};

enum class Scheme { Euler, RK4 };

/// Non-finite state during integration.
class IntegrationError : public std::runtime_error {
 public:
  explicit IntegrationError(double t)
      : std::runtime_error("integrate: non-finite state at t = " +
                           std::to_string(t)),
        time_(t) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class DenseSolution {
 public:
  DenseSolution(double t0, double dt, double tau, InitialFn initial_fn)
      : t0_(t0), dt_(dt), tau_(tau), initial_fn_(std::move(initial_fn)) {}

  std::size_t size() const noexcept { return values_.size(); }
  double t0() const noexcept { return t0_; }
  double dt() const noexcept { return dt_; }
  double tau() const noexcept { return tau_; }
  double time(std::size_t k) const { return t0_ + static_cast<double>(k) * dt_; }
  double t_last() const { return time(values_.size() - 1); }
  const std::vector<Vector>& values() const noexcept { return values_; }
  const std::vector<Vector>& derivs() const noexcept { return derivs_; }
  const Vector& value(std::size_t k) const { return values_.at(k); }

  void append(Vector value, Vector deriv) {
    values_.push_back(std::move(value));
    derivs_.push_back(std::move(deriv));
  }

  /// Solution at t in [t0 - tau, t_last]. Grid nodes are returned exactly,
  /// the initial function is used on [t0 - tau, t0].
  Vector eval(double t) const { return eval_impl(t, false); }

  /// As eval, but extends the last interval's Hermite cubic past t_last
  /// (needed by stages when tau < dt).
  Vector eval_extrapolated(double t) const { return eval_impl(t, true); }

 private:
  Vector eval_impl(double t, bool extrapolate) const {
    if (t <= t0_) {
      if (t < t0_ - tau_ - 1e-12 * std::max(1.0, std::abs(t0_) + tau_)) {
        throw std::out_of_range("DenseSolution: t = " + std::to_string(t) +
                                " before t0 - tau");
      }
      return initial_fn_(std::max(t - t0_, -tau_));
    }
    if (values_.empty()) throw std::logic_error("DenseSolution: empty");
    const std::size_t last = values_.size() - 1;
    double kf = std::floor((t - t0_) / dt_);
    std::size_t k = kf < 0.0 ? 0 : static_cast<std::size_t>(kf);
    for (std::size_t j : {k, k + 1}) {
      if (j <= last && time(j) == t) return values_[j];
    }
    if (k >= last) {
      if (!extrapolate && t > t_last()) {
        throw std::out_of_range("DenseSolution: t = " + std::to_string(t) +
                                " beyond last node " + std::to_string(t_last()));
      }
      if (last == 0) {
        return axpy(t - t0_, derivs_[0], values_[0]);
      }
      k = last - 1;
    }
    return hermite(k, (t - time(k)) / dt_);
  }

  Vector hermite(std::size_t k, double s) const {
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    const Vector &y0 = values_[k], &y1 = values_[k + 1];
    const Vector &f0 = derivs_[k], &f1 = derivs_[k + 1];
    Vector out(y0.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = h00 * y0[i] + h10 * dt_ * f0[i] + h01 * y1[i] + h11 * dt_ * f1[i];
    }
    return out;
  }

  double t0_, dt_, tau_;
  InitialFn initial_fn_;
  std::vector<Vector> values_, derivs_;
};

inline DenseSolution integrate(const DdeProblem& problem, Scheme scheme) {
  problem.validate();
  const double dt = problem.dt, tau = problem.tau;
  DenseSolution sol(problem.t0, dt, tau, problem.initial_fn);
  const bool ode = tau == 0.0;
  auto f = [&](double t, const Vector& h) {
    return problem.rhs(t, h, ode ? h : sol.eval_extrapolated(t - tau));
  };

  Vector y = problem.initial_fn(0.0);
  if (!all_finite(y.span())) throw IntegrationError(problem.t0);
  sol.append(y, f(problem.t0, y));

  const std::size_t n_steps = problem.steps();
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = sol.time(k);
    const Vector& k1 = sol.derivs()[k];
    Vector next;
    if (scheme == Scheme::Euler) {
      next = axpy(dt, k1, y);
    } else {
      const Vector k2 = f(t + 0.5 * dt, axpy(0.5 * dt, k1, y));
      const Vector k3 = f(t + 0.5 * dt, axpy(0.5 * dt, k2, y));
      const Vector k4 = f(t + dt, axpy(dt, k3, y));
      next = Vector(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) {
        next[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
    }
    const double t_next = sol.time(k + 1);
    if (!all_finite(next.span())) throw IntegrationError(t_next);
    // Evaluated before the node is stored: for tau < dt the delayed point
    // lies past t_k and is extrapolated from the previous interval.
    Vector deriv = f(t_next, next);
    if (!all_finite(deriv.span())) throw IntegrationError(t_next);
    y = next;
    sol.append(std::move(next), std::move(deriv));
  }
  return sol;
}

inline InitialFn constant_history(Vector value) {
  return [value = std::move(value)](double) { return value; };
}

// ---------------------------------------------------------------------------
// Benchmark systems.

struct MackeyGlassParams {
  double a = 0.2, b = 0.1, n = 10.0, delta = 17.0;
};

/// x' = a x(t - delta) / (1 + x(t - delta)^n) - b x
inline Rhs mackey_glass_rhs(const MackeyGlassParams& p) {
  return [p](double, const Vector& x, const Vector& xd) {
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i] = p.a * xd[i] / (1.0 + std::pow(xd[i], p.n)) - p.b * x[i];
    }
    return out;
  };
}

struct EnsoParams {
  double c = 0.93, gamma = 0.49, delta = 4.8;
};

/// T' = T - T^3 - c T(t - delta) (1 - gamma T(t - delta)^2)
inline Rhs enso_rhs(const EnsoParams& p) {
  return [p](double, const Vector& T, const Vector& Td) {
    Vector out(T.size());
    for (std::size_t i = 0; i < T.size(); ++i) {
      out[i] = T[i] - T[i] * T[i] * T[i] -
               p.c * Td[i] * (1.0 - p.gamma * Td[i] * Td[i]);
    }
    return out;
  };
}

/// Truncated Weierstrass signal sum_{n<terms} a^-n cos(b^n omega t).
inline double weierstrass_input(double t, double a = 3.0, double b = 4.0,
                                double omega = 2.0, int terms = 4) {
  double s = 0.0, amp = 1.0, freq = omega;
  for (int n = 0; n < terms; ++n) {
    s += amp * std::cos(freq * t);
    amp /= a;
    freq *= b;
  }
  return s;
}

/// h' = -h(t - tau) + cos(t), zero history.
inline DdeProblem lagged_cosine_problem(double tau, double t_end, double dt) {
  DdeProblem p;
  p.rhs = [](double t, const Vector&, const Vector& hd) {
    return Vector{-hd[0] + std::cos(t)};
  };
  p.tau = tau;
  p.initial_fn = constant_history(Vector{0.0});
  p.t_end = t_end;
  p.dt = dt;
  return p;
}

/// h' = -h + tanh(-h(t - tau) + s(t)) with the Weierstrass drive, zero history.
inline DdeProblem weierstrass_tanh_problem(double tau, double t_end, double dt) {
  DdeProblem p;
  p.rhs = [](double t, const Vector& h, const Vector& hd) {
    return Vector{-h[0] + std::tanh(-hd[0] + weierstrass_input(t))};
  };
  p.tau = tau;
  p.initial_fn = constant_history(Vector{0.0});
  p.t_end = t_end;
  p.dt = dt;
  return p;
}

// ---------------------------------------------------------------------------
// Series datasets.

struct SeriesDataset {
  std::string name;
  double dt = 0.0;
  double tau = 0.0;
  std::vector<std::vector<double>> series;

  std::size_t n_samples() const { return series.size(); }
  std::size_t length() const { return series.empty() ? 0 : series.front().size(); }
};

/// Window emitted by a generator: nodes with t in (emit_after, t_end].
struct SeriesWindow {
  double dt;
  double emit_after;
  double t_end;
};

inline constexpr SeriesWindow kMackeyGlassWindow{0.25, 500.0, 1000.0};
inline constexpr SeriesWindow kEnsoWindow{0.1, 200.0, 400.0};

class SanityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// The warm-up on [0, delta] with the delayed argument frozen at x(0) is
/// exactly the DDE started from the constant history x(0) on [-delta, 0].
inline std::vector<double> scalar_series(const Rhs& rhs, double delta,
                                         double x0, const SeriesWindow& w) {
  DdeProblem p;
  p.rhs = rhs;
  p.tau = delta;
  p.initial_fn = constant_history(Vector{x0});
  p.t0 = 0.0;
  p.t_end = w.t_end;
  p.dt = w.dt;
  const DenseSolution sol = integrate(p, Scheme::RK4);
  std::vector<double> out;
  for (std::size_t k = 0; k < sol.size(); ++k) {
    if (sol.time(k) > w.emit_after + 1e-9 * w.dt) out.push_back(sol.value(k)[0]);
  }
  return out;
}

template <class Check>
SeriesDataset generate(const std::string& name, const Rhs& rhs, double delta,
                       const SeriesWindow& w, std::uint64_t seed,
                       std::size_t n_samples, Check check) {
  if (n_samples == 0) throw std::invalid_argument(name + ": n_samples must be >= 1");
  SeriesDataset ds{name, w.dt, delta, std::vector<std::vector<double>>(n_samples)};
  parallel_for(n_samples, [&](std::size_t i) {
    SplitMix64 rng = SplitMix64::stream(seed, i);
    const double x0 = rng.uniform();
    ds.series[i] = scalar_series(rhs, delta, x0, w);
    for (double v : ds.series[i]) {
      if (!check(v)) {
        throw SanityError(name + ": sample " + std::to_string(i) +
                          " left the expected range (value " +
                          std::to_string(v) + ")");
      }
    }
  });
  return ds;
}

}  // namespace detail

/// x(0) ~ U(0, 1) per sample; RK4 to t = 1000; emits the 2000 nodes on
/// (500, 1000]. Every emitted value must lie in (0, 2).
inline SeriesDataset gen_mackey_glass(std::uint64_t seed, std::size_t n_samples,
                                      const MackeyGlassParams& p = {},
                                      const SeriesWindow& w = kMackeyGlassWindow) {
  return detail::generate("mackey_glass", mackey_glass_rhs(p), p.delta, w, seed,
                          n_samples, [](double v) { return v > 0.0 && v < 2.0; });
}

/// T(0) ~ U(0, 1) per sample; RK4 to t = 400; emits the 2000 nodes on
/// (200, 400]. Every emitted value must satisfy |T| < 2.
inline SeriesDataset gen_enso(std::uint64_t seed, std::size_t n_samples,
                              const EnsoParams& p = {},
                              const SeriesWindow& w = kEnsoWindow) {
  return detail::generate("enso", enso_rhs(p), p.delta, w, seed, n_samples,
                          [](double v) { return std::abs(v) < 2.0; });
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// `# name, dt, tau, n_samples, len` then one comma-separated row per series.
inline void write_series_csv(std::ostream& os, const SeriesDataset& ds) {
  os << "# " << ds.name << ", " << format_double(ds.dt) << ", "
     << format_double(ds.tau) << ", " << ds.n_samples() << ", " << ds.length()
     << "\n";
  for (const auto& row : ds.series) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      os << format_double(row[i]);
    }
    os << '\n';
  }
}

class DatasetFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  return out;
}

inline double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw DatasetFormatError("line " + std::to_string(line) +
                             ": not a number: '" + s + "'");
  }
  return v;
}

}  // namespace detail

struct DatasetHeader {
  std::string name;
  double dt = 0.0, tau = 0.0;
  std::size_t n_samples = 0, len = 0;
};

inline DatasetHeader read_dataset_header(const std::string& line) {
  if (line.rfind("# ", 0) != 0) {
    throw DatasetFormatError("missing '# name, dt, tau, n_samples, len' header");
  }
  const auto f = detail::split_fields(line.substr(2));
  if (f.size() != 5) throw DatasetFormatError("header must have 5 fields");
  DatasetHeader h;
  h.name = f[0];
  h.dt = detail::parse_double(f[1], 1);
  h.tau = detail::parse_double(f[2], 1);
  h.n_samples = static_cast<std::size_t>(detail::parse_double(f[3], 1));
  h.len = static_cast<std::size_t>(detail::parse_double(f[4], 1));
  return h;
}

/// Reads rows as written by write_series_csv; `row_len` overrides the
/// header length (the adding format stores 2N + 1 numbers per row).
inline std::vector<std::vector<double>> read_rows(std::istream& is,
                                                  const DatasetHeader& h,
                                                  std::size_t row_len) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != row_len) {
      throw DatasetFormatError("line " + std::to_string(lineno) + ": " +
                               std::to_string(f.size()) + " values, expected " +
                               std::to_string(row_len));
    }
    std::vector<double> row;
    row.reserve(f.size());
    for (const auto& s : f) row.push_back(detail::parse_double(s, lineno));
    rows.push_back(std::move(row));
  }
  if (rows.size() != h.n_samples) {
    throw DatasetFormatError("header announces " + std::to_string(h.n_samples) +
                             " rows, found " + std::to_string(rows.size()));
  }
  return rows;
}

inline SeriesDataset read_series_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DatasetFormatError("empty dataset file");
  const DatasetHeader h = read_dataset_header(line);
  return {h.name, h.dt, h.tau, read_rows(is, h, h.len)};
}

// ---------------------------------------------------------------------------
// Self-convergence.

struct ConvergenceReport {
  double dt = 0.0;
  double error_coarse = 0.0;  // |x_dt(T) - x_ref(T)|
  double error_fine = 0.0;    // |x_{dt/2}(T) - x_ref(T)|
  double ratio = 0.0;         // error_coarse / error_fine
  double order = 0.0;         // log2(ratio)
};

/// Mackey-Glass from the constant history x0, integrated over [0, delta + span]
/// at dt and dt/2; errors at t = delta + span against a dt/8 reference.
inline ConvergenceReport mackey_glass_convergence(Scheme scheme, double dt = 0.25,
                                                  double x0 = 0.5,
                                                  double span = 10.0) {
  const MackeyGlassParams mg;
  auto end_value = [&](double h) {
    DdeProblem p;
    p.rhs = mackey_glass_rhs(mg);
    p.tau = mg.delta;
    p.initial_fn = constant_history(Vector{x0});
    p.t_end = mg.delta + span;
    p.dt = h;
    return integrate(p, scheme).values().back()[0];
  };
  const double ref = end_value(dt / 8.0);
  ConvergenceReport r;
  r.dt = dt;
  r.error_coarse = std::abs(end_value(dt) - ref);
  r.error_fine = std::abs(end_value(dt / 2.0) - ref);
  r.ratio = r.error_coarse / r.error_fine;
  r.order = std::log2(r.ratio);
  return r;
}

// ---------------------------------------------------------------------------
// Continuous-time tau-GRU and the solution-map Lipschitz bound.

/// h' = -h + u(h, x) + a(h, x) * z(h(t - tau), x) with
/// u = tanh(W1 h + U1 x + b1), z = tanh(W2 h_tau + U2 x + b2),
/// a = sigmoid(W4 h + U4 x + b4).
inline Rhs continuous_taugru_rhs(const CellParams& params, InputFn x) {
  params.validate();
  return [params, x = std::move(x)](double t, const Vector& h, const Vector& hd) {
    const Vector xt = x(t);
    Vector pre_u = params.b1, pre_z = params.b2, pre_a = params.b4;
    matvec_acc(params.W1, h, pre_u);
    matvec_acc(params.U1, xt, pre_u);
    matvec_acc(params.W2, hd, pre_z);
    matvec_acc(params.U2, xt, pre_z);
    matvec_acc(params.W4, h, pre_a);
    matvec_acc(params.U4, xt, pre_a);
    tanh_inplace(pre_u.data(), pre_u.size());
    tanh_inplace(pre_z.data(), pre_z.size());
    sigmoid_inplace(pre_a.data(), pre_a.size());
    Vector out(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
      out[i] = -h[i] + pre_u[i] + pre_a[i] * pre_z[i];
    }
    return out;
  };
}

struct SegmentCheck {
  double t = 0.0;
  double distance = 0.0;  // sup_{s in [t - tau, t]} |h_phi(s) - h_psi(s)|
  double bound = 0.0;     // |phi - psi| e^{K (t - t0)}
};

struct LipschitzReport {
  double K = 0.0;
  double initial_distance = 0.0;
  double slack = 0.0;
  std::vector<SegmentCheck> checks;
  std::size_t violations = 0;
  double worst_ratio = 0.0;  // max distance / (bound + slack)
  bool holds() const { return violations == 0; }
};

struct ContinuousRun {
  DenseSolution phi;
  DenseSolution psi;
  LipschitzReport report;
};

/// K = 1 + |W1| + |W2| + |W4| / 4 in operator 2-norms.
inline double lipschitz_constant(const CellParams& params) {
  return 1.0 + operator_norm(params.W1) + operator_norm(params.W2) +
         0.25 * operator_norm(params.W4);
}

namespace detail {

inline double distance_at(const DenseSolution& a, const DenseSolution& b,
                          double t) {
  const Vector va = a.eval(t), vb = b.eval(t);
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += (va[i] - vb[i]) * (va[i] - vb[i]);
  return std::sqrt(s);
}

/// Sup over a segment, sampled on grid nodes, initial-function samples on the
/// same spacing, and the segment end points.
inline double segment_distance(const DenseSolution& a, const DenseSolution& b,
                               double t_lo, double t_hi) {
  double best = std::max(distance_at(a, b, t_lo), distance_at(a, b, t_hi));
  const double dt = a.dt();
  const double start = std::ceil((t_lo - a.t0()) / dt - 1e-9);
  for (double k = start;; k += 1.0) {
    const double t = a.t0() + k * dt;
    if (t > t_hi + 1e-12) break;
    best = std::max(best, distance_at(a, b, t));
  }
  return best;
}

}  // namespace detail

/// Integrates the continuous tau-GRU (RK4) from both initial functions on
/// [t0, t_end] and checks the segment distance at every multiple of tau.
inline ContinuousRun integrate_continuous_taugru(
    const CellParams& params, const InputFn& x, const InitialFn& phi,
    const InitialFn& psi, double tau, double t_end, double dt, double t0 = 0.0,
    double slack = 1e-6) {
  if (!(tau > 0.0)) throw std::invalid_argument("continuous tau-GRU: tau must be > 0");
  DdeProblem p;
  p.rhs = continuous_taugru_rhs(params, x);
  p.tau = tau;
  p.t0 = t0;
  p.t_end = t_end;
  p.dt = dt;
  p.initial_fn = phi;
  DenseSolution sol_phi = integrate(p, Scheme::RK4);
  p.initial_fn = psi;
  DenseSolution sol_psi = integrate(p, Scheme::RK4);

  LipschitzReport rep;
  rep.K = lipschitz_constant(params);
  rep.slack = slack;
  rep.initial_distance = detail::segment_distance(sol_phi, sol_psi, t0 - tau, t0);
  const double t_stop = std::min(t_end, sol_phi.t_last());
  for (double j = 0.0;; j += 1.0) {
    const double t = t0 + j * tau;
    if (t > t_stop + 1e-9 * tau) break;
    SegmentCheck c;
    c.t = std::min(t, t_stop);
    c.distance = detail::segment_distance(sol_phi, sol_psi, c.t - tau, c.t);
    c.bound = rep.initial_distance * std::exp(rep.K * (c.t - t0));
    if (c.distance > c.bound + slack) ++rep.violations;
    rep.worst_ratio = std::max(rep.worst_ratio, c.distance / (c.bound + slack));
    rep.checks.push_back(c);
  }
  return {std::move(sol_phi), std::move(sol_psi), std::move(rep)};
}

}  // namespace taurnn::dde
