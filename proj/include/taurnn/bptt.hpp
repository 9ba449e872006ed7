#pragma once

// Reverse-mode differentiation over a recorded forward pass.
//
// Step n reads h_n through the gate paths and h_{n-m} through the delayed
// unit, so the adjoint of h_k collects a contribution from step k and, when
// k + m is inside the sequence, a jump-ahead contribution from step k + m.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taurnn/delay_cells.hpp"
#include "taurnn/numerics.hpp"

namespace taurnn {

namespace detail {

inline Vector zeros_like(const Vector& v) { return Vector(v.size()); }

inline bool is_zero(const Vector& v) {
  for (double x : v)
    if (x != 0.0) return false;
  return true;
}

/// Pulls the adjoint `delta` of h_{j+1} back through step j.
/// adj_delay and adj_x may be null when those adjoints are not needed;
/// grads may be null when parameter gradients are not needed.
inline void backprop_step(const StepActivations& s, const Vector& x,
                          const CellParams& params, const CellVariant& v,
                          const Vector& delta, Vector& adj_in,
                          Vector* adj_delay, Vector* adj_x,
                          ParamGrads* grads) {
  const std::size_t d = params.d;
  switch (v.kind) {
    case CellKind::TauGru: {
      Vector dpre_u(d), dpre_z(d), dpre_g(d), dpre_a(d);
      for (std::size_t i = 0; i < d; ++i) {
        const double w = v.use_weighting_a ? s.a[i] : 1.0;
        const double cand = v.beta * s.u[i] + v.alpha * w * s.z[i];
        adj_in[i] += (1.0 - s.g[i]) * delta[i];
        const double dg = delta[i] * (cand - s.h_in[i]);
        const double dc = delta[i] * s.g[i];
        const double du = v.beta * dc;
        const double dz = v.alpha * w * dc;
        const double da = v.use_weighting_a ? v.alpha * s.z[i] * dc : 0.0;
        dpre_u[i] = du * (1.0 - s.u[i] * s.u[i]);
        dpre_z[i] = dz * (1.0 - s.z[i] * s.z[i]);
        dpre_g[i] = dg * s.g[i] * (1.0 - s.g[i]);
        dpre_a[i] = da * s.a[i] * (1.0 - s.a[i]);
      }
      matvec_transposed_acc(params.W1, dpre_u, adj_in);
      matvec_transposed_acc(params.W3, dpre_g, adj_in);
      matvec_transposed_acc(params.W4, dpre_a, adj_in);
      if (adj_delay != nullptr) {
        matvec_transposed_acc(params.W2, dpre_z, *adj_delay);
      }
      if (adj_x != nullptr) {
        matvec_transposed_acc(params.U1, dpre_u, *adj_x);
        matvec_transposed_acc(params.U2, dpre_z, *adj_x);
        matvec_transposed_acc(params.U3, dpre_g, *adj_x);
        matvec_transposed_acc(params.U4, dpre_a, *adj_x);
      }
      if (grads != nullptr) {
        outer_acc(grads->W1, dpre_u, s.h_in);
        outer_acc(grads->W2, dpre_z, s.h_delay);
        outer_acc(grads->W3, dpre_g, s.h_in);
        outer_acc(grads->W4, dpre_a, s.h_in);
        outer_acc(grads->U1, dpre_u, x);
        outer_acc(grads->U2, dpre_z, x);
        outer_acc(grads->U3, dpre_g, x);
        outer_acc(grads->U4, dpre_a, x);
        for (std::size_t i = 0; i < d; ++i) {
          grads->b1[i] += dpre_u[i];
          grads->b2[i] += dpre_z[i];
          grads->b3[i] += dpre_g[i];
          grads->b4[i] += dpre_a[i];
        }
      }
      return;
    }
    case CellKind::SimpleDelayGru: {
      Vector dpre_u(d), dpre_g(d);
      for (std::size_t i = 0; i < d; ++i) {
        adj_in[i] += (1.0 - s.g[i]) * delta[i];
        const double dg = delta[i] * (s.u[i] - s.h_in[i]);
        const double du = delta[i] * s.g[i];
        dpre_u[i] = du * (1.0 - s.u[i] * s.u[i]);
        dpre_g[i] = dg * s.g[i] * (1.0 - s.g[i]);
      }
      matvec_transposed_acc(params.W1, dpre_u, adj_in);
      matvec_transposed_acc(params.W3, dpre_g, adj_in);
      if (adj_delay != nullptr) {
        matvec_transposed_acc(params.W2, dpre_u, *adj_delay);
      }
      if (adj_x != nullptr) {
        matvec_transposed_acc(params.U1, dpre_u, *adj_x);
        matvec_transposed_acc(params.U3, dpre_g, *adj_x);
      }
      if (grads != nullptr) {
        outer_acc(grads->W1, dpre_u, s.h_in);
        outer_acc(grads->W2, dpre_u, s.h_delay);
        outer_acc(grads->W3, dpre_g, s.h_in);
        outer_acc(grads->U1, dpre_u, x);
        outer_acc(grads->U3, dpre_g, x);
        for (std::size_t i = 0; i < d; ++i) {
          grads->b1[i] += dpre_u[i];
          grads->b3[i] += dpre_g[i];
        }
      }
      return;
    }
    case CellKind::LinearDelayed: {
      matvec_transposed_acc(params.W1, delta, adj_in);
      if (adj_delay != nullptr) {
        matvec_transposed_acc(params.W2, delta, *adj_delay);
      }
      if (adj_x != nullptr) matvec_transposed_acc(params.U1, delta, *adj_x);
      if (grads != nullptr) {
        outer_acc(grads->W1, delta, s.h_in);
        outer_acc(grads->W2, delta, s.h_delay);
        outer_acc(grads->U1, delta, x);
        for (std::size_t i = 0; i < d; ++i) grads->b1[i] += delta[i];
      }
      return;
    }
  }
}

inline void check_tape(const BpttTape& tape, const CellParams& params) {
  params.validate();
  if (tape.steps.size() != tape.inputs.size()) {
    throw std::invalid_argument("tape: steps/inputs length mismatch");
  }
  if (tape.steps.empty()) throw std::invalid_argument("tape: empty");
  if (tape.steps.front().h_in.size() != params.d ||
      tape.inputs.front().size() != params.p) {
    throw ShapeError("tape: recorded shapes do not match params (d=" +
                     std::to_string(params.d) + ", p=" +
                     std::to_string(params.p) + ")");
  }
}

}  // namespace detail

/// dLoss/dtheta for every parameter. loss_grads[n] is dLoss/dy_n, where
/// y_n = V h_{n+1} + c.
inline ParamGrads backward(const BpttTape& tape, const CellParams& params,
                           std::span<const Vector> loss_grads) {
  detail::check_tape(tape, params);
  const std::size_t n_steps = tape.size();
  if (loss_grads.size() != n_steps) {
    throw std::invalid_argument("backward: " +
                                std::to_string(loss_grads.size()) +
                                " loss gradients for a tape of " +
                                std::to_string(n_steps) + " steps");
  }
  ParamGrads grads = CellParams::zeros(params.d, params.p, params.q);
  std::vector<Vector> adj(n_steps + 1, Vector(params.d));
  for (std::size_t n = 0; n < n_steps; ++n) {
    const Vector& lg = loss_grads[n];
    if (lg.size() != params.q) {
      throw ShapeError("backward: loss gradient length " +
                       std::to_string(lg.size()) + " != q");
    }
    if (detail::is_zero(lg)) continue;
    outer_acc(grads.V, lg, tape.steps[n].h_out);
    for (std::size_t i = 0; i < params.q; ++i) grads.c[i] += lg[i];
    matvec_transposed_acc(params.V, lg, adj[n + 1]);
  }
  const std::size_t m = tape.variant.delay_m;
  for (std::size_t j = n_steps; j-- > 0;) {
    const Vector& delta = adj[j + 1];
    if (detail::is_zero(delta)) continue;
    Vector* adj_delay = j >= m ? &adj[j - m] : nullptr;
    detail::backprop_step(tape.steps[j], tape.inputs[j], params, tape.variant,
                          delta, adj[j], adj_delay, nullptr, &grads);
  }
  return grads;
}

/// Total derivative dh_n/dh_k over the full unrolled graph (step and delay
/// paths), 0 <= k < n <= tape length.
inline Matrix state_jacobian(const BpttTape& tape, const CellParams& params,
                             std::size_t n, std::size_t k) {
  detail::check_tape(tape, params);
  if (!(k < n && n <= tape.size())) {
    throw std::out_of_range("state_jacobian: need 0 <= k < n <= " +
                            std::to_string(tape.size()) + ", got n=" +
                            std::to_string(n) + " k=" + std::to_string(k));
  }
  const std::size_t d = params.d;
  const std::size_t m = tape.variant.delay_m;
  Matrix jac(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    std::vector<Vector> adj(n - k + 1, Vector(d));  // adj[i] ~ h_{k+i}
    adj[n - k][r] = 1.0;
    for (std::size_t j = n; j-- > k;) {
      const Vector& delta = adj[j + 1 - k];
      if (detail::is_zero(delta)) continue;
      Vector* adj_delay =
          (j >= m && j - m >= k) ? &adj[j - m - k] : nullptr;
      detail::backprop_step(tape.steps[j], tape.inputs[j], params,
                            tape.variant, delta, adj[j - k], adj_delay,
                            nullptr, nullptr);
    }
    for (std::size_t c = 0; c < d; ++c) jac(r, c) = adj[0][c];
  }
  return jac;
}

/// dh_n/dx_i (d x p) for i < n <= tape length.
inline Matrix input_jacobian(const BpttTape& tape, const CellParams& params,
                             std::size_t n, std::size_t i) {
  detail::check_tape(tape, params);
  if (!(i < n && n <= tape.size())) {
    throw std::out_of_range("input_jacobian: need i < n <= tape length");
  }
  const std::size_t d = params.d;
  const std::size_t m = tape.variant.delay_m;
  Matrix jac(d, params.p);
  for (std::size_t r = 0; r < d; ++r) {
    std::vector<Vector> adj(n - i + 1, Vector(d));  // adj[t] ~ h_{i+t}
    adj[n - i][r] = 1.0;
    Vector adj_x(params.p);
    for (std::size_t j = n; j-- > i;) {
      const Vector& delta = adj[j + 1 - i];
      if (detail::is_zero(delta)) continue;
      Vector* adj_delay =
          (j >= m && j - m >= i) ? &adj[j - m - i] : nullptr;
      detail::backprop_step(tape.steps[j], tape.inputs[j], params,
                            tape.variant, delta, adj[j - i], adj_delay,
                            j == i ? &adj_x : nullptr, nullptr);
    }
    for (std::size_t c = 0; c < params.p; ++c) jac(r, c) = adj_x[c];
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Finite-difference oracles.

using SequenceLoss = std::function<double(const std::vector<Vector>& ys)>;

/// Central differences (L(theta + h) - L(theta - h)) / 2h per scalar.
inline ParamGrads fd_gradient(const CellParams& params,
                              const CellVariant& variant,
                              std::span<const Vector> xs,
                              const SequenceLoss& loss, double h_step) {
  if (!(h_step > 0.0)) throw std::invalid_argument("fd_gradient: h_step <= 0");
  CellParams work = params;
  ParamGrads grads = CellParams::zeros(params.d, params.p, params.q);
  std::vector<std::span<double>> wblocks, gblocks;
  work.for_each_block(
      [&](std::string_view, std::span<double> s) { wblocks.push_back(s); });
  grads.for_each_block(
      [&](std::string_view, std::span<double> s) { gblocks.push_back(s); });
  for (std::size_t b = 0; b < wblocks.size(); ++b) {
    for (std::size_t i = 0; i < wblocks[b].size(); ++i) {
      const double orig = wblocks[b][i];
      wblocks[b][i] = orig + h_step;
      const double lp = loss(predict(work, variant, xs));
      wblocks[b][i] = orig - h_step;
      const double lm = loss(predict(work, variant, xs));
      wblocks[b][i] = orig;
      gblocks[b][i] = (lp - lm) / (2.0 * h_step);
    }
  }
  return grads;
}

/// h_0 .. h_N with `perturb` added to h_k right after it is formed.
inline std::vector<Vector> forward_states(const CellParams& params,
                                          const CellVariant& variant,
                                          std::span<const Vector> xs,
                                          std::size_t k,
                                          const Vector& perturb) {
  HiddenHistory hist(variant.delay_m, params.d);
  std::vector<Vector> hs;
  hs.reserve(xs.size() + 1);
  auto apply = [&](std::size_t idx) {
    if (idx != k) return;
    hist.set_current(axpy(1.0, perturb, hist.current()));
  };
  apply(0);
  hs.push_back(hist.current());
  const ForwardWeights fw = ForwardWeights::pack(params, variant.kind);
  for (std::size_t n = 0; n < xs.size(); ++n) {
    step_cell(fw, variant, xs[n], hist);
    apply(n + 1);
    hs.push_back(hist.current());
  }
  return hs;
}

/// Central-difference estimate of dh_n/dh_k.
inline Matrix fd_state_jacobian(const CellParams& params,
                                const CellVariant& variant,
                                std::span<const Vector> xs, std::size_t n,
                                std::size_t k, double h_step) {
  const std::size_t d = params.d;
  Matrix jac(d, d);
  for (std::size_t c = 0; c < d; ++c) {
    Vector e(d);
    e[c] = h_step;
    const Vector hp = forward_states(params, variant, xs, k, e)[n];
    e[c] = -h_step;
    const Vector hm = forward_states(params, variant, xs, k, e)[n];
    for (std::size_t r = 0; r < d; ++r) {
      jac(r, c) = (hp[r] - hm[r]) / (2.0 * h_step);
    }
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Closed-form input gradients of the linear delayed RNN
//   h_{n+1} = A h_n + B h_{n-m} + C u_n,  h = 0 on n = -m..0,
// valid for commuting A, B while at most one delay edge can be traversed.

/// dh_n/du_i. Valid ranges: m >= 1, 0 <= i < n, n <= 2m + 2.
inline Matrix prop1_oracle(const Matrix& A, const Matrix& B, const Matrix& C,
                           std::size_t m, std::size_t n, std::size_t i) {
  if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows() ||
      C.rows() != A.rows()) {
    throw ShapeError("prop1_oracle: A " + shape_string(A) + ", B " +
                     shape_string(B) + ", C " + shape_string(C));
  }
  if (inf_norm(matmul(A, B) - matmul(B, A)) > 1e-12) {
    throw std::invalid_argument("prop1_oracle: A and B do not commute");
  }
  if (m < 1) throw std::out_of_range("prop1_oracle: requires m >= 1");
  if (!(i < n && n <= 2 * m + 2)) {
    throw std::out_of_range("prop1_oracle: need i < n <= 2m+2 (n=" +
                            std::to_string(n) + ", i=" + std::to_string(i) +
                            ", m=" + std::to_string(m) + ")");
  }
  Matrix coeff = matrix_power(A, n - 1 - i);
  if (n >= m + 2) {
    const std::size_t j = n - m - 1;  // n = m + 1 + j, 1 <= j <= m + 1
    if (i + 1 <= j) {
      const std::size_t r = j - i;  // delta_{i, j-r}: r A^{r-1} B
      coeff = coeff + static_cast<double>(r) *
                          matmul(matrix_power(A, r - 1), B);
    }
  }
  return matmul(coeff, C);
}

// ---------------------------------------------------------------------------

struct GradNormBound {
  double observed = 0.0;
  double bound = 0.0;
  double epsilon = 0.0;
  double weight_sum = 0.0;  // |W1|inf + |W3|inf + |W4|inf / 4
  bool holds = false;
};

/// Checks |dh_n/dh_k|inf against
///   (1 + C - eps)^{n-k} + |W2|inf (1 + C - eps)^{n-k-1-m} [1 <= m <= n-k-1]
/// with eps the smallest gate value (g or a) recorded on the tape.
/// Supported for 1 <= n - k <= m + 1 and m >= 1.
inline GradNormBound grad_norm_bound_check(const BpttTape& tape,
                                           const CellParams& params,
                                           std::size_t n, std::size_t k) {
  if (tape.variant.kind != CellKind::TauGru) {
    throw std::invalid_argument("grad_norm_bound_check: tau-GRU tapes only");
  }
  const std::size_t m = tape.variant.delay_m;
  if (m < 1) {
    throw std::out_of_range("grad_norm_bound_check: requires delay m >= 1");
  }
  if (!(k < n && n - k <= m + 1)) {
    throw std::out_of_range("grad_norm_bound_check: need 1 <= n-k <= m+1 (n=" +
                            std::to_string(n) + ", k=" + std::to_string(k) +
                            ", m=" + std::to_string(m) + ")");
  }
  GradNormBound r;
  double eps = 1.0;
  for (const StepActivations& s : tape.steps) {
    for (double g : s.g) eps = std::min(eps, g);
    for (double a : s.a) eps = std::min(eps, a);
  }
  r.epsilon = eps;
  r.weight_sum = inf_norm(params.W1) + inf_norm(params.W3) +
                 0.25 * inf_norm(params.W4);
  const double rate = 1.0 + r.weight_sum - eps;
  const std::size_t gap = n - k;
  r.bound = std::pow(rate, static_cast<double>(gap));
  if (m <= gap - 1) {
    r.bound += inf_norm(params.W2) *
               std::pow(rate, static_cast<double>(gap - 1 - m));
  }
  r.observed = inf_norm(state_jacobian(tape, params, n, k));
  r.holds = r.observed <= r.bound;
  return r;
}

}  // namespace taurnn
