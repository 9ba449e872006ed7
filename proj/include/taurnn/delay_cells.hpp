#pragma once

// Forward dynamics of the delay-gated recurrent cells.
//
// Discrete update (delta t = 1, delay m steps, l = n - m):
//
//   u_n = tanh(W1 h_n + U1 x_n + b1)        instantaneous unit
//   z_n = tanh(W2 h_l + U2 x_n + b2)        delayed unit
//   g_n = sigmoid(W3 h_n + U3 x_n + b3)     time-warp gate
//   a_n = sigmoid(W4 h_n + U4 x_n + b4)     feedback weighting
//   h_{n+1} = (1 - g_n) h_n + g_n (beta u_n + alpha a_n z_n)
//
// with h_n = 0 for n = -m..0. The simple delay GRU replaces the bracket by
// tanh(W1 h_n + W2 h_l + U1 x_n + b1); the linear cell is
// h_{n+1} = W1 h_n + W2 h_l + U1 x_n + b1.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "taurnn/numerics.hpp"
#include "taurnn/rng.hpp"

namespace taurnn {

enum class CellKind : std::int64_t {
  TauGru = 0,
  SimpleDelayGru = 1,
  LinearDelayed = 2,
};

inline std::string_view to_string(CellKind k) {
  switch (k) {
    case CellKind::TauGru: return "tau_gru";
    case CellKind::SimpleDelayGru: return "simple_delay_gru";
    case CellKind::LinearDelayed: return "linear";
  }
  return "unknown";
}

inline CellKind cell_kind_from_string(std::string_view s) {
  if (s == "tau_gru") return CellKind::TauGru;
  if (s == "simple_delay_gru") return CellKind::SimpleDelayGru;
  if (s == "linear") return CellKind::LinearDelayed;
  throw std::invalid_argument("unknown cell kind '" + std::string(s) + "'");
}

struct CellVariant {
  CellKind kind = CellKind::TauGru;
  double alpha = 1.0;
  double beta = 1.0;
  bool use_weighting_a = true;
  std::size_t delay_m = 0;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0) || !(beta >= 0.0 && beta <= 1.0)) {
      throw std::invalid_argument("CellVariant: alpha and beta must be in [0,1]");
    }
  }
  bool operator==(const CellVariant&) const = default;
};

/// Learnable weights of a cell. One bias vector per gate; the decoder is
/// y = V h + c. Also used as the gradient container (ParamGrads).
struct CellParams {
  std::size_t d = 0, p = 0, q = 0;
  Matrix W1, W2, W3, W4;  // d x d
  Matrix U1, U2, U3, U4;  // d x p
  Vector b1, b2, b3, b4;  // d
  Matrix V;               // q x d
  Vector c;               // q

  static CellParams zeros(std::size_t d, std::size_t p, std::size_t q) {
    CellParams cp;
    cp.d = d;
    cp.p = p;
    cp.q = q;
    for (Matrix* w : {&cp.W1, &cp.W2, &cp.W3, &cp.W4}) *w = Matrix(d, d);
    for (Matrix* u : {&cp.U1, &cp.U2, &cp.U3, &cp.U4}) *u = Matrix(d, p);
    for (Vector* b : {&cp.b1, &cp.b2, &cp.b3, &cp.b4}) *b = Vector(d);
    cp.V = Matrix(q, d);
    cp.c = Vector(q);
    return cp;
  }

  /// 4d^2 + 4dp + 4d + qd + q
  std::size_t param_count() const {
    std::size_t n = 0;
    for_each_block([&](std::string_view, std::span<const double> s) {
      n += s.size();
    });
    return n;
  }

  /// Visits every parameter block in serialization order.
  template <class Fn>
  void for_each_block(Fn&& fn) {
    fn("W1", W1.span()); fn("W2", W2.span());
    fn("W3", W3.span()); fn("W4", W4.span());
    fn("U1", U1.span()); fn("U2", U2.span());
    fn("U3", U3.span()); fn("U4", U4.span());
    fn("b1", b1.span()); fn("b2", b2.span());
    fn("b3", b3.span()); fn("b4", b4.span());
    fn("V", V.span());   fn("c", c.span());
  }
  template <class Fn>
  void for_each_block(Fn&& fn) const {
    fn("W1", W1.span()); fn("W2", W2.span());
    fn("W3", W3.span()); fn("W4", W4.span());
    fn("U1", U1.span()); fn("U2", U2.span());
    fn("U3", U3.span()); fn("U4", U4.span());
    fn("b1", b1.span()); fn("b2", b2.span());
    fn("b3", b3.span()); fn("b4", b4.span());
    fn("V", V.span());   fn("c", c.span());
  }

  void validate() const {
    auto check = [&](const Matrix& m, std::size_t r, std::size_t cc,
                     const char* name) {
      if (m.rows() != r || m.cols() != cc) {
        throw ShapeError(std::string("CellParams: ") + name + " is " +
                         shape_string(m) + ", expected " + std::to_string(r) +
                         "x" + std::to_string(cc));
      }
    };
    auto check_v = [&](const Vector& v, std::size_t n, const char* name) {
      if (v.size() != n) {
        throw ShapeError(std::string("CellParams: ") + name + " has length " +
                         std::to_string(v.size()) + ", expected " +
                         std::to_string(n));
      }
    };
    if (d == 0 || p == 0 || q == 0) {
      throw ShapeError("CellParams: d, p, q must be positive");
    }
    check(W1, d, d, "W1"); check(W2, d, d, "W2");
    check(W3, d, d, "W3"); check(W4, d, d, "W4");
    check(U1, d, p, "U1"); check(U2, d, p, "U2");
    check(U3, d, p, "U3"); check(U4, d, p, "U4");
    check_v(b1, d, "b1"); check_v(b2, d, "b2");
    check_v(b3, d, "b3"); check_v(b4, d, "b4");
    check(V, q, d, "V");
    check_v(c, q, "c");
  }

  bool operator==(const CellParams&) const = default;
};

using ParamGrads = CellParams;

/// Weights and input maps drawn U(-1/sqrt(d), 1/sqrt(d)), decoder likewise,
/// biases zero. Deterministic in seed.
inline CellParams init_params(std::size_t d, std::size_t p, std::size_t q,
                              std::uint64_t seed) {
  if (d == 0 || p == 0 || q == 0) {
    throw std::invalid_argument("init_params: d, p, q must be >= 1");
  }
  CellParams cp = CellParams::zeros(d, p, q);
  SplitMix64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (Matrix* m : {&cp.W1, &cp.W2, &cp.W3, &cp.W4, &cp.U1, &cp.U2, &cp.U3,
                    &cp.U4, &cp.V}) {
    for (double& x : m->span()) x = rng.uniform(-bound, bound);
  }
  return cp;
}

/// Number of parameters that influence the output for the given variant
/// (dead subgraphs excluded).
inline std::size_t effective_param_count(const CellVariant& v, std::size_t d,
                                         std::size_t p, std::size_t q) {
  const std::size_t gate = d * d + d * p + d;  // one W, U, b triple
  const std::size_t decoder = q * d + q;
  switch (v.kind) {
    case CellKind::LinearDelayed:
      return 2 * d * d + d * p + d + decoder;
    case CellKind::SimpleDelayGru:
      // candidate: W1, W2, U1, b1; gate: W3, U3, b3
      return 2 * d * d + d * p + d + gate + decoder;
    case CellKind::TauGru: {
      std::size_t n = gate + decoder;          // g
      if (v.beta != 0.0) n += gate;            // u
      if (v.alpha != 0.0) {
        n += gate;                             // z
        if (v.use_weighting_a) n += gate;      // a
      }
      return n;
    }
  }
  return 0;
}

/// Ring buffer of the last delay_m + 1 hidden states. lookup(j) returns
/// h_{n-j}; slots before step 0 hold the initial function value.
class HiddenHistory {
 public:
  HiddenHistory(std::size_t delay_m, std::size_t d)
      : ring_(delay_m + 1, Vector(d)) {}

  /// Constant initial function h_n = h0 for n = -m..0.
  HiddenHistory(std::size_t delay_m, const Vector& h0)
      : ring_(delay_m + 1, h0) {}

  std::size_t capacity() const noexcept { return ring_.size(); }
  std::size_t delay() const noexcept { return ring_.size() - 1; }
  std::size_t dim() const noexcept { return ring_.front().size(); }
  std::size_t step_count() const noexcept { return step_count_; }

  const Vector& lookup(std::size_t j) const {
    if (j >= ring_.size()) {
      throw std::out_of_range("HiddenHistory: lookup(" + std::to_string(j) +
                              ") beyond delay " + std::to_string(delay()));
    }
    return ring_[(write_index_ + ring_.size() - j) % ring_.size()];
  }
  const Vector& current() const { return lookup(0); }
  const Vector& delayed() const { return lookup(delay()); }

  /// Overwrites the slot holding h_n (used to seed a non-zero h_0).
  void set_current(Vector h) {
    if (h.size() != dim()) throw ShapeError("HiddenHistory: dimension mismatch");
    ring_[write_index_] = std::move(h);
  }

  void push(Vector h) {
    if (h.size() != dim()) throw ShapeError("HiddenHistory: dimension mismatch");
    write_index_ = (write_index_ + 1) % ring_.size();
    ring_[write_index_] = std::move(h);
    ++step_count_;
  }

 private:
  std::vector<Vector> ring_;
  std::size_t write_index_ = 0;
  std::size_t step_count_ = 0;
};

/// Everything one step computes. For the simple delay GRU the candidate
/// tanh(...) is stored in u/pre_u and z, a stay empty; the linear cell stores
/// its affine map in u/pre_u.
struct StepActivations {
  Vector u, z, g, a;
  Vector pre_u, pre_z, pre_g, pre_a;
  Vector h_in, h_delay, h_out;
};

/// Forward weights rearranged so that each component of h_n, h_{n-m} and x_n
/// updates a contiguous run of pre-activations (an axpy instead of a
/// row-wise reduction). Pre-activation blocks are ordered u, g, a, z for the
/// tau-GRU, u, g for the simple delay GRU and u for the linear cell.
struct ForwardWeights {
  CellKind kind = CellKind::TauGru;
  std::size_t d = 0, p = 0, blocks = 0;
  Matrix state_t;        // d x (blocks_from_state * d)
  Matrix delay_t;        // d x d, feeds block delay_block
  std::size_t delay_block = 0;
  Matrix input_t;        // p x (blocks * d)
  std::vector<double> bias;  // blocks * d

  static ForwardWeights pack(const CellParams& params, CellKind kind) {
    params.validate();
    ForwardWeights fw;
    fw.kind = kind;
    fw.d = params.d;
    fw.p = params.p;
    std::vector<const Matrix*> ws, us;
    std::vector<const Vector*> bs;
    const Matrix* wd = &params.W2;
    switch (kind) {
      case CellKind::TauGru:
        ws = {&params.W1, &params.W3, &params.W4};
        us = {&params.U1, &params.U3, &params.U4, &params.U2};
        bs = {&params.b1, &params.b3, &params.b4, &params.b2};
        fw.delay_block = 3;
        break;
      case CellKind::SimpleDelayGru:
        ws = {&params.W1, &params.W3};
        us = {&params.U1, &params.U3};
        bs = {&params.b1, &params.b3};
        fw.delay_block = 0;
        break;
      case CellKind::LinearDelayed:
        ws = {&params.W1};
        us = {&params.U1};
        bs = {&params.b1};
        fw.delay_block = 0;
        break;
    }
    const std::size_t d = params.d;
    fw.blocks = us.size();
    fw.state_t = Matrix(d, ws.size() * d);
    for (std::size_t k = 0; k < ws.size(); ++k)
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) fw.state_t(c, k * d + r) = (*ws[k])(r, c);
    fw.delay_t = transpose(*wd);
    fw.input_t = Matrix(params.p, fw.blocks * d);
    for (std::size_t k = 0; k < us.size(); ++k)
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < params.p; ++c)
          fw.input_t(c, k * d + r) = (*us[k])(r, c);
    for (const Vector* b : bs) fw.bias.insert(fw.bias.end(), b->begin(), b->end());
    return fw;
  }
};

namespace detail {

/// acc[0:len] += sum_c v[c] * rows(c)[0:len]
inline void axpy_rows(const Matrix& rows_t, const double* v, double* acc) {
  const std::size_t len = rows_t.cols();
  for (std::size_t c = 0; c < rows_t.rows(); ++c) {
    const double s = v[c];
    const double* row = rows_t.data() + c * len;
#pragma omp simd
    for (std::size_t j = 0; j < len; ++j) acc[j] += s * row[j];
  }
}

inline std::vector<double> pre_activations(const ForwardWeights& fw,
                                           const Vector& h_in,
                                           const Vector& h_delay,
                                           const Vector& x) {
  std::vector<double> pre = fw.bias;
  axpy_rows(fw.state_t, h_in.data(), pre.data());
  axpy_rows(fw.delay_t, h_delay.data(), pre.data() + fw.delay_block * fw.d);
  axpy_rows(fw.input_t, x.data(), pre.data());
  return pre;
}

inline Vector block(const std::vector<double>& v, std::size_t k, std::size_t d) {
  return Vector(std::vector<double>(v.begin() + k * d, v.begin() + (k + 1) * d));
}

inline void check_step_shapes(const ForwardWeights& fw, const Vector& x,
                              const HiddenHistory& hist) {
  if (x.size() != fw.p) {
    throw ShapeError("step: input length " + std::to_string(x.size()) +
                     " != p = " + std::to_string(fw.p));
  }
  if (hist.dim() != fw.d) {
    throw ShapeError("step: history dimension " + std::to_string(hist.dim()) +
                     " != d = " + std::to_string(fw.d));
  }
}

}  // namespace detail

/// One step of any cell kind from packed weights; pushes h_{n+1} onto hist.
inline StepActivations step_cell(const ForwardWeights& fw,
                                 const CellVariant& variant, const Vector& x,
                                 HiddenHistory& hist) {
  detail::check_step_shapes(fw, x, hist);
  if (variant.kind != fw.kind) {
    throw std::invalid_argument("step_cell: weights packed for " +
                                std::string(to_string(fw.kind)));
  }
  const std::size_t d = fw.d;
  StepActivations s;
  s.h_in = hist.current();
  s.h_delay = hist.delayed();
  std::vector<double> pre = detail::pre_activations(fw, s.h_in, s.h_delay, x);
  switch (variant.kind) {
    case CellKind::TauGru: {
      if (hist.capacity() != variant.delay_m + 1) {
        throw std::invalid_argument("step_taugru: history capacity " +
                                    std::to_string(hist.capacity()) +
                                    " != delay_m + 1");
      }
      s.pre_u = detail::block(pre, 0, d);
      s.pre_g = detail::block(pre, 1, d);
      s.pre_a = detail::block(pre, 2, d);
      s.pre_z = detail::block(pre, 3, d);
      tanh_inplace(pre.data(), d);
      sigmoid_inplace(pre.data() + d, 2 * d);
      tanh_inplace(pre.data() + 3 * d, d);
      s.u = detail::block(pre, 0, d);
      s.g = detail::block(pre, 1, d);
      s.a = detail::block(pre, 2, d);
      s.z = detail::block(pre, 3, d);
      s.h_out = Vector(d);
      for (std::size_t i = 0; i < d; ++i) {
        const double weight = variant.use_weighting_a ? s.a[i] : 1.0;
        const double cand =
            variant.beta * s.u[i] + variant.alpha * weight * s.z[i];
        s.h_out[i] = (1.0 - s.g[i]) * s.h_in[i] + s.g[i] * cand;
      }
      break;
    }
    case CellKind::SimpleDelayGru: {
      s.pre_u = detail::block(pre, 0, d);
      s.pre_g = detail::block(pre, 1, d);
      tanh_inplace(pre.data(), d);
      sigmoid_inplace(pre.data() + d, d);
      s.u = detail::block(pre, 0, d);
      s.g = detail::block(pre, 1, d);
      s.h_out = Vector(d);
      for (std::size_t i = 0; i < d; ++i) {
        s.h_out[i] = (1.0 - s.g[i]) * s.h_in[i] + s.g[i] * s.u[i];
      }
      break;
    }
    case CellKind::LinearDelayed:
      s.pre_u = detail::block(pre, 0, d);
      s.u = s.pre_u;
      s.h_out = s.pre_u;
      break;
  }
  hist.push(s.h_out);
  return s;
}

/// Single tau-GRU step (packs the weights on every call).
inline StepActivations step_taugru(const CellParams& params,
                                   const CellVariant& variant, const Vector& x,
                                   HiddenHistory& hist) {
  CellVariant v = variant;
  v.kind = CellKind::TauGru;
  return step_cell(ForwardWeights::pack(params, CellKind::TauGru), v, x, hist);
}

/// Leaky-integrator delay GRU; delay taken from the history capacity.
inline StepActivations step_simple_delay_gru(const CellParams& params,
                                             const Vector& x,
                                             HiddenHistory& hist) {
  const CellVariant v{CellKind::SimpleDelayGru, 1.0, 1.0, true, hist.delay()};
  return step_cell(ForwardWeights::pack(params, v.kind), v, x, hist);
}

/// h_{n+1} = A h_n + B h_{n-m} + C u_n
inline Vector step_linear(const Matrix& A, const Matrix& B, const Matrix& C,
                          const Vector& u, HiddenHistory& hist) {
  if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows()) {
    throw ShapeError("step_linear: A " + shape_string(A) + ", B " +
                     shape_string(B) + " must be square and equal");
  }
  if (C.rows() != A.rows() || C.cols() != u.size() || hist.dim() != A.rows()) {
    throw ShapeError("step_linear: C " + shape_string(C) + " vs input " +
                     std::to_string(u.size()) + " and state " +
                     std::to_string(hist.dim()));
  }
  Vector h = matvec(A, hist.current());
  matvec_acc(B, hist.delayed(), h);
  matvec_acc(C, u, h);
  hist.push(h);
  return h;
}

/// Dispatches one step for any cell kind.
inline StepActivations step_cell(const CellParams& params,
                                 const CellVariant& variant, const Vector& x,
                                 HiddenHistory& hist) {
  return step_cell(ForwardWeights::pack(params, variant.kind), variant, x,
                   hist);
}
inline Vector decode(const CellParams& params, const Vector& h) {
  Vector y = params.c;
  matvec_acc(params.V, h, y);
  return y;
}

/// Recorded forward pass: steps[n] maps h_n (= steps[n].h_in) to h_{n+1}.
struct BpttTape {
  std::vector<StepActivations> steps;
  std::vector<Vector> inputs;
  CellVariant variant;

  std::size_t size() const noexcept { return steps.size(); }
  /// h_n for 0 <= n <= size().
  const Vector& state(std::size_t n) const {
    return n == 0 ? steps.front().h_in : steps[n - 1].h_out;
  }
};

struct SequenceRun {
  std::vector<Vector> hs;  // h_1 .. h_N
  std::vector<Vector> ys;  // ys[n] = V h_{n+1} + c
  BpttTape tape;
};

/// Runs the cell over xs from the zero initial function. If h0 is given it
/// replaces h_0 only (earlier history slots stay zero).
inline SequenceRun run_sequence(const CellParams& params,
                                const CellVariant& variant,
                                std::span<const Vector> xs,
                                const Vector* h0 = nullptr) {
  if (xs.empty()) throw std::invalid_argument("run_sequence: empty input");
  variant.validate();
  HiddenHistory hist(variant.delay_m, params.d);
  if (h0 != nullptr) hist.set_current(*h0);
  SequenceRun run;
  run.hs.reserve(xs.size());
  run.ys.reserve(xs.size());
  run.tape.steps.reserve(xs.size());
  run.tape.inputs.assign(xs.begin(), xs.end());
  run.tape.variant = variant;
  const ForwardWeights fw = ForwardWeights::pack(params, variant.kind);
  for (const Vector& x : xs) {
    StepActivations s = step_cell(fw, variant, x, hist);
    run.hs.push_back(s.h_out);
    run.ys.push_back(decode(params, s.h_out));
    run.tape.steps.push_back(std::move(s));
  }
  return run;
}

/// Forward pass without a tape; returns the decoded outputs.
inline std::vector<Vector> predict(const CellParams& params,
                                   const CellVariant& variant,
                                   std::span<const Vector> xs) {
  HiddenHistory hist(variant.delay_m, params.d);
  std::vector<Vector> ys;
  ys.reserve(xs.size());
  const ForwardWeights fw = ForwardWeights::pack(params, variant.kind);
  for (const Vector& x : xs) {
    StepActivations s = step_cell(fw, variant, x, hist);
    ys.push_back(decode(params, s.h_out));
  }
  return ys;
}

// ---------------------------------------------------------------------------
// Parameter files: six little-endian int64 header words
// (magic, version, d, p, q, kind) followed by every parameter as a
// little-endian IEEE-754 binary64 in for_each_block order.

inline constexpr std::int64_t kParamMagic = 0x4E4E5255415400LL;  // "\0TAURNN"
inline constexpr std::int64_t kParamVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_le(std::ostream& os, std::uint64_t bits) {
  std::array<char, 8> buf{};
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(buf.data(), 8);
}

inline std::uint64_t get_le(std::istream& is) {
  std::array<unsigned char, 8> buf{};
  is.read(reinterpret_cast<char*>(buf.data()), 8);
  if (!is) throw FormatError("parameter file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return bits;
}

}  // namespace detail

inline void write_params(std::ostream& os, const CellParams& params,
                         CellKind kind) {
  params.validate();
  for (std::int64_t w : {kParamMagic, kParamVersion,
                         static_cast<std::int64_t>(params.d),
                         static_cast<std::int64_t>(params.p),
                         static_cast<std::int64_t>(params.q),
                         static_cast<std::int64_t>(kind)}) {
    detail::put_le(os, static_cast<std::uint64_t>(w));
  }
  params.for_each_block([&](std::string_view, std::span<const double> s) {
    for (double x : s) detail::put_le(os, std::bit_cast<std::uint64_t>(x));
  });
}

struct LoadedParams {
  CellParams params;
  CellKind kind;
};

inline LoadedParams read_params(std::istream& is) {
  std::array<std::int64_t, 6> header{};
  for (auto& h : header) h = static_cast<std::int64_t>(detail::get_le(is));
  if (header[0] != kParamMagic) throw FormatError("bad parameter file magic");
  if (header[1] != kParamVersion) {
    throw FormatError("unsupported parameter file version " +
                      std::to_string(header[1]));
  }
  if (header[2] <= 0 || header[3] <= 0 || header[4] <= 0 || header[5] < 0 ||
      header[5] > 2) {
    throw FormatError("invalid parameter file header");
  }
  LoadedParams out{CellParams::zeros(static_cast<std::size_t>(header[2]),
                                     static_cast<std::size_t>(header[3]),
                                     static_cast<std::size_t>(header[4])),
                   static_cast<CellKind>(header[5])};
  out.params.for_each_block([&](std::string_view, std::span<double> s) {
    for (double& x : s) x = std::bit_cast<double>(detail::get_le(is));
  });
  return out;
}

inline void save_params(const std::string& path, const CellParams& params,
                        CellKind kind) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_params(os, params, kind);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline LoadedParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_params(is);
}

}  // namespace taurnn
