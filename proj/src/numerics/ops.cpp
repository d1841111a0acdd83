#include "codemix/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "codemix/errors.hpp"
#include "codemix/kernels/kernels.hpp"

namespace codemix::ops {
namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2 && t.rank() != 1) {
    throw DimensionError(std::string(op) + ": expected a matrix or vector, got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Adds g into the gradient of node id when it tracks gradients.
void accumulate(Tape& t, std::size_t id, const Tensor& g) {
  if (!t.requires_grad(id)) return;
  Tensor& dst = t.grad_buffer(id);
  K().add(dst.numel(), dst.data(), g.data(), dst.data());
}

// Last key index visible from query r, exclusive, saturating.
std::size_t visible_end(std::size_t r, std::size_t look_ahead, std::size_t T) {
  if (look_ahead >= T) return T;
  return std::min(T, r + look_ahead + 1);
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_string(av.shape()) + " * " +
                         shape_string(bv.shape()));
  }
  Tensor out({m, n});
  K().gemm_nn(m, n, k, av.data(), k, bv.data(), n, out.data(), n, false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, n, k](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.requires_grad(ia)) {
      // dA = G * B^T
      Tensor& ga = t.grad_buffer(ia);
      K().gemm_nt(m, k, n, g.data(), n, t.value(ib).data(), n, ga.data(), k, true);
    }
    if (t.requires_grad(ib)) {
      // dB = A^T * G
      Tensor& gb = t.grad_buffer(ib);
      K().gemm_tn(k, n, m, t.value(ia).data(), k, g.data(), n, gb.data(), n, true);
    }
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul_nt");
  require_rank2(bv, "matmul_nt");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ, " +
                         shape_string(av.shape()) + " * " +
                         shape_string(bv.shape()) + "^T");
  }
  Tensor out({m, n});
  K().gemm_nt(m, n, k, av.data(), k, bv.data(), k, out.data(), n, false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, n, k](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.requires_grad(ia)) {
      // dA = G * B
      Tensor& ga = t.grad_buffer(ia);
      K().gemm_nn(m, k, n, g.data(), n, t.value(ib).data(), k, ga.data(), k, true);
    }
    if (t.requires_grad(ib)) {
      // dB = G^T * A
      Tensor& gb = t.grad_buffer(ib);
      K().gemm_tn(n, k, m, g.data(), n, t.value(ia).data(), k, gb.data(), k, true);
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out(av.shape());
  K().add(out.numel(), av.data(), bv.data(), out.data());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    accumulate(t, ia, g);
    accumulate(t, ib, g);
  });
}

Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    accumulate(t, ia, g);
    if (t.requires_grad(ib)) K().axpy(g.numel(), -1.0, g.data(), t.grad_buffer(ib).data());
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  K().mul(out.numel(), av.data(), bv.data(), out.data());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const std::size_t n = g.numel();
    if (t.requires_grad(ia)) K().mul_acc(n, g.data(), t.value(ib).data(), t.grad_buffer(ia).data());
    if (t.requires_grad(ib)) K().mul_acc(n, g.data(), t.value(ia).data(), t.grad_buffer(ib).data());
  });
}

Var add_bias(Var a, Var bias) {
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  require_rank2(av, "add_bias");
  const std::size_t m = av.rows(), n = av.cols();
  if (bv.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) +
                         " does not match " + shape_string(av.shape()));
  }
  Tensor out(av.shape());
  for (std::size_t r = 0; r < m; ++r)
    K().add(n, av.data() + r * n, bv.data(), out.data() + r * n);
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().record(std::move(out), {a, bias}, [ia, ib, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    accumulate(t, ia, g);
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t r = 0; r < m; ++r) K().add(n, gb.data(), g.data() + r * n, gb.data());
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  K().scale(out.numel(), factor, out.data());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, factor](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.requires_grad(ia)) K().axpy(g.numel(), factor, g.data(), t.grad_buffer(ia).data());
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
  });
}

Var sigmoid(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * yv[i] * (1.0 - yv[i]);
  });
}

Var exp(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = std::exp(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad_buffer(self);
    K().mul_acc(g.numel(), g.data(), t.value(self).data(), t.grad_buffer(ia).data());
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor(Shape{}, std::vector<double>{s}), {a},
                         [ia](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const double g = t.grad_buffer(self)[0];
                           for (double& v : t.grad_buffer(ia).values()) v += g;
                         });
}

Var pick(Var a, std::size_t index) {
  const Tensor& x = a.value();
  if (index >= x.numel()) {
    throw DimensionError("pick: index " + std::to_string(index) +
                         " out of range for " + shape_string(x.shape()));
  }
  const std::size_t ia = a.id();
  return a.tape().record(Tensor(Shape{}, std::vector<double>{x[index]}), {a},
                         [ia, index](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           t.grad_buffer(ia)[index] += t.grad_buffer(self)[0];
                         });
}

Var logaddexp(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "logaddexp");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double x = av[i], y = bv[i];
    const double m = std::max(x, y);
    out[i] = m == -std::numeric_limits<double>::infinity()
                 ? m
                 : m + std::log1p(std::exp(-std::abs(x - y)));
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& z = t.value(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (z[i] == -std::numeric_limits<double>::infinity()) continue;
      if (t.requires_grad(ia)) t.grad_buffer(ia)[i] += g[i] * std::exp(x[i] - z[i]);
      if (t.requires_grad(ib)) t.grad_buffer(ib)[i] += g[i] * std::exp(y[i] - z[i]);
    }
  });
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  require_rank2(x, "softmax");
  if (x.numel() == 0) throw DimensionError("softmax: empty input");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = y.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      s += yr[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < n; ++j) yr[j] *= inv;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, m, n](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r) {
      const double* gr = g.data() + r * n;
      const double* yr = yv.data() + r * n;
      const double d = K().dot(n, gr, yr);
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += yr[j] * (gr[j] - d);
    }
  });
}

Var log_softmax(Var a) {
  const Tensor& x = a.value();
  require_rank2(x, "log_softmax");
  if (x.numel() == 0) throw DimensionError("log_softmax: empty input");
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = y.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(xr[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) yr[j] = xr[j] - lse;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, m, n](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r) {
      const double* gr = g.data() + r * n;
      const double* yr = yv.data() + r * n;
      double gs = 0.0;
      for (std::size_t j = 0; j < n; ++j) gs += gr[j];
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += gr[j] - std::exp(yr[j]) * gs;
    }
  });
}

Var row(Var a, std::size_t r) {
  const Tensor& x = a.value();
  require_rank2(x, "row");
  if (r >= x.rows()) {
    throw DimensionError("row: index " + std::to_string(r) + " out of range for " +
                         shape_string(x.shape()));
  }
  const std::size_t n = x.cols();
  Tensor out({1, n}, std::vector<double>(x.data() + r * n, x.data() + (r + 1) * n));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, r, n](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(ia);
    K().add(n, ga.data() + r * n, g.data(), ga.data() + r * n);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require_rank2(x, "slice_cols");
  if (begin > end || end > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_string(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols(), w = end - begin;
  Tensor out({m, w});
  for (std::size_t r = 0; r < m; ++r)
    std::copy_n(x.data() + r * n + begin, w, out.data() + r * w);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, m, n, w, begin](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r)
      K().add(w, ga.data() + r * n + begin, g.data() + r * w, ga.data() + r * n + begin);
  });
}

Var concat_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = rows.front().value().cols();
  std::size_t total = 0;
  for (const Var& v : rows) {
    require_rank2(v.value(), "concat_rows");
    if (v.value().cols() != n) {
      throw DimensionError("concat_rows: width mismatch " +
                           shape_string(rows.front().shape()) + " vs " +
                           shape_string(v.shape()));
    }
    total += v.value().rows();
  }
  Tensor out({total, n});
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& v : rows) {
    const Tensor& x = v.value();
    std::copy_n(x.data(), x.numel(), out.data() + off);
    ids.push_back(v.id());
    offsets.push_back(off);
    off += x.numel();
  }
  return rows.front().tape().record(
      std::move(out), rows, [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_buffer(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!t.requires_grad(ids[i])) continue;
          Tensor& gi = t.grad_buffer(ids[i]);
          K().add(gi.numel(), gi.data(), g.data() + offsets[i], gi.data());
        }
      });
}

Var outer_add_rows(Var e, Var q) {
  const Tensor& ev = e.value();
  const Tensor& qv = q.value();
  require_rank2(ev, "outer_add_rows");
  require_rank2(qv, "outer_add_rows");
  if (ev.cols() != qv.cols()) {
    throw DimensionError("outer_add_rows: width mismatch " +
                         shape_string(ev.shape()) + " vs " + shape_string(qv.shape()));
  }
  const std::size_t T = ev.rows(), P = qv.rows(), n = ev.cols();
  Tensor out({T * P, n});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t p = 0; p < P; ++p)
      K().add(n, ev.data() + t * n, qv.data() + p * n, out.data() + (t * P + p) * n);
  const std::size_t ie = e.id(), iq = q.id();
  return e.tape().record(std::move(out), {e, q}, [ie, iq, T, P, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.requires_grad(ie)) {
      Tensor& ge = t.grad_buffer(ie);
      for (std::size_t a = 0; a < T; ++a)
        for (std::size_t p = 0; p < P; ++p)
          K().add(n, ge.data() + a * n, g.data() + (a * P + p) * n, ge.data() + a * n);
    }
    if (t.requires_grad(iq)) {
      Tensor& gq = t.grad_buffer(iq);
      for (std::size_t a = 0; a < T; ++a)
        for (std::size_t p = 0; p < P; ++p)
          K().add(n, gq.data() + p * n, g.data() + (a * P + p) * n, gq.data() + p * n);
    }
  });
}

Var mask_future(Var scores, std::size_t look_ahead) {
  const Tensor& s = scores.value();
  if (s.rank() != 2 || s.rows() != s.cols()) {
    throw DimensionError("mask_future: expected a square matrix, got " +
                         shape_string(s.shape()));
  }
  const std::size_t T = s.rows();
  Tensor out = s;
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = visible_end(t, look_ahead, T); j < T; ++j) out.at(t, j) = kNegInf;
  const std::size_t ia = scores.id();
  return scores.tape().record(std::move(out), {scores}, [ia, T, look_ahead](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < T; ++r) {
      const std::size_t keep = visible_end(r, look_ahead, T);
      for (std::size_t j = 0; j < keep; ++j) ga.at(r, j) += g.at(r, j);
    }
  });
}

Var lstm_pointwise(Var gates, Var c) {
  const Tensor& gv = gates.value();
  const Tensor& cv = c.value();
  const std::size_t H = cv.numel();
  if (gv.numel() != 4 * H) {
    throw DimensionError("lstm_pointwise: gates " + shape_string(gv.shape()) +
                         " do not match cell " + shape_string(cv.shape()));
  }
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  Tensor out({1, 2 * H});
  for (std::size_t j = 0; j < H; ++j) {
    const double i = sig(gv[j]);
    const double f = sig(gv[H + j]);
    const double g = std::tanh(gv[2 * H + j]);
    const double o = sig(gv[3 * H + j]);
    const double cn = f * cv[j] + i * g;
    out[H + j] = cn;
    out[j] = o * std::tanh(cn);
  }
  const std::size_t ig = gates.id(), ic = c.id();
  return gates.tape().record(std::move(out), {gates, c}, [ig, ic, H, sig](Tape& t, std::size_t self) {
    const Tensor& gout = t.grad_buffer(self);
    const Tensor& gv = t.value(ig);
    const Tensor& cv = t.value(ic);
    const Tensor& ov = t.value(self);
    const bool want_g = t.requires_grad(ig);
    const bool want_c = t.requires_grad(ic);
    for (std::size_t j = 0; j < H; ++j) {
      const double i = sig(gv[j]);
      const double f = sig(gv[H + j]);
      const double g = std::tanh(gv[2 * H + j]);
      const double o = sig(gv[3 * H + j]);
      const double tc = std::tanh(ov[H + j]);
      const double dh = gout[j];
      const double dc = gout[H + j] + dh * o * (1.0 - tc * tc);
      if (want_g) {
        Tensor& gg = t.grad_buffer(ig);
        gg[j] += dc * g * i * (1.0 - i);
        gg[H + j] += dc * cv[j] * f * (1.0 - f);
        gg[2 * H + j] += dc * i * (1.0 - g * g);
        gg[3 * H + j] += dh * tc * o * (1.0 - o);
      }
      if (want_c) t.grad_buffer(ic)[j] += dc * f;
    }
  });
}

std::pair<Var, Var> lstm_cell_projected(Var x_proj, Var h, Var c, Var wh) {
  Var gates = add(x_proj, matmul(h, wh));
  Var hc = lstm_pointwise(gates, c);
  const std::size_t H = c.value().numel();
  return {slice_cols(hc, 0, H), slice_cols(hc, H, 2 * H)};
}

std::pair<Var, Var> lstm_cell(Var x, Var h, Var c, const LstmWeights& w) {
  const std::size_t H = c.value().numel();
  if (w.wh.value().rows() != H || w.wh.value().cols() != 4 * H ||
      h.value().numel() != H || w.wx.value().cols() != 4 * H) {
    throw DimensionError("lstm_cell: state " + shape_string(h.shape()) + "/" +
                         shape_string(c.shape()) + " inconsistent with weights " +
                         shape_string(w.wx.shape()) + ", " + shape_string(w.wh.shape()));
  }
  return lstm_cell_projected(add_bias(matmul(x, w.wx), w.bias), h, c, w.wh);
}

}  // namespace codemix::ops
