#include "codemix/loss/transducer.hpp"

#include <cmath>
#include <optional>
#include <string>

#include "codemix/errors.hpp"
#include "codemix/numerics/logmath.hpp"

namespace codemix {
namespace {

void check(std::size_t rows, std::size_t vocab, std::size_t frames, std::size_t positions,
           std::span<const std::size_t> labels) {
  if (frames == 0) throw DataError("transducer loss: grid has no frames");
  if (vocab == 0) throw DimensionError("transducer loss: empty vocabulary");
  if (positions != labels.size() + 1 || rows != frames * positions)
    throw DimensionError("transducer loss: grid of " + std::to_string(rows) + " rows does not fit T=" +
                         std::to_string(frames) + ", U=" + std::to_string(labels.size()));
  const std::size_t blank = vocab - 1;
  for (std::size_t y : labels) {
    if (y == blank) throw DataError("transducer loss: labels contain the blank");
    if (y > blank) throw DataError("transducer loss: label " + std::to_string(y) + " out of range");
  }
}

PosteriorGrid wrap(const Tensor& log_probs, std::size_t frames, std::size_t positions) {
  PosteriorGrid g;
  g.frames = frames;
  g.positions = positions;
  g.log_probs = log_probs;
  return g;
}

}  // namespace

Lattice forward_backward(const PosteriorGrid& grid, std::span<const std::size_t> labels,
                         std::size_t blank) {
  check(grid.log_probs.rows(), grid.vocab(), grid.frames, grid.positions, labels);
  const std::size_t T = grid.frames, P = grid.positions, U = P - 1;
  Lattice L;
  L.frames = T;
  L.positions = P;
  L.alpha.assign(T * P, kLogZero);
  L.beta.assign(T * P, kLogZero);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < P; ++u) {
      double v = (t == 0 && u == 0) ? 0.0 : kLogZero;
      if (t > 0) v = log_add(v, L.a(t - 1, u) + grid.at(t - 1, u, blank));
      if (u > 0) v = log_add(v, L.a(t, u - 1) + grid.at(t, u - 1, labels[u - 1]));
      L.alpha[t * P + u] = v;
    }
  }
  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t u = P; u-- > 0;) {
      double v = kLogZero;
      if (t == T - 1 && u == U) v = grid.at(t, u, blank);
      if (t + 1 < T) v = log_add(v, L.b(t + 1, u) + grid.at(t, u, blank));
      if (u < U) v = log_add(v, L.b(t, u + 1) + grid.at(t, u, labels[u]));
      L.beta[t * P + u] = v;
    }
  }
  L.log_likelihood = L.a(T - 1, U) + grid.at(T - 1, U, blank);
  return L;
}

double transducer_nll(const PosteriorGrid& grid, std::span<const std::size_t> labels) {
  if (grid.vocab() == 0) throw DimensionError("transducer loss: empty vocabulary");
  return -forward_backward(grid, labels, grid.vocab() - 1).log_likelihood;
}

Tensor transducer_grad(const PosteriorGrid& grid, std::span<const std::size_t> labels) {
  if (grid.vocab() == 0) throw DimensionError("transducer loss: empty vocabulary");
  const std::size_t blank = grid.vocab() - 1;
  const Lattice L = forward_backward(grid, labels, blank);
  const double ll = L.log_likelihood;
  if (!std::isfinite(ll))
    throw NumericError("transducer gradient undefined: labels have zero probability");
  const std::size_t T = L.frames, P = L.positions, U = P - 1;
  Tensor g(grid.log_probs.shape());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < P; ++u) {
      const double a = L.a(t, u);
      if (a == kLogZero) continue;
      double* row = g.data() + (t * P + u) * g.cols();
      if (t + 1 < T)
        row[blank] = -std::exp(a + grid.at(t, u, blank) + L.b(t + 1, u) - ll);
      else if (u == U)
        row[blank] = -std::exp(a + grid.at(t, u, blank) - ll);
      if (u < U) row[labels[u]] = -std::exp(a + grid.at(t, u, labels[u]) + L.b(t, u + 1) - ll);
    }
  }
  return g;
}

double lattice_cut_error(const Lattice& L, const PosteriorGrid& grid,
                         std::span<const std::size_t> labels, std::size_t blank) {
  const std::size_t T = L.frames, P = L.positions, U = P - 1;
  const double ll = L.log_likelihood;
  double worst = std::abs(L.b(0, 0) - ll);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    double cut = kLogZero;
    for (std::size_t u = 0; u < P; ++u)
      cut = log_add(cut, L.a(t, u) + grid.at(t, u, blank) + L.b(t + 1, u));
    worst = std::max(worst, std::abs(cut - ll));
  }
  for (std::size_t u = 0; u < U; ++u) {
    double cut = kLogZero;
    for (std::size_t t = 0; t < T; ++t)
      cut = log_add(cut, L.a(t, u) + grid.at(t, u, labels[u]) + L.b(t, u + 1));
    worst = std::max(worst, std::abs(cut - ll));
  }
  return worst;
}

double brute_force_nll(const PosteriorGrid& grid, std::span<const std::size_t> labels,
                       std::uint64_t* path_count) {
  check(grid.log_probs.rows(), grid.vocab(), grid.frames, grid.positions, labels);
  const std::size_t T = grid.frames, U = labels.size();
  if (T + U > kBruteForceBound)
    throw DataError("brute_force_nll: T + U = " + std::to_string(T + U) + " exceeds " +
                    std::to_string(kBruteForceBound));
  const std::size_t blank = grid.vocab() - 1;
  double total = 0.0;
  std::uint64_t count = 0;
  // Each alignment is a bit string over T - 1 + U moves (1 = emit) with
  // exactly U emissions, followed by the final blank at (T-1, U).
  const std::size_t moves = T - 1 + U;
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << moves); ++code) {
    if (static_cast<std::size_t>(__builtin_popcountll(code)) != U) continue;
    ++count;
    double p = 1.0;
    std::size_t t = 0, u = 0;
    for (std::size_t m = 0; m < moves; ++m) {
      if ((code >> m) & 1) {
        p *= std::exp(grid.at(t, u, labels[u]));
        ++u;
      } else {
        p *= std::exp(grid.at(t, u, blank));
        ++t;
      }
    }
    p *= std::exp(grid.at(T - 1, U, blank));
    total += p;
  }
  if (path_count) *path_count = count;
  return -std::log(total);
}

Var transducer_loss(Var log_probs, std::size_t frames, std::span<const std::size_t> labels) {
  const Tensor& lp = log_probs.value();
  const std::size_t P = labels.size() + 1;
  check(lp.rows(), lp.cols(), frames, P, labels);
  const PosteriorGrid grid = wrap(lp, frames, P);
  const double nll = transducer_nll(grid, labels);
  if (!std::isfinite(nll)) throw NumericError("transducer loss is not finite");
  const std::size_t id = log_probs.id();
  std::vector<std::size_t> y(labels.begin(), labels.end());
  return log_probs.tape().record(
      Tensor(Shape{}, std::vector<double>{nll}), {log_probs},
      [id, frames, P, y = std::move(y)](Tape& t, std::size_t self) {
        if (!t.requires_grad(id)) return;
        const double g = t.grad_buffer(self)[0];
        const Tensor d = transducer_grad(wrap(t.value(id), frames, P), y);
        Tensor& acc = t.grad_buffer(id);
        for (std::size_t i = 0; i < d.numel(); ++i) acc[i] += g * d[i];
      });
}

Var transducer_loss_autodiff(Var log_probs, std::size_t frames,
                             std::span<const std::size_t> labels) {
  const Tensor& lp = log_probs.value();
  const std::size_t P = labels.size() + 1, U = labels.size();
  check(lp.rows(), lp.cols(), frames, P, labels);
  const std::size_t V = lp.cols(), blank = V - 1;
  Tape& tape = log_probs.tape();
  auto at = [&](std::size_t t, std::size_t u, std::size_t k) {
    return ops::pick(log_probs, (t * P + u) * V + k);
  };
  std::vector<Var> alpha(frames * P);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t u = 0; u < P; ++u) {
      std::optional<Var> v;
      if (t == 0 && u == 0) v = tape.constant(Tensor(Shape{}, 0.0));
      if (t > 0) v = ops::add(alpha[(t - 1) * P + u], at(t - 1, u, blank));
      if (u > 0) {
        Var e = ops::add(alpha[t * P + u - 1], at(t, u - 1, labels[u - 1]));
        v = v ? ops::logaddexp(*v, e) : e;
      }
      alpha[t * P + u] = *v;
    }
  }
  return ops::neg(ops::add(alpha[(frames - 1) * P + U], at(frames - 1, U, blank)));
}

}  // namespace codemix
