#pragma once
// Transducer negative log-likelihood over the (t, u) lattice of a
// PosteriorGrid. Frames t in [0, T), label positions u in [0, U].
//
//   alpha[0][0] = 0
//   alpha[t][u] = logadd(alpha[t-1][u] + lp[t-1][u][blank],
//                        alpha[t][u-1] + lp[t][u-1][y_u])
//   nll         = -(alpha[T-1][U] + lp[T-1][U][blank])

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "codemix/model/model.hpp"

namespace codemix {

struct Lattice {
  std::size_t frames = 0;     // T
  std::size_t positions = 0;  // U + 1
  std::vector<double> alpha;  // [t * positions + u]
  std::vector<double> beta;   // beta[t][u]: log prob of finishing from (t, u)
  double log_likelihood = 0.0;

  double a(std::size_t t, std::size_t u) const { return alpha[t * positions + u]; }
  double b(std::size_t t, std::size_t u) const { return beta[t * positions + u]; }
};

// Validates labels and grid shape; throws DataError / DimensionError.
Lattice forward_backward(const PosteriorGrid& grid, std::span<const std::size_t> labels,
                         std::size_t blank);

// `blank` defaults to the last column of the grid.
double transducer_nll(const PosteriorGrid& grid, std::span<const std::size_t> labels);

// d nll / d log p, same layout as grid.log_probs. Throws NumericError when
// the labels have zero probability.
Tensor transducer_grad(const PosteriorGrid& grid, std::span<const std::size_t> labels);

// Largest deviation from the total log-likelihood over all cuts: every
// alignment crosses each frame boundary with exactly one blank and each label
// position with exactly one emission.
double lattice_cut_error(const Lattice& lattice, const PosteriorGrid& grid,
                         std::span<const std::size_t> labels, std::size_t blank);

// Linear-domain enumeration of every alignment. T + U must not exceed
// kBruteForceBound. path_count, when given, receives the number of
// alignments enumerated.
inline constexpr std::size_t kBruteForceBound = 12;
double brute_force_nll(const PosteriorGrid& grid, std::span<const std::size_t> labels,
                       std::uint64_t* path_count = nullptr);

// Tape op: nll of a [T (U+1) x V] log-prob node, backward through the
// analytic occupancy gradient.
Var transducer_loss(Var log_probs, std::size_t frames, std::span<const std::size_t> labels);

// Same loss assembled from pick/logaddexp/add ops so the tape differentiates
// the recursion itself. Slow; meant for small grids.
Var transducer_loss_autodiff(Var log_probs, std::size_t frames,
                             std::span<const std::size_t> labels);

}  // namespace codemix
