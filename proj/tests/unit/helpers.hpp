#pragma once

#include <cmath>
#include <vector>

#include "codemix/numerics/random.hpp"
#include "codemix/numerics/tensor.hpp"

namespace testutil {

inline codemix::Tensor random_tensor(const codemix::Shape& shape, codemix::Rng& rng,
                                     double scale = 1.0) {
  codemix::Tensor t(shape);
  for (double& v : t.storage()) v = scale * (2.0 * codemix::uniform01(rng) - 1.0);
  return t;
}

inline double max_abs_diff(const codemix::Tensor& a, const codemix::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Row-normalised random log-probabilities.
inline codemix::Tensor random_log_probs(std::size_t rows, std::size_t vocab, codemix::Rng& rng) {
  codemix::Tensor t({rows, vocab});
  for (std::size_t r = 0; r < rows; ++r) {
    double z = 0.0;
    for (std::size_t k = 0; k < vocab; ++k) {
      t.at(r, k) = 2.0 * codemix::uniform01(rng);
      z += std::exp(t.at(r, k));
    }
    for (std::size_t k = 0; k < vocab; ++k) t.at(r, k) -= std::log(z);
  }
  return t;
}

}  // namespace testutil
