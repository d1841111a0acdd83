#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "codemix/model/model.hpp"

namespace codemix {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// First and second moments for one flat parameter block.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  explicit AdamMoments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected Adam update of `param` in place. `step` counts from 1.
// Throws DimensionError when the spans disagree in length.
void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                 std::size_t step, const AdamConfig& config);

// Adam over a whole ParameterSet, reading each Parameter's grad.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});
  void step(ParameterSet& params);
  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::size_t steps_ = 0;
  std::vector<AdamMoments> moments_;
};

}  // namespace codemix
