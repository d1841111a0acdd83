#include "codemix/trainer/adam.hpp"

#include <cmath>

#include "codemix/errors.hpp"
#include "codemix/kernels/kernels.hpp"

namespace codemix {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("adam: learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("adam: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                 std::size_t step, const AdamConfig& config) {
  if (grad.size() != param.size() || moments.m.size() != param.size() ||
      moments.v.size() != param.size())
    throw DimensionError("adam: parameter of size " + std::to_string(param.size()) +
                         " paired with gradient of size " + std::to_string(grad.size()) +
                         " and moments of size " + std::to_string(moments.m.size()));
  if (step == 0) throw ConfigError("adam: step counts from 1");
  const double t = static_cast<double>(step);
  const double step_size = config.learning_rate / (1.0 - std::pow(config.beta1, t));
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  kernels::active().adam_update(param.size(), param.data(), grad.data(), moments.m.data(),
                                moments.v.data(), config.beta1, config.beta2, step_size, bc2,
                                config.eps);
}

Adam::Adam(AdamConfig config) : config_(config) { config_.validate(); }

void Adam::step(ParameterSet& params) {
  if (moments_.empty()) {
    for (const Parameter& p : params) moments_.emplace_back(p.value.numel());
  }
  if (moments_.size() != params.size())
    throw DimensionError("adam: parameter set changed size between steps");
  ++steps_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (p.grad.shape() != p.value.shape())
      throw DimensionError("adam: gradient of '" + p.name + "' has shape " +
                           shape_string(p.grad.shape()) + ", expected " +
                           shape_string(p.value.shape()));
    adam_update(p.value.values(), p.grad.values(), moments_[i], steps_, config_);
  }
}

}  // namespace codemix
