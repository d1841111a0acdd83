#include "codemix/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "codemix/errors.hpp"

namespace codemix {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

Tensor numeric_gradient(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double eps) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

double grad_check(const ScalarFn& f, const Tensor& x, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");
  Tape tape;
  Var in = tape.input(x);
  Var out = f(tape, in);
  tape.backward(out);
  const Tensor analytic = tape.grad(in);

  const Tensor numeric = numeric_gradient(
      [&](const Tensor& probe) {
        Tape t(false);
        return f(t, t.input(probe, false)).value()[0];
      },
      x, eps);

  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i)
    worst = std::max(worst, relative_error(analytic[i], numeric[i]));
  return worst;
}

}  // namespace codemix
