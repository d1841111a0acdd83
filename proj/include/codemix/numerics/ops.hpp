#pragma once
// Differentiable ops over tape variables. Rank-1 tensors of length n act as
// 1 x n rows wherever an op is row-wise. Scalars have shape {}.

#include <cstddef>
#include <utility>
#include <vector>

#include "codemix/numerics/tape.hpp"

namespace codemix::ops {

Var matmul(Var a, Var b);     // [m x k] * [k x n]
Var matmul_nt(Var a, Var b);  // [m x k] * [n x k]^T

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a[m x n] + bias[n], bias broadcast over rows.
Var add_bias(Var a, Var bias);
Var scale(Var a, double factor);
Var neg(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);

Var sum(Var a);
// Element i of a flattened tensor, as a scalar.
Var pick(Var a, std::size_t index);
// Elementwise log(exp(a) + exp(b)), stable.
Var logaddexp(Var a, Var b);

// Row-wise, max-subtracted.
Var softmax(Var a);
Var log_softmax(Var a);

// Row r of a rank-2 tensor as a 1 x n row.
Var row(Var a, std::size_t r);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_rows(const std::vector<Var>& rows);

// out[t * P + p] = e[t] + q[p] for e[T x n], q[P x n].
Var outer_add_rows(Var e, Var q);

// Sets scores[t][s] = -inf for s > t + look_ahead (square T x T input).
// Masked entries receive no gradient.
Var mask_future(Var scores, std::size_t look_ahead);

// Gate order i, f, g, o. gates[1 x 4H], c[1 x H] -> [1 x 2H] holding (h', c').
Var lstm_pointwise(Var gates, Var c);

struct LstmWeights {
  Var wx;    // [in x 4H]
  Var wh;    // [H x 4H]
  Var bias;  // [4H]
};

// One LSTM step. x[1 x in], h/c[1 x H].
std::pair<Var, Var> lstm_cell(Var x, Var h, Var c, const LstmWeights& w);

// Same step with the input projection x * wx + bias already computed.
std::pair<Var, Var> lstm_cell_projected(Var x_proj, Var h, Var c, Var wh);

}  // namespace codemix::ops
