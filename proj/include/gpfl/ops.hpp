#pragma once

#include <span>
#include <vector>

#include "gpfl/tensor.hpp"

namespace gpfl {

// [m,k] · [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// [m,k] · [k] -> [m]
Tensor matvec(const Tensor& w, const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// Backward passes gradient only where the input is strictly positive.
Tensor relu(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor sum(const Tensor& a);
Tensor stack_scalars(std::span<const Tensor> scalars);

// (x - mean) / sqrt(var + eps) ⊙ gain + bias, population variance over the
// feature axis.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// fᵀv / (‖f‖₂‖v‖₂); norms below 1e-12 raise DegenerateVectorError.
Tensor cosine_sim(const Tensor& f, const Tensor& v);

// -log softmax(logits)[label], max-subtracted for stability.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label);

// ‖a - b‖₂ (non-squared). At a == b exactly the subgradient is zero.
Tensor l2_distance(const Tensor& a, const Tensor& b);

// Euclidean norm of all listed tensors concatenated; zero subgradient at 0.
Tensor l2_norm(std::span<const Tensor> ts);

// Σᵢ ‖tᵢ‖₂² (squared-regularizer variant).
Tensor sum_sq(std::span<const Tensor> ts);

// Σᵢ ‖tᵢ - refᵢ‖₂² against constant reference buffers (proximal terms).
Tensor sum_sq_diff(std::span<const Tensor> ts,
                   std::span<const std::vector<double>> refs);

// input [Ci,H,W], weight [Co,Ci,kh,kw], bias [Co] -> [Co,H-kh+1,W-kw+1];
// stride 1, no padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

// rows [U,K], row id u -> [K]; gradient scatters into row u only.
Tensor table_row(const Tensor& rows, std::size_t u);

}  // namespace gpfl
