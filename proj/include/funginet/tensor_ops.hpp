#pragma once

#include <span>
#include <vector>

#include "funginet/tensor.hpp"

namespace funginet {

// (m,k) x (k,n) -> (m,n). Records on the active tape when either input
// requires gradients.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise sum of two identically shaped tensors.
Tensor add(const Tensor& a, const Tensor& b);

// x * c with a plain scalar.
Tensor scale(const Tensor& x, double c);

// Full reduction to a rank-0 scalar.
Tensor sum(const Tensor& x);

// Same element count, new extents; data shared by copy (row-major order).
Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);

// Concatenation along `axis`; inputs agree on every other extent.
Tensor concat(std::span<const Tensor> tensors, std::size_t axis);

}  // namespace funginet
