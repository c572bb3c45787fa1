#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "funginet/rng.hpp"
#include "funginet/tensor.hpp"
#include "funginet/tensor_ops.hpp"

namespace funginet {

enum class Mode { train, eval };

struct ConvParams {
  Tensor weights;  // (out_channels, in_channels, kernel_h, kernel_w)
  Tensor bias;     // (out_channels); undefined handle = no bias
  int stride_h = 1, stride_w = 1;
  int pad_h = 0, pad_w = 0;

  std::size_t out_channels() const { return weights.extent(0); }
  std::size_t in_channels() const { return weights.extent(1); }
  std::size_t kernel_h() const { return weights.extent(2); }
  std::size_t kernel_w() const { return weights.extent(3); }
};

// x: (N,C,H,W) -> (N,O,H',W') with H' = floor((H + 2*pad - kh)/stride) + 1.
// Zero padding; differentiable w.r.t. x, weights and bias.
Tensor conv2d(const Tensor& x, const ConvParams& p);

// Output spatial extent of one axis for conv and pool geometry.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t pad);

enum class PoolKind { max, average, global_average };

struct PoolSpec {
  PoolKind kind = PoolKind::max;
  int kernel_h = 1, kernel_w = 1;
  int stride_h = 1, stride_w = 1;
  int pad_h = 0, pad_w = 0;
};

// Max pooling routes the gradient to the first row-major argmax per window;
// padding cells never win a max. Average pooling divides by the full kernel
// area, counting padded cells. global_average reduces each map to (1,1).
Tensor pool2d(const Tensor& x, const PoolSpec& spec);

struct BatchNormState {
  Tensor gamma, beta;                  // (C), trainable affine
  Tensor running_mean, running_var;    // (C), updated in train mode
  double momentum = 0.1;               // running <- (1-m)*running + m*batch
  double epsilon = 1e-5;
};

// Train mode normalizes with biased batch statistics and updates the running
// buffers in place; eval mode normalizes with the running statistics.
Tensor batchnorm2d(const Tensor& x, BatchNormState& state, Mode mode);

// y = x * W^T + bias, x: (N,d_in), W: (d_out,d_in), bias: (d_out).
Tensor linear(const Tensor& x, const Tensor& weights, const Tensor& bias);

struct DropoutSpec {
  double rate = 0.5;  // in [0,1)
};

// Inverted dropout: train mode zeroes entries with probability rate and
// scales survivors by 1/(1-rate); eval mode is the identity.
Tensor dropout(const Tensor& x, const DropoutSpec& spec, Mode mode, Rng& rng);

// Elementwise max(0,x); derivative at exactly 0 is 0.
Tensor relu(const Tensor& x);

// Mean over rows of -log softmax(logits_i)[target_i], computed with the
// log-sum-exp max shift. logits: (N,K); targets: class indices, length N.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Row-wise softmax probabilities (no tape recording; evaluation helper).
std::vector<double> softmax_row(const Tensor& logits, std::size_t row);

}  // namespace funginet
