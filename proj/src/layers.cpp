#include "funginet/layers.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "funginet/autograd.hpp"

namespace funginet {

namespace {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
T* grad_ptr(Tensor& t);
template <>
float* grad_ptr<float>(Tensor& t) {
  return t.grad_f32();
}
template <>
double* grad_ptr<double>(Tensor& t) {
  return t.grad_f64();
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!current_tape()) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

[[noreturn]] void shape_error(const std::string& msg) { throw std::invalid_argument(msg); }

struct ConvGeometry {
  std::size_t batch, in_ch, in_h, in_w;
  std::size_t out_ch, kh, kw;
  std::size_t sh, sw, ph, pw;
  std::size_t out_h, out_w;
  std::size_t col_rows() const { return in_ch * kh * kw; }
  std::size_t col_cols() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Tensor& x, const ConvParams& p) {
  if (x.rank() != 4) shape_error("conv2d: input must be (N,C,H,W), got " + shape_to_string(x.shape()));
  if (p.weights.rank() != 4)
    shape_error("conv2d: weights must be (O,C,kh,kw), got " + shape_to_string(p.weights.shape()));
  if (p.stride_h < 1 || p.stride_w < 1) shape_error("conv2d: stride must be >= 1");
  if (p.pad_h < 0 || p.pad_w < 0) shape_error("conv2d: padding must be >= 0");
  ConvGeometry g;
  g.batch = x.extent(0);
  g.in_ch = x.extent(1);
  g.in_h = x.extent(2);
  g.in_w = x.extent(3);
  g.out_ch = p.out_channels();
  g.kh = p.kernel_h();
  g.kw = p.kernel_w();
  g.sh = static_cast<std::size_t>(p.stride_h);
  g.sw = static_cast<std::size_t>(p.stride_w);
  g.ph = static_cast<std::size_t>(p.pad_h);
  g.pw = static_cast<std::size_t>(p.pad_w);
  if (g.kh < 1 || g.kw < 1) shape_error("conv2d: kernel extents must be >= 1");
  if (g.in_ch != p.in_channels()) {
    shape_error("conv2d: input has " + std::to_string(g.in_ch) + " channels but weights expect " +
                std::to_string(p.in_channels()));
  }
  if (g.in_h + 2 * g.ph < g.kh || g.in_w + 2 * g.pw < g.kw) {
    shape_error("conv2d: kernel (" + std::to_string(g.kh) + "," + std::to_string(g.kw) +
                ") larger than padded input (" + std::to_string(g.in_h + 2 * g.ph) + "," +
                std::to_string(g.in_w + 2 * g.pw) + ")");
  }
  if (p.bias.defined() &&
      (p.bias.rank() != 1 || p.bias.extent(0) != g.out_ch)) {
    shape_error("conv2d: bias must be (" + std::to_string(g.out_ch) + "), got " +
                shape_to_string(p.bias.shape()));
  }
  g.out_h = conv_out_extent(g.in_h, g.kh, g.sh, g.ph);
  g.out_w = conv_out_extent(g.in_w, g.kw, g.sw, g.pw);
  return g;
}

// Unrolls one image (C,H,W) into (C*kh*kw, out_h*out_w) with zero padding.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + ki) -
                              static_cast<std::ptrdiff_t>(g.ph);
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::memset(dst, 0, g.out_w * sizeof(T));
            continue;
          }
          const T* src_row = x + (c * g.in_h + static_cast<std::size_t>(ih)) * g.in_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.sw + kj) -
                                static_cast<std::ptrdiff_t>(g.pw);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w))
                          ? T(0)
                          : src_row[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

// Scatter-adds a (C*kh*kw, out_h*out_w) column matrix back onto the image.
template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + ki) -
                              static_cast<std::ptrdiff_t>(g.ph);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* dst_row = dx + (c * g.in_h + static_cast<std::size_t>(ih)) * g.in_w;
          const T* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.sw + kj) -
                                static_cast<std::ptrdiff_t>(g.pw);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            dst_row[static_cast<std::size_t>(iw)] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const Tensor& x, const ConvParams& p, const ConvGeometry& g, Tensor& y) {
  const std::size_t rows = g.col_rows(), cols = g.col_cols();
  std::vector<T> col(rows * cols);
  ConstMatMap<T> W(p.weights.data<T>(), g.out_ch, rows);
  const T* bias = p.bias.defined() ? p.bias.data<T>() : nullptr;
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col<T>(x.data<T>() + n * g.in_ch * g.in_h * g.in_w, g, col.data());
    ConstMatMap<T> C(col.data(), rows, cols);
    MatMap<T> Y(y.data<T>() + n * g.out_ch * cols, g.out_ch, cols);
    Y.noalias() = W * C;
    if (bias) {
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        T* dst = y.data<T>() + (n * g.out_ch + o) * cols;
        for (std::size_t s = 0; s < cols; ++s) dst[s] += bias[o];
      }
    }
  }
}

template <typename T>
void conv2d_backward(Tensor x, ConvParams p, Tensor y, const ConvGeometry& g) {
  const std::size_t rows = g.col_rows(), cols = g.col_cols();
  const T* gy = grad_ptr<T>(y);

  if (p.bias.defined() && p.bias.requires_grad()) {
    p.bias.ensure_grad();
    T* db = grad_ptr<T>(p.bias);
    for (std::size_t n = 0; n < g.batch; ++n) {
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        const T* src = gy + (n * g.out_ch + o) * cols;
        T acc = 0;
        for (std::size_t s = 0; s < cols; ++s) acc += src[s];
        db[o] += acc;
      }
    }
  }

  bool need_dw = p.weights.requires_grad();
  bool need_dx = x.requires_grad();
  if (!need_dw && !need_dx) return;

  std::vector<T> col((need_dw ? rows * cols : 0));
  std::vector<T> dcol((need_dx ? rows * cols : 0));
  if (need_dw) p.weights.ensure_grad();
  if (need_dx) x.ensure_grad();
  ConstMatMap<T> W(p.weights.data<T>(), g.out_ch, rows);
  for (std::size_t n = 0; n < g.batch; ++n) {
    ConstMatMap<T> dY(gy + n * g.out_ch * cols, g.out_ch, cols);
    if (need_dw) {
      im2col<T>(x.data<T>() + n * g.in_ch * g.in_h * g.in_w, g, col.data());
      ConstMatMap<T> C(col.data(), rows, cols);
      MatMap<T> dW(grad_ptr<T>(p.weights), g.out_ch, rows);
      dW.noalias() += dY * C.transpose();
    }
    if (need_dx) {
      MatMap<T> dC(dcol.data(), rows, cols);
      dC.noalias() = W.transpose() * dY;
      col2im_add<T>(dcol.data(), g, grad_ptr<T>(x) + n * g.in_ch * g.in_h * g.in_w);
    }
  }
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  if (p.bias.defined() && p.bias.dtype() != x.dtype())
    shape_error("conv2d: bias dtype mismatch");
  if (p.weights.dtype() != x.dtype()) shape_error("conv2d: weights dtype mismatch");
  ConvGeometry g = conv_geometry(x, p);
  Tensor y = Tensor::zeros({g.batch, g.out_ch, g.out_h, g.out_w}, x.dtype());
  if (x.dtype() == DType::f32)
    conv2d_forward<float>(x, p, g, y);
  else
    conv2d_forward<double>(x, p, g, y);

  std::initializer_list<const Tensor*> ins = {&x, &p.weights, &p.bias};
  if (recording(ins)) {
    y.set_requires_grad(true);
    std::vector<Tensor> inputs = {x, p.weights};
    if (p.bias.defined()) inputs.push_back(p.bias);
    current_tape()->record({"conv2d",
                            inputs,
                            y,
                            [x = x, p = p, y, g]() mutable {
                              if (y.dtype() == DType::f32)
                                conv2d_backward<float>(x, p, y, g);
                              else
                                conv2d_backward<double>(x, p, y, g);
                            }});
  }
  return y;
}

namespace {

struct PoolGeometry {
  std::size_t batch, ch, in_h, in_w;
  std::size_t kh, kw, sh, sw, ph, pw;
  std::size_t out_h, out_w;
};

PoolGeometry pool_geometry(const Tensor& x, const PoolSpec& spec) {
  if (x.rank() != 4) shape_error("pool2d: input must be (N,C,H,W), got " + shape_to_string(x.shape()));
  PoolGeometry g;
  g.batch = x.extent(0);
  g.ch = x.extent(1);
  g.in_h = x.extent(2);
  g.in_w = x.extent(3);
  if (spec.kind == PoolKind::global_average) {
    g.kh = g.in_h;
    g.kw = g.in_w;
    g.sh = g.sw = 1;
    g.ph = g.pw = 0;
    g.out_h = g.out_w = 1;
    return g;
  }
  if (spec.kernel_h < 1 || spec.kernel_w < 1) shape_error("pool2d: kernel must be >= 1");
  if (spec.stride_h < 1 || spec.stride_w < 1) shape_error("pool2d: stride must be >= 1");
  if (spec.pad_h < 0 || spec.pad_w < 0) shape_error("pool2d: padding must be >= 0");
  g.kh = static_cast<std::size_t>(spec.kernel_h);
  g.kw = static_cast<std::size_t>(spec.kernel_w);
  g.sh = static_cast<std::size_t>(spec.stride_h);
  g.sw = static_cast<std::size_t>(spec.stride_w);
  g.ph = static_cast<std::size_t>(spec.pad_h);
  g.pw = static_cast<std::size_t>(spec.pad_w);
  if (g.ph >= g.kh || g.pw >= g.kw)
    shape_error("pool2d: padding must be smaller than the kernel");
  if (g.in_h + 2 * g.ph < g.kh || g.in_w + 2 * g.pw < g.kw) {
    shape_error("pool2d: kernel larger than padded input");
  }
  g.out_h = conv_out_extent(g.in_h, g.kh, g.sh, g.ph);
  g.out_w = conv_out_extent(g.in_w, g.kw, g.sw, g.pw);
  return g;
}

template <typename T>
void maxpool_forward(const T* x, const PoolGeometry& g, T* y, std::uint32_t* argmax) {
  const std::size_t plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t nc = 0; nc < g.batch * g.ch; ++nc) {
    const T* src = x + nc * plane;
    T* dst = y + nc * out_plane;
    std::uint32_t* amax = argmax + nc * out_plane;
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        std::uint32_t best_idx = 0;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + ki) -
                              static_cast<std::ptrdiff_t>(g.ph);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.sw + kj) -
                                static_cast<std::ptrdiff_t>(g.pw);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            T v = src[static_cast<std::size_t>(ih) * g.in_w + static_cast<std::size_t>(iw)];
            // Strict > keeps the first row-major argmax on ties.
            if (v > best) {
              best = v;
              best_idx = static_cast<std::uint32_t>(ih * static_cast<std::ptrdiff_t>(g.in_w) + iw);
            }
          }
        }
        dst[oh * g.out_w + ow] = best;
        amax[oh * g.out_w + ow] = best_idx;
      }
    }
  }
}

template <typename T>
void avgpool_forward(const T* x, const PoolGeometry& g, T* y) {
  const std::size_t plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
  const T area = static_cast<T>(g.kh * g.kw);
  for (std::size_t nc = 0; nc < g.batch * g.ch; ++nc) {
    const T* src = x + nc * plane;
    T* dst = y + nc * out_plane;
    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        T acc = 0;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + ki) -
                              static_cast<std::ptrdiff_t>(g.ph);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.sw + kj) -
                                static_cast<std::ptrdiff_t>(g.pw);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            acc += src[static_cast<std::size_t>(ih) * g.in_w + static_cast<std::size_t>(iw)];
          }
        }
        dst[oh * g.out_w + ow] = acc / area;
      }
    }
  }
}

}  // namespace

Tensor pool2d(const Tensor& x, const PoolSpec& spec) {
  PoolGeometry g = pool_geometry(x, spec);
  Tensor y = Tensor::zeros({g.batch, g.ch, g.out_h, g.out_w}, x.dtype());
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t plane = g.in_h * g.in_w;

  std::shared_ptr<std::vector<std::uint32_t>> argmax;
  if (spec.kind == PoolKind::max) {
    argmax = std::make_shared<std::vector<std::uint32_t>>(g.batch * g.ch * out_plane);
    if (x.dtype() == DType::f32)
      maxpool_forward<float>(x.f32(), g, y.f32(), argmax->data());
    else
      maxpool_forward<double>(x.f64(), g, y.f64(), argmax->data());
  } else {
    // average and global_average share the windowed-mean kernel.
    if (x.dtype() == DType::f32)
      avgpool_forward<float>(x.f32(), g, y.f32());
    else
      avgpool_forward<double>(x.f64(), g, y.f64());
  }

  if (recording({&x})) {
    y.set_requires_grad(true);
    PoolKind kind = spec.kind;
    current_tape()->record(
        {"pool2d",
         {x},
         y,
         [x = x, y, g, kind, argmax, plane, out_plane]() mutable {
           auto run = [&](auto tag) {
             using T = decltype(tag);
             x.ensure_grad();
             T* dx = grad_ptr<T>(x);
             const T* dy = grad_ptr<T>(y);
             if (kind == PoolKind::max) {
               const std::uint32_t* amax = argmax->data();
               for (std::size_t nc = 0; nc < g.batch * g.ch; ++nc) {
                 for (std::size_t s = 0; s < out_plane; ++s) {
                   dx[nc * plane + amax[nc * out_plane + s]] += dy[nc * out_plane + s];
                 }
               }
             } else {
               const T area = static_cast<T>(g.kh * g.kw);
               for (std::size_t nc = 0; nc < g.batch * g.ch; ++nc) {
                 for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                   for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                     T share = dy[nc * out_plane + oh * g.out_w + ow] / area;
                     for (std::size_t ki = 0; ki < g.kh; ++ki) {
                       std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + ki) -
                                           static_cast<std::ptrdiff_t>(g.ph);
                       if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                       for (std::size_t kj = 0; kj < g.kw; ++kj) {
                         std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.sw + kj) -
                                             static_cast<std::ptrdiff_t>(g.pw);
                         if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                         dx[nc * plane + static_cast<std::size_t>(ih) * g.in_w +
                            static_cast<std::size_t>(iw)] += share;
                       }
                     }
                   }
                 }
               }
             }
           };
           if (y.dtype() == DType::f32)
             run(float{});
           else
             run(double{});
         }});
  }
  return y;
}

namespace {

template <typename T>
void batchnorm_train(const Tensor& x, BatchNormState& state, Tensor& y, Tensor& xhat,
                     std::vector<double>& inv_std, std::size_t batch, std::size_t ch,
                     std::size_t plane) {
  const T* px = x.data<T>();
  T* py = y.data<T>();
  T* pxh = xhat.data<T>();
  const double m = static_cast<double>(batch * plane);
  for (std::size_t c = 0; c < ch; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* src = px + (n * ch + c) * plane;
      for (std::size_t s = 0; s < plane; ++s) {
        double v = static_cast<double>(src[s]);
        sum += v;
        sumsq += v * v;
      }
    }
    double mean = sum / m;
    double var = sumsq / m - mean * mean;
    if (var < 0.0) var = 0.0;  // guard against round-off
    double istd = 1.0 / std::sqrt(var + state.epsilon);
    inv_std[c] = istd;

    double gamma = state.gamma.value_at(c);
    double beta = state.beta.value_at(c);
    for (std::size_t n = 0; n < batch; ++n) {
      const T* src = px + (n * ch + c) * plane;
      T* dsty = py + (n * ch + c) * plane;
      T* dstx = pxh + (n * ch + c) * plane;
      for (std::size_t s = 0; s < plane; ++s) {
        double xh = (static_cast<double>(src[s]) - mean) * istd;
        dstx[s] = static_cast<T>(xh);
        dsty[s] = static_cast<T>(gamma * xh + beta);
      }
    }
    double mom = state.momentum;
    state.running_mean.set_value_at(c, (1.0 - mom) * state.running_mean.value_at(c) + mom * mean);
    state.running_var.set_value_at(c, (1.0 - mom) * state.running_var.value_at(c) + mom * var);
  }
}

template <typename T>
void batchnorm_eval(const Tensor& x, const BatchNormState& state, Tensor& y, std::size_t batch,
                    std::size_t ch, std::size_t plane) {
  const T* px = x.data<T>();
  T* py = y.data<T>();
  for (std::size_t c = 0; c < ch; ++c) {
    double istd = 1.0 / std::sqrt(state.running_var.value_at(c) + state.epsilon);
    double mean = state.running_mean.value_at(c);
    double gamma = state.gamma.value_at(c);
    double beta = state.beta.value_at(c);
    double a = gamma * istd;
    double b = beta - a * mean;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* src = px + (n * ch + c) * plane;
      T* dst = py + (n * ch + c) * plane;
      for (std::size_t s = 0; s < plane; ++s)
        dst[s] = static_cast<T>(a * static_cast<double>(src[s]) + b);
    }
  }
}

template <typename T>
void batchnorm_train_backward(Tensor x, Tensor gamma, Tensor beta, Tensor y, Tensor xhat,
                              std::shared_ptr<std::vector<double>> inv_std, std::size_t batch,
                              std::size_t ch, std::size_t plane) {
  const T* gy = grad_ptr<T>(y);
  const T* pxh = xhat.data<T>();
  const double m = static_cast<double>(batch * plane);

  for (std::size_t c = 0; c < ch; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* dy = gy + (n * ch + c) * plane;
      const T* xh = pxh + (n * ch + c) * plane;
      for (std::size_t s = 0; s < plane; ++s) {
        sum_dy += static_cast<double>(dy[s]);
        sum_dy_xhat += static_cast<double>(dy[s]) * static_cast<double>(xh[s]);
      }
    }
    if (gamma.requires_grad()) {
      gamma.ensure_grad();
      if constexpr (std::is_same_v<T, float>)
        gamma.grad_f32()[c] += static_cast<float>(sum_dy_xhat);
      else
        gamma.grad_f64()[c] += sum_dy_xhat;
    }
    if (beta.requires_grad()) {
      beta.ensure_grad();
      if constexpr (std::is_same_v<T, float>)
        beta.grad_f32()[c] += static_cast<float>(sum_dy);
      else
        beta.grad_f64()[c] += sum_dy;
    }
    if (x.requires_grad()) {
      x.ensure_grad();
      T* dx = grad_ptr<T>(x);
      double gscale = gamma.value_at(c) * (*inv_std)[c];
      double mean_dy = sum_dy / m;
      double mean_dy_xhat = sum_dy_xhat / m;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* dy = gy + (n * ch + c) * plane;
        const T* xh = pxh + (n * ch + c) * plane;
        T* dst = dx + (n * ch + c) * plane;
        for (std::size_t s = 0; s < plane; ++s) {
          double v = gscale * (static_cast<double>(dy[s]) - mean_dy -
                               static_cast<double>(xh[s]) * mean_dy_xhat);
          dst[s] += static_cast<T>(v);
        }
      }
    }
  }
}

}  // namespace

Tensor batchnorm2d(const Tensor& x, BatchNormState& state, Mode mode) {
  if (x.rank() != 4)
    shape_error("batchnorm2d: input must be (N,C,H,W), got " + shape_to_string(x.shape()));
  std::size_t batch = x.extent(0), ch = x.extent(1);
  std::size_t plane = x.extent(2) * x.extent(3);
  if (state.gamma.size() != ch || state.beta.size() != ch ||
      state.running_mean.size() != ch || state.running_var.size() != ch) {
    shape_error("batchnorm2d: state sized for " + std::to_string(state.gamma.size()) +
                " channels, input has " + std::to_string(ch));
  }
  if (mode == Mode::train && batch * plane < 1)
    shape_error("batchnorm2d: train mode needs at least one value per channel");

  Tensor y = Tensor::zeros(x.shape(), x.dtype());
  if (mode == Mode::eval) {
    if (x.dtype() == DType::f32)
      batchnorm_eval<float>(x, state, y, batch, ch, plane);
    else
      batchnorm_eval<double>(x, state, y, batch, ch, plane);
    // Eval mode treats running statistics as constants.
    if (recording({&x, &state.gamma, &state.beta})) {
      y.set_requires_grad(true);
      Tensor gamma = state.gamma, beta = state.beta;
      Tensor rmean = state.running_mean, rvar = state.running_var;
      double eps = state.epsilon;
      Tensor xin = x;
      current_tape()->record(
          {"batchnorm2d_eval",
           {x, gamma, beta},
           y,
           [xin, gamma, beta, rmean, rvar, eps, y, batch, ch, plane]() mutable {
             auto run = [&](auto tag) {
               using T = decltype(tag);
               const T* gy = grad_ptr<T>(y);
               for (std::size_t c = 0; c < ch; ++c) {
                 double istd = 1.0 / std::sqrt(rvar.value_at(c) + eps);
                 double mean = rmean.value_at(c);
                 double sum_dy = 0.0, sum_dy_xhat = 0.0;
                 for (std::size_t n = 0; n < batch; ++n) {
                   const T* dy = gy + (n * ch + c) * plane;
                   const T* src = xin.data<T>() + (n * ch + c) * plane;
                   for (std::size_t s = 0; s < plane; ++s) {
                     sum_dy += static_cast<double>(dy[s]);
                     sum_dy_xhat += static_cast<double>(dy[s]) *
                                    ((static_cast<double>(src[s]) - mean) * istd);
                   }
                 }
                 if (gamma.requires_grad()) {
                   gamma.ensure_grad();
                   if constexpr (std::is_same_v<T, float>)
                     gamma.grad_f32()[c] += static_cast<float>(sum_dy_xhat);
                   else
                     gamma.grad_f64()[c] += sum_dy_xhat;
                 }
                 if (beta.requires_grad()) {
                   beta.ensure_grad();
                   if constexpr (std::is_same_v<T, float>)
                     beta.grad_f32()[c] += static_cast<float>(sum_dy);
                   else
                     beta.grad_f64()[c] += sum_dy;
                 }
                 if (xin.requires_grad()) {
                   xin.ensure_grad();
                   double a = gamma.value_at(c) * istd;
                   T* dx = grad_ptr<T>(xin);
                   for (std::size_t n = 0; n < batch; ++n) {
                     const T* dy = gy + (n * ch + c) * plane;
                     T* dst = dx + (n * ch + c) * plane;
                     for (std::size_t s = 0; s < plane; ++s)
                       dst[s] += static_cast<T>(a * static_cast<double>(dy[s]));
                   }
                 }
               }
             };
             if (y.dtype() == DType::f32)
               run(float{});
             else
               run(double{});
           }});
    }
    return y;
  }

  Tensor xhat = Tensor::zeros(x.shape(), x.dtype());
  auto inv_std = std::make_shared<std::vector<double>>(ch, 0.0);
  if (x.dtype() == DType::f32)
    batchnorm_train<float>(x, state, y, xhat, *inv_std, batch, ch, plane);
  else
    batchnorm_train<double>(x, state, y, xhat, *inv_std, batch, ch, plane);

  if (recording({&x, &state.gamma, &state.beta})) {
    y.set_requires_grad(true);
    Tensor gamma = state.gamma, beta = state.beta, xin = x;
    current_tape()->record({"batchnorm2d",
                            {x, gamma, beta},
                            y,
                            [xin, gamma, beta, y, xhat, inv_std, batch, ch, plane]() mutable {
                              if (y.dtype() == DType::f32)
                                batchnorm_train_backward<float>(xin, gamma, beta, y, xhat,
                                                                inv_std, batch, ch, plane);
                              else
                                batchnorm_train_backward<double>(xin, gamma, beta, y, xhat,
                                                                 inv_std, batch, ch, plane);
                            }});
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (x.rank() != 2 || weights.rank() != 2 || bias.rank() != 1) {
    shape_error("linear: expected x(N,d_in), weights(d_out,d_in), bias(d_out); got " +
                shape_to_string(x.shape()) + ", " + shape_to_string(weights.shape()) + ", " +
                shape_to_string(bias.shape()));
  }
  if (x.dtype() != weights.dtype() || x.dtype() != bias.dtype())
    shape_error("linear: dtype mismatch");
  std::size_t batch = x.extent(0), d_in = x.extent(1), d_out = weights.extent(0);
  if (weights.extent(1) != d_in || bias.extent(0) != d_out) {
    shape_error("linear: dimension mismatch between x " + shape_to_string(x.shape()) +
                ", weights " + shape_to_string(weights.shape()) + " and bias " +
                shape_to_string(bias.shape()));
  }
  Tensor y = Tensor::zeros({batch, d_out}, x.dtype());
  auto forward = [&](auto tag) {
    using T = decltype(tag);
    ConstMatMap<T> X(x.data<T>(), batch, d_in);
    ConstMatMap<T> W(weights.data<T>(), d_out, d_in);
    MatMap<T> Y(y.data<T>(), batch, d_out);
    Y.noalias() = X * W.transpose();
    const T* b = bias.data<T>();
    for (std::size_t n = 0; n < batch; ++n) {
      T* row = y.data<T>() + n * d_out;
      for (std::size_t o = 0; o < d_out; ++o) row[o] += b[o];
    }
  };
  if (x.dtype() == DType::f32)
    forward(float{});
  else
    forward(double{});

  if (recording({&x, &weights, &bias})) {
    y.set_requires_grad(true);
    Tensor xin = x, w = weights, b = bias;
    current_tape()->record(
        {"linear",
         {x, weights, bias},
         y,
         [xin, w, b, y, batch, d_in, d_out]() mutable {
           auto run = [&](auto tag) {
             using T = decltype(tag);
             ConstMatMap<T> G(grad_ptr<T>(y), batch, d_out);
             if (xin.requires_grad()) {
               xin.ensure_grad();
               MatMap<T> dX(grad_ptr<T>(xin), batch, d_in);
               ConstMatMap<T> W(w.data<T>(), d_out, d_in);
               dX.noalias() += G * W;
             }
             if (w.requires_grad()) {
               w.ensure_grad();
               MatMap<T> dW(grad_ptr<T>(w), d_out, d_in);
               ConstMatMap<T> X(xin.data<T>(), batch, d_in);
               dW.noalias() += G.transpose() * X;
             }
             if (b.requires_grad()) {
               b.ensure_grad();
               T* db = grad_ptr<T>(b);
               const T* g = grad_ptr<T>(y);
               for (std::size_t n = 0; n < batch; ++n)
                 for (std::size_t o = 0; o < d_out; ++o) db[o] += g[n * d_out + o];
             }
           };
           if (y.dtype() == DType::f32)
             run(float{});
           else
             run(double{});
         }});
  }
  return y;
}

Tensor dropout(const Tensor& x, const DropoutSpec& spec, Mode mode, Rng& rng) {
  if (spec.rate < 0.0 || spec.rate >= 1.0)
    throw std::invalid_argument("dropout: rate must lie in [0,1), got " +
                                std::to_string(spec.rate));
  if (mode == Mode::eval || spec.rate == 0.0) return x;

  std::size_t n = x.size();
  Tensor mask = Tensor::zeros(x.shape(), x.dtype());
  Tensor y = Tensor::zeros(x.shape(), x.dtype());
  double keep_scale = 1.0 / (1.0 - spec.rate);
  auto run = [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>();
    T* pm = mask.data<T>();
    T* py = y.data<T>();
    T scale = static_cast<T>(keep_scale);
    for (std::size_t i = 0; i < n; ++i) {
      pm[i] = rng.bernoulli(spec.rate) ? T(0) : scale;
      py[i] = px[i] * pm[i];
    }
  };
  if (x.dtype() == DType::f32)
    run(float{});
  else
    run(double{});

  if (recording({&x})) {
    y.set_requires_grad(true);
    Tensor xin = x;
    current_tape()->record({"dropout",
                            {x},
                            y,
                            [xin, y, mask, n]() mutable {
                              auto back = [&](auto tag) {
                                using T = decltype(tag);
                                xin.ensure_grad();
                                T* dx = grad_ptr<T>(xin);
                                const T* dy = grad_ptr<T>(y);
                                const T* pm = mask.data<T>();
                                for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * pm[i];
                              };
                              if (y.dtype() == DType::f32)
                                back(float{});
                              else
                                back(double{});
                            }});
  }
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape(), x.dtype());
  std::size_t n = x.size();
  auto run = [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>();
    T* py = y.data<T>();
    for (std::size_t i = 0; i < n; ++i) py[i] = px[i] > T(0) ? px[i] : T(0);
  };
  if (x.dtype() == DType::f32)
    run(float{});
  else
    run(double{});

  if (recording({&x})) {
    y.set_requires_grad(true);
    Tensor xin = x;
    current_tape()->record({"relu",
                            {x},
                            y,
                            [xin, y, n]() mutable {
                              auto back = [&](auto tag) {
                                using T = decltype(tag);
                                xin.ensure_grad();
                                T* dx = grad_ptr<T>(xin);
                                const T* dy = grad_ptr<T>(y);
                                const T* px = xin.data<T>();
                                // Derivative at exactly 0 is 0.
                                for (std::size_t i = 0; i < n; ++i)
                                  if (px[i] > T(0)) dx[i] += dy[i];
                              };
                              if (y.dtype() == DType::f32)
                                back(float{});
                              else
                                back(double{});
                            }});
  }
  return y;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.rank() != 2)
    shape_error("softmax_cross_entropy: logits must be (N,K), got " +
                shape_to_string(logits.shape()));
  std::size_t batch = logits.extent(0), classes = logits.extent(1);
  if (batch < 1) shape_error("softmax_cross_entropy: empty batch");
  if (targets.size() != batch) {
    shape_error("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                std::to_string(batch) + " rows");
  }
  for (std::size_t i = 0; i < batch; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= classes) {
      throw std::invalid_argument("softmax_cross_entropy: target " + std::to_string(targets[i]) +
                                  " out of range [0," + std::to_string(classes) + ") at row " +
                                  std::to_string(i));
    }
  }

  Tensor probs = Tensor::zeros(logits.shape(), logits.dtype());
  Tensor loss = Tensor::zeros({}, logits.dtype());
  auto run = [&](auto tag) {
    using T = decltype(tag);
    const T* pl = logits.data<T>();
    T* pp = probs.data<T>();
    double total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      const T* row = pl + i * classes;
      double mx = static_cast<double>(row[0]);
      for (std::size_t k = 1; k < classes; ++k) mx = std::max(mx, static_cast<double>(row[k]));
      double sumexp = 0.0;
      for (std::size_t k = 0; k < classes; ++k) sumexp += std::exp(static_cast<double>(row[k]) - mx);
      double lse = mx + std::log(sumexp);
      for (std::size_t k = 0; k < classes; ++k)
        pp[i * classes + k] = static_cast<T>(std::exp(static_cast<double>(row[k]) - lse));
      total += lse - static_cast<double>(row[static_cast<std::size_t>(targets[i])]);
    }
    loss.set_value_at(0, total / static_cast<double>(batch));
  };
  if (logits.dtype() == DType::f32)
    run(float{});
  else
    run(double{});

  if (recording({&logits})) {
    loss.set_requires_grad(true);
    Tensor lin = logits;
    std::vector<int> tg = targets;
    current_tape()->record(
        {"softmax_cross_entropy",
         {logits},
         loss,
         [lin, loss, probs, tg, batch, classes]() mutable {
           auto back = [&](auto tag) {
             using T = decltype(tag);
             lin.ensure_grad();
             T* dl = grad_ptr<T>(lin);
             const T* pp = probs.data<T>();
             T g = grad_ptr<T>(loss)[0];
             T inv_n = static_cast<T>(1.0 / static_cast<double>(batch));
             for (std::size_t i = 0; i < batch; ++i) {
               for (std::size_t k = 0; k < classes; ++k) {
                 T onehot = (static_cast<std::size_t>(tg[i]) == k) ? T(1) : T(0);
                 dl[i * classes + k] += g * (pp[i * classes + k] - onehot) * inv_n;
               }
             }
           };
           if (loss.dtype() == DType::f32)
             back(float{});
           else
             back(double{});
         }});
  }
  return loss;
}

std::vector<double> softmax_row(const Tensor& logits, std::size_t row) {
  if (logits.rank() != 2) shape_error("softmax_row: logits must be (N,K)");
  std::size_t classes = logits.extent(1);
  std::vector<double> out(classes);
  double mx = logits.value_at(row * classes);
  for (std::size_t k = 1; k < classes; ++k)
    mx = std::max(mx, logits.value_at(row * classes + k));
  double sumexp = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    out[k] = std::exp(logits.value_at(row * classes + k) - mx);
    sumexp += out[k];
  }
  for (double& v : out) v /= sumexp;
  return out;
}

}  // namespace funginet
