#include "funginet/tensor_ops.hpp"

#include <Eigen/Core>

#include <cstring>
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

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw std::invalid_argument(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) +
                                " vs " + dtype_name(b.dtype()) + ")");
  }
}

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

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!current_tape()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename T>
void matmul_forward(const Tensor& a, const Tensor& b, Tensor& y, std::size_t m, std::size_t k,
                    std::size_t n) {
  ConstMatMap<T> A(a.data<T>(), m, k);
  ConstMatMap<T> B(b.data<T>(), k, n);
  MatMap<T> Y(y.data<T>(), m, n);
  Y.noalias() = A * B;
}

template <typename T>
void matmul_backward(Tensor a, Tensor b, Tensor y, std::size_t m, std::size_t k, std::size_t n) {
  ConstMatMap<T> G(grad_ptr<T>(y), m, n);
  if (a.requires_grad()) {
    a.ensure_grad();
    MatMap<T> dA(grad_ptr<T>(a), m, k);
    ConstMatMap<T> B(b.data<T>(), k, n);
    dA.noalias() += G * B.transpose();
  }
  if (b.requires_grad()) {
    b.ensure_grad();
    MatMap<T> dB(grad_ptr<T>(b), k, n);
    ConstMatMap<T> A(a.data<T>(), m, k);
    dB.noalias() += A.transpose() * G;
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul: expected 2-D operands, got " +
                                shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  }
  check_same_dtype(a, b, "matmul");
  std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw std::invalid_argument("matmul: inner-dimension mismatch for shapes " +
                                shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  }
  Tensor y = Tensor::zeros({m, n}, a.dtype());
  if (a.dtype() == DType::f32)
    matmul_forward<float>(a, b, y, m, k, n);
  else
    matmul_forward<double>(a, b, y, m, k, n);

  if (should_record({&a, &b})) {
    y.set_requires_grad(true);
    current_tape()->record({"matmul",
                            {a, b},
                            y,
                            [a, b, y, m, k, n]() mutable {
                              if (y.dtype() == DType::f32)
                                matmul_backward<float>(a, b, y, m, k, n);
                              else
                                matmul_backward<double>(a, b, y, m, k, n);
                            }});
  }
  return y;
}

namespace {

template <typename T>
void axpy(T* dst, const T* src, std::size_t n, T alpha) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += alpha * src[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_dtype(a, b, "add");
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  Tensor y = Tensor::zeros(a.shape(), a.dtype());
  std::size_t n = a.size();
  if (a.dtype() == DType::f32) {
    const float *pa = a.f32(), *pb = b.f32();
    float* py = y.f32();
    for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
  } else {
    const double *pa = a.f64(), *pb = b.f64();
    double* py = y.f64();
    for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
  }
  if (should_record({&a, &b})) {
    y.set_requires_grad(true);
    current_tape()->record({"add",
                            {a, b},
                            y,
                            [a = a, b = b, y, n]() mutable {
                              auto run = [&](auto tag) {
                                using T = decltype(tag);
                                const T* g = grad_ptr<T>(y);
                                for (Tensor* t : {&a, &b}) {
                                  if (!t->requires_grad()) continue;
                                  t->ensure_grad();
                                  axpy<T>(grad_ptr<T>(*t), g, n, T(1));
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

Tensor scale(const Tensor& x, double c) {
  Tensor y = Tensor::zeros(x.shape(), x.dtype());
  std::size_t n = x.size();
  if (x.dtype() == DType::f32) {
    const float* px = x.f32();
    float* py = y.f32();
    float cf = static_cast<float>(c);
    for (std::size_t i = 0; i < n; ++i) py[i] = cf * px[i];
  } else {
    const double* px = x.f64();
    double* py = y.f64();
    for (std::size_t i = 0; i < n; ++i) py[i] = c * px[i];
  }
  if (should_record({&x})) {
    y.set_requires_grad(true);
    current_tape()->record({"scale",
                            {x},
                            y,
                            [x = x, y, c, n]() mutable {
                              if (y.dtype() == DType::f32) {
                                x.ensure_grad();
                                axpy<float>(x.grad_f32(), y.grad_f32(), n,
                                            static_cast<float>(c));
                              } else {
                                x.ensure_grad();
                                axpy<double>(x.grad_f64(), y.grad_f64(), n, c);
                              }
                            }});
  }
  return y;
}

Tensor sum(const Tensor& x) {
  Tensor y = Tensor::zeros({}, x.dtype());
  std::size_t n = x.size();
  if (x.dtype() == DType::f32) {
    // Accumulate in double so large reductions stay accurate.
    double acc = 0.0;
    const float* px = x.f32();
    for (std::size_t i = 0; i < n; ++i) acc += px[i];
    y.f32()[0] = static_cast<float>(acc);
  } else {
    double acc = 0.0;
    const double* px = x.f64();
    for (std::size_t i = 0; i < n; ++i) acc += px[i];
    y.f64()[0] = acc;
  }
  if (should_record({&x})) {
    y.set_requires_grad(true);
    current_tape()->record({"sum",
                            {x},
                            y,
                            [x = x, y, n]() mutable {
                              x.ensure_grad();
                              if (y.dtype() == DType::f32) {
                                float g = y.grad_f32()[0];
                                float* dx = x.grad_f32();
                                for (std::size_t i = 0; i < n; ++i) dx[i] += g;
                              } else {
                                double g = y.grad_f64()[0];
                                double* dx = x.grad_f64();
                                for (std::size_t i = 0; i < n; ++i) dx[i] += g;
                              }
                            }});
  }
  return y;
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
  std::size_t n = shape_product(shape);
  if (n != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_to_string(x.shape()) + " (" +
                                std::to_string(x.size()) + " elements) as " +
                                shape_to_string(shape) + " (" + std::to_string(n) + " elements)");
  }
  Tensor y = Tensor::zeros(std::move(shape), x.dtype());
  if (x.dtype() == DType::f32)
    std::memcpy(y.f32(), x.f32(), n * sizeof(float));
  else
    std::memcpy(y.f64(), x.f64(), n * sizeof(double));
  if (should_record({&x})) {
    y.set_requires_grad(true);
    current_tape()->record({"reshape",
                            {x},
                            y,
                            [x = x, y, n]() mutable {
                              x.ensure_grad();
                              if (y.dtype() == DType::f32)
                                axpy<float>(x.grad_f32(), y.grad_f32(), n, 1.0f);
                              else
                                axpy<double>(x.grad_f64(), y.grad_f64(), n, 1.0);
                            }});
  }
  return y;
}

namespace {

struct ConcatLayout {
  std::size_t outer, inner;
  std::vector<std::size_t> chunk;  // per input: extent(axis) * inner
};

template <typename T>
void concat_forward(const std::vector<Tensor>& ts, Tensor& y, const ConcatLayout& L) {
  T* out = y.data<T>();
  std::size_t total_chunk = 0;
  for (std::size_t c : L.chunk) total_chunk += c;
  for (std::size_t o = 0; o < L.outer; ++o) {
    T* dst = out + o * total_chunk;
    for (std::size_t t = 0; t < ts.size(); ++t) {
      const T* src = ts[t].data<T>() + o * L.chunk[t];
      std::memcpy(dst, src, L.chunk[t] * sizeof(T));
      dst += L.chunk[t];
    }
  }
}

template <typename T>
void concat_backward(std::vector<Tensor>& ts, Tensor& y, const ConcatLayout& L) {
  const T* g = grad_ptr<T>(y);
  std::size_t total_chunk = 0;
  for (std::size_t c : L.chunk) total_chunk += c;
  for (std::size_t t = 0; t < ts.size(); ++t) {
    if (!ts[t].requires_grad()) continue;
    ts[t].ensure_grad();
  }
  std::size_t offset = 0;
  for (std::size_t t = 0; t < ts.size(); ++t) {
    if (ts[t].requires_grad()) {
      T* dst = grad_ptr<T>(ts[t]);
      for (std::size_t o = 0; o < L.outer; ++o) {
        const T* src = g + o * total_chunk + offset;
        axpy<T>(dst + o * L.chunk[t], src, L.chunk[t], T(1));
      }
    }
    offset += L.chunk[t];
  }
}

}  // namespace

Tensor concat(std::span<const Tensor> tensors, std::size_t axis) {
  if (tensors.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor& first = tensors[0];
  std::size_t rank = first.rank();
  if (axis >= rank) throw std::invalid_argument("concat: axis out of range");
  std::vector<std::size_t> out_shape = first.shape();
  for (std::size_t t = 1; t < tensors.size(); ++t) {
    check_same_dtype(first, tensors[t], "concat");
    if (tensors[t].rank() != rank)
      throw std::invalid_argument("concat: rank mismatch " + shape_to_string(first.shape()) +
                                  " vs " + shape_to_string(tensors[t].shape()));
    for (std::size_t k = 0; k < rank; ++k) {
      if (k == axis) continue;
      if (tensors[t].extent(k) != first.extent(k)) {
        throw std::invalid_argument("concat: extent mismatch on axis " + std::to_string(k) +
                                    " between " + shape_to_string(first.shape()) + " and " +
                                    shape_to_string(tensors[t].shape()));
      }
    }
    out_shape[axis] += tensors[t].extent(axis);
  }

  ConcatLayout L;
  L.outer = 1;
  for (std::size_t k = 0; k < axis; ++k) L.outer *= first.extent(k);
  L.inner = 1;
  for (std::size_t k = axis + 1; k < rank; ++k) L.inner *= first.extent(k);
  for (const Tensor& t : tensors) L.chunk.push_back(t.extent(axis) * L.inner);

  std::vector<Tensor> inputs(tensors.begin(), tensors.end());
  Tensor y = Tensor::zeros(out_shape, first.dtype());
  if (first.dtype() == DType::f32)
    concat_forward<float>(inputs, y, L);
  else
    concat_forward<double>(inputs, y, L);

  bool any_grad = false;
  for (const Tensor& t : inputs) any_grad |= t.requires_grad();
  if (current_tape() && any_grad) {
    y.set_requires_grad(true);
    current_tape()->record({"concat",
                            inputs,
                            y,
                            [inputs, y, L]() mutable {
                              if (y.dtype() == DType::f32)
                                concat_backward<float>(inputs, y, L);
                              else
                                concat_backward<double>(inputs, y, L);
                            }});
  }
  return y;
}

}  // namespace funginet
