#include "funginet/tensor.hpp"

#include <cstring>
#include <sstream>
#include <stdexcept>

namespace funginet {

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

struct Tensor::Impl {
  std::vector<std::size_t> shape;
  DType dtype = DType::f32;
  bool requires_grad = false;
  std::vector<float> data_f32, grad_f32;
  std::vector<double> data_f64, grad_f64;

  std::size_t size() const { return shape_product(shape); }
  bool has_grad() const { return dtype == DType::f32 ? !grad_f32.empty() : !grad_f64.empty(); }
};

Tensor::Impl& Tensor::ref() const {
  if (!impl_) throw std::logic_error("use of an undefined tensor handle");
  return *impl_;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, DType dtype) {
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  std::size_t n = impl->size();
  if (dtype == DType::f32)
    impl->data_f32.assign(n, 0.0f);
  else
    impl->data_f64.assign(n, 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  std::size_t n = t.size();
  if (dtype == DType::f32) {
    float v = static_cast<float>(value);
    for (std::size_t i = 0; i < n; ++i) t.f32()[i] = v;
  } else {
    for (std::size_t i = 0; i < n; ++i) t.f64()[i] = value;
  }
  return t;
}

Tensor Tensor::from(const std::vector<double>& values, std::vector<std::size_t> shape,
                    DType dtype) {
  std::size_t expected = shape_product(shape);
  if (values.size() != expected) {
    std::ostringstream os;
    os << "tensor_from: expected " << expected << " values, got " << values.size()
       << " for shape " << shape_to_string(shape);
    throw std::invalid_argument(os.str());
  }
  Tensor t = zeros(std::move(shape), dtype);
  for (std::size_t i = 0; i < values.size(); ++i) t.set_value_at(i, values[i]);
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return from({value}, {}, dtype); }

const std::vector<std::size_t>& Tensor::shape() const { return ref().shape; }
std::size_t Tensor::size() const { return ref().size(); }
DType Tensor::dtype() const { return ref().dtype; }
bool Tensor::requires_grad() const { return ref().requires_grad; }
void Tensor::set_requires_grad(bool value) { ref().requires_grad = value; }

float* Tensor::f32() {
  if (dtype() != DType::f32) throw std::logic_error("tensor is not float32");
  return ref().data_f32.data();
}
const float* Tensor::f32() const { return const_cast<Tensor*>(this)->f32(); }

double* Tensor::f64() {
  if (dtype() != DType::f64) throw std::logic_error("tensor is not float64");
  return ref().data_f64.data();
}
const double* Tensor::f64() const { return const_cast<Tensor*>(this)->f64(); }

template <>
float* Tensor::data<float>() {
  return f32();
}
template <>
double* Tensor::data<double>() {
  return f64();
}
template <>
const float* Tensor::data<float>() const {
  return f32();
}
template <>
const double* Tensor::data<double>() const {
  return f64();
}

double Tensor::value_at(std::size_t flat) const {
  const Impl& im = ref();
  return im.dtype == DType::f32 ? static_cast<double>(im.data_f32[flat]) : im.data_f64[flat];
}

void Tensor::set_value_at(std::size_t flat, double v) {
  Impl& im = ref();
  if (im.dtype == DType::f32)
    im.data_f32[flat] = static_cast<float>(v);
  else
    im.data_f64[flat] = v;
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::logic_error("item(): tensor holds " + std::to_string(size()) +
                           " elements, expected exactly 1");
  }
  return value_at(0);
}

bool Tensor::has_grad() const { return ref().has_grad(); }

void Tensor::ensure_grad() {
  Impl& im = ref();
  if (im.has_grad()) return;
  if (im.dtype == DType::f32)
    im.grad_f32.assign(im.size(), 0.0f);
  else
    im.grad_f64.assign(im.size(), 0.0);
}

void Tensor::zero_grad() {
  ensure_grad();
  Impl& im = ref();
  if (im.dtype == DType::f32)
    std::memset(im.grad_f32.data(), 0, im.grad_f32.size() * sizeof(float));
  else
    std::memset(im.grad_f64.data(), 0, im.grad_f64.size() * sizeof(double));
}

void Tensor::drop_grad() {
  Impl& im = ref();
  im.grad_f32.clear();
  im.grad_f32.shrink_to_fit();
  im.grad_f64.clear();
  im.grad_f64.shrink_to_fit();
}

float* Tensor::grad_f32() {
  if (dtype() != DType::f32) throw std::logic_error("grad buffer is not float32");
  return ref().grad_f32.data();
}
double* Tensor::grad_f64() {
  if (dtype() != DType::f64) throw std::logic_error("grad buffer is not float64");
  return ref().grad_f64.data();
}
const float* Tensor::grad_f32() const { return const_cast<Tensor*>(this)->grad_f32(); }
const double* Tensor::grad_f64() const { return const_cast<Tensor*>(this)->grad_f64(); }

double Tensor::grad_at(std::size_t flat) const {
  const Impl& im = ref();
  if (!im.has_grad()) throw std::logic_error("grad_at: tensor has no grad buffer");
  return im.dtype == DType::f32 ? static_cast<double>(im.grad_f32[flat]) : im.grad_f64[flat];
}

Tensor Tensor::grad_clone() const {
  const Impl& im = ref();
  if (!im.has_grad()) throw std::logic_error("grad_clone: tensor has no grad buffer");
  Tensor g = Tensor::zeros(im.shape, im.dtype);
  if (im.dtype == DType::f32)
    std::memcpy(g.f32(), im.grad_f32.data(), im.grad_f32.size() * sizeof(float));
  else
    std::memcpy(g.f64(), im.grad_f64.data(), im.grad_f64.size() * sizeof(double));
  return g;
}

Tensor Tensor::clone() const {
  const Impl& im = ref();
  Tensor t = Tensor::zeros(im.shape, im.dtype);
  if (im.dtype == DType::f32)
    std::memcpy(t.f32(), im.data_f32.data(), im.data_f32.size() * sizeof(float));
  else
    std::memcpy(t.f64(), im.data_f64.data(), im.data_f64.size() * sizeof(double));
  return t;
}

void Tensor::copy_data_from(const Tensor& src) {
  Impl& dst = ref();
  const Impl& s = src.ref();
  if (dst.shape != s.shape) {
    throw std::invalid_argument("copy_data_from: shape mismatch " + shape_to_string(dst.shape) +
                                " vs " + shape_to_string(s.shape));
  }
  if (dst.dtype != s.dtype) throw std::invalid_argument("copy_data_from: dtype mismatch");
  if (dst.dtype == DType::f32)
    std::memcpy(dst.data_f32.data(), s.data_f32.data(), s.data_f32.size() * sizeof(float));
  else
    std::memcpy(dst.data_f64.data(), s.data_f64.data(), s.data_f64.size() * sizeof(double));
}

Tensor Tensor::to_dtype(DType dt) const {
  const Impl& im = ref();
  if (dt == im.dtype) return clone();
  Tensor t = Tensor::zeros(im.shape, dt);
  std::size_t n = im.size();
  for (std::size_t i = 0; i < n; ++i) t.set_value_at(i, value_at(i));
  return t;
}

std::size_t Tensor::flat_index(const std::vector<std::size_t>& shape,
                               const std::vector<std::size_t>& index) {
  if (shape.size() != index.size())
    throw std::invalid_argument("flat_index: rank mismatch");
  std::size_t flat = 0;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (index[k] >= shape[k]) throw std::out_of_range("flat_index: index out of range");
    flat = flat * shape[k] + index[k];
  }
  return flat;
}

std::vector<std::size_t> Tensor::unflatten_index(const std::vector<std::size_t>& shape,
                                                 std::size_t flat) {
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t k = shape.size(); k-- > 0;) {
    idx[k] = flat % shape[k];
    flat /= shape[k];
  }
  return idx;
}

}  // namespace funginet
