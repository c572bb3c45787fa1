#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace funginet {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

inline const char* dtype_name(DType dt) { return dt == DType::f32 ? "float32" : "float64"; }
inline std::size_t dtype_size(DType dt) { return dt == DType::f32 ? 4 : 8; }

std::string shape_to_string(const std::vector<std::size_t>& shape);

// Dense row-major tensor. The handle is a cheap shared reference; data is
// immutable by convention after construction except for the grad buffer.
// A rank-0 tensor holds exactly one element (scalar convention).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, DType dtype = DType::f32);
  static Tensor full(std::vector<std::size_t> shape, double value, DType dtype = DType::f32);
  // Row-major construction; throws if values.size() != product(shape).
  static Tensor from(const std::vector<double>& values, std::vector<std::size_t> shape,
                     DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t extent(std::size_t axis) const { return shape().at(axis); }
  DType dtype() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  float* f32();
  const float* f32() const;
  double* f64();
  const double* f64() const;

  template <typename T>
  T* data();
  template <typename T>
  const T* data() const;

  // Element access through the row-major flat index; converts to double.
  double value_at(std::size_t flat) const;
  void set_value_at(std::size_t flat, double v);
  double item() const;  // requires size() == 1

  bool has_grad() const;
  void ensure_grad();  // allocates a zero-filled grad buffer if absent
  void zero_grad();    // allocates if absent, then fills with zeros
  void drop_grad();    // releases the grad buffer
  float* grad_f32();
  double* grad_f64();
  const float* grad_f32() const;
  const double* grad_f64() const;
  double grad_at(std::size_t flat) const;
  Tensor grad_clone() const;  // grad buffer as a fresh tensor

  Tensor clone() const;                  // deep copy of data (grad not copied)
  void copy_data_from(const Tensor& src);  // same shape + dtype, bitwise copy
  Tensor to_dtype(DType dt) const;

  bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }
  const void* id() const { return impl_.get(); }

  static std::size_t flat_index(const std::vector<std::size_t>& shape,
                                const std::vector<std::size_t>& index);
  static std::vector<std::size_t> unflatten_index(const std::vector<std::size_t>& shape,
                                                  std::size_t flat);

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& ref() const;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

}  // namespace funginet
