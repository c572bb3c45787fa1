#include <doctest.h>

#include <stdexcept>

#include "funginet/tensor.hpp"

using namespace funginet;

TEST_CASE("tensor_from builds row-major data") {
  Tensor t = Tensor::from({1, 2, 3, 4}, {2, 2});
  CHECK(t.shape() == std::vector<std::size_t>{2, 2});
  CHECK(t.value_at(0) == 1);
  CHECK(t.value_at(1) == 2);
  CHECK(t.value_at(2) == 3);
  CHECK(t.value_at(3) == 4);
  CHECK_FALSE(t.requires_grad());
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("scalar tensors have empty shape and one element") {
  Tensor s = Tensor::from({5.0}, {});
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s.item() == 5.0);
}

TEST_CASE("tensor_from rejects length mismatches naming both lengths") {
  CHECK_THROWS_WITH_AS(Tensor::from({1, 2, 3}, {2, 2}),
                       doctest::Contains("expected 4 values, got 3"), std::invalid_argument);
}

TEST_CASE("row-major flat index round-trips exhaustively up to rank 4") {
  const std::vector<std::vector<std::size_t>> shapes = {
      {7}, {3, 5}, {2, 3, 4}, {2, 3, 2, 4}, {1, 1, 1, 1}, {4, 1, 3}};
  for (const auto& shape : shapes) {
    std::size_t n = shape_product(shape);
    for (std::size_t flat = 0; flat < n; ++flat) {
      auto idx = Tensor::unflatten_index(shape, flat);
      CHECK(Tensor::flat_index(shape, idx) == flat);
    }
  }
  // Spot-check the addressing formula directly: (i,j,k) in (2,3,4).
  CHECK(Tensor::flat_index({2, 3, 4}, {1, 2, 3}) == 1 * 12 + 2 * 4 + 3);
}

TEST_CASE("grad buffers allocate lazily and zero correctly") {
  Tensor t = Tensor::from({1, 2}, {2});
  t.set_requires_grad(true);
  CHECK_FALSE(t.has_grad());
  t.ensure_grad();
  REQUIRE(t.has_grad());
  CHECK(t.grad_at(0) == 0.0);
  t.grad_f32()[0] = 3.5f;
  t.zero_grad();
  CHECK(t.grad_at(0) == 0.0);
}

TEST_CASE("clone copies data but not grad; copy_data_from checks shape") {
  Tensor t = Tensor::from({1, 2, 3, 4}, {2, 2});
  t.set_requires_grad(true);
  t.ensure_grad();
  Tensor c = t.clone();
  CHECK(c.value_at(3) == 4);
  CHECK_FALSE(c.has_grad());
  Tensor other = Tensor::zeros({3});
  CHECK_THROWS_AS(other.copy_data_from(t), std::invalid_argument);
}

TEST_CASE("float64 tensors hold doubles") {
  Tensor t = Tensor::from({0.1, 0.2}, {2}, DType::f64);
  CHECK(t.dtype() == DType::f64);
  CHECK(t.value_at(0) == doctest::Approx(0.1).epsilon(1e-15));
}
