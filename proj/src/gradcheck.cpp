#include "funginet/gradcheck.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "funginet/autograd.hpp"
#include "funginet/tensor_ops.hpp"

namespace funginet {

namespace {

double scalar_eval(const GradCheckOp& op, const std::vector<Tensor>& inputs) {
  Tensor out = op(inputs);
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out.value_at(i);
  return acc;
}

}  // namespace

double grad_check(const GradCheckOp& op, const std::vector<Tensor>& inputs, double step) {
  for (const Tensor& t : inputs) {
    if (t.dtype() != DType::f64) {
      throw std::invalid_argument("grad_check: inputs must be float64");
    }
  }

  // Analytic pass: fresh requires_grad copies, forward, reduce, backward.
  std::vector<Tensor> tracked;
  tracked.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    Tensor c = t.clone();
    c.set_requires_grad(true);
    tracked.push_back(c);
  }
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor out = op(tracked);
    Tensor loss = sum(out);
    backward(loss, tape);
  }

  double max_rel = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    std::vector<Tensor> probe;
    for (const Tensor& in : inputs) probe.push_back(in.clone());
    std::size_t n = inputs[t].size();
    for (std::size_t i = 0; i < n; ++i) {
      double original = probe[t].value_at(i);
      probe[t].set_value_at(i, original + step);
      double f_plus = scalar_eval(op, probe);
      probe[t].set_value_at(i, original - step);
      double f_minus = scalar_eval(op, probe);
      probe[t].set_value_at(i, original);
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw std::runtime_error("grad_check: non-finite value while probing input " +
                                 std::to_string(t) + " entry " + std::to_string(i));
      }
      double fd = (f_plus - f_minus) / (2.0 * step);
      double analytic = tracked[t].has_grad() ? tracked[t].grad_at(i) : 0.0;
      double denom = std::max({std::fabs(analytic), std::fabs(fd), 1e-8});
      double rel = std::fabs(analytic - fd) / denom;
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace funginet
