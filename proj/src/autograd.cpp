#include "funginet/autograd.hpp"

#include <stdexcept>

namespace funginet {

namespace {
thread_local Tape* g_current_tape = nullptr;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
TapeScope::~TapeScope() { g_current_tape = previous_; }

Tape* current_tape() { return g_current_tape; }

void backward(const Tensor& loss, Tape& tape) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  }
  bool on_tape = false;
  for (const TapeRecord& rec : tape.records_) {
    if (rec.output.same_impl(loss)) {
      on_tape = true;
      break;
    }
  }
  if (!on_tape) {
    throw std::invalid_argument("backward: loss was not produced through this tape");
  }

  Tensor seed = loss;
  seed.ensure_grad();
  if (seed.dtype() == DType::f32)
    seed.grad_f32()[0] += 1.0f;
  else
    seed.grad_f64()[0] += 1.0;

  for (std::size_t i = tape.records_.size(); i-- > 0;) {
    const TapeRecord& rec = tape.records_[i];
    // Records whose output never received gradient are off the loss path.
    if (!rec.output.has_grad()) continue;
    rec.backward_fn();
  }
}

void zero_grads(std::span<const Tensor> tensors) {
  for (const Tensor& t : tensors) {
    Tensor mutable_t = t;
    mutable_t.zero_grad();
  }
}

}  // namespace funginet
