#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "funginet/tensor.hpp"

namespace funginet {

// One recorded operation. Records are appended in execution order, so a
// reverse walk visits outputs before their inputs.
struct TapeRecord {
  const char* op = "";
  std::vector<Tensor> inputs;
  Tensor output;
  // Reads output.grad and accumulates into the grads of inputs that
  // require gradients. Must be a no-op when output has no grad buffer.
  std::function<void()> backward_fn;
};

class Tape {
 public:
  void record(TapeRecord rec) { records_.push_back(std::move(rec)); }
  std::size_t size() const { return records_.size(); }
  const TapeRecord& at(std::size_t i) const { return records_[i]; }
  void clear() { records_.clear(); }

 private:
  std::vector<TapeRecord> records_;
  friend void backward(const Tensor& loss, Tape& tape);
};

// Thread-local recording scope. Ops record onto the innermost active tape;
// with no scope active they run as pure functions.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* current_tape();

// Seeds d(loss)/d(loss) = 1 and walks the tape in reverse, accumulating
// summed partials into the grad buffer of every requires_grad tensor
// reachable from loss. loss must be a scalar produced through this tape.
void backward(const Tensor& loss, Tape& tape);

void zero_grads(std::span<const Tensor> tensors);

}  // namespace funginet
