#pragma once

#include <functional>
#include <vector>

#include "sharekd/numkit/tensor.hpp"

namespace sharekd::nk {

// Ordered record of differentiable operations. Ops append an entry only when
// the tape is recording and at least one input requires a gradient; backward
// replays the entries in reverse and accumulates into every reachable
// requires_grad tensor. Leaf gradients accumulate across tapes until the
// caller clears them, which is how minibatch gradients are summed.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  void record(Tensor output, std::function<void()> backward);

  // Requires a scalar loss produced by the last recorded entry. A tape can be
  // differentiated once; call reset() to reuse it.
  void backward(Tensor loss);

  void reset();

 private:
  struct Entry {
    Tensor output;
    std::function<void()> backward;
  };

  bool recording_;
  bool consumed_ = false;
  std::vector<Entry> entries_;
};

}  // namespace sharekd::nk
