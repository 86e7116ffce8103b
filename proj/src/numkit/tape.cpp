#include "sharekd/numkit/tape.hpp"

#include <stdexcept>

namespace sharekd::nk {

void Tape::record(Tensor output, std::function<void()> backward) {
  if (consumed_) throw std::logic_error("recording onto a tape that was already differentiated");
  output.set_requires_grad(true);
  entries_.push_back({std::move(output), std::move(backward)});
}

void Tape::backward(Tensor loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward needs a scalar loss, got shape " +
                                shape_str(loss.shape()));
  }
  if (consumed_) throw std::logic_error("backward called twice on the same tape without reset");
  if (entries_.empty() || !entries_.back().output.same_storage(loss)) {
    throw std::invalid_argument("loss is not the last output recorded on this tape");
  }
  consumed_ = true;
  loss.grad_mut()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
}

}  // namespace sharekd::nk
