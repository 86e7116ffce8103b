#pragma once

#include <span>
#include <vector>

#include "sharekd/model.hpp"
#include "sharekd/numkit/tape.hpp"
#include "sharekd/numkit/tensor.hpp"

namespace sharekd {

struct ForwardOutput {
  nk::Tensor logits;                      // [batch, classes]
  std::vector<nk::Tensor> hidden_states;  // per physical layer, [batch, d] at position 0
};

// softmax(Q K^T / sqrt(d_k)) V for a single head.
nk::Tensor scaled_dot_attention(nk::Tape& tape, const nk::Tensor& q, const nk::Tensor& k,
                                const nk::Tensor& v);

// Post-norm encoder: x = LN(x + MHA(x)); x = LN(x + FFN(x)) per physical
// layer, with GELU in the feed-forward block. Position 0 feeds the head.
// All sequences in a batch must share one length.
ForwardOutput encoder_forward(nk::Tape& tape, const Model& model,
                              std::span<const Sequence> batch);

// Inference-only convenience: nothing is recorded.
ForwardOutput encoder_forward(const Model& model, std::span<const Sequence> batch);

}  // namespace sharekd
