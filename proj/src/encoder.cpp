#include "sharekd/encoder.hpp"

#include <stdexcept>
#include <string>

#include "sharekd/numkit/ops.hpp"

namespace sharekd {

using nk::Tape;
using nk::Tensor;

Tensor scaled_dot_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2) throw std::invalid_argument("scaled_dot_attention: Q must be a matrix");
  return nk::block_attention(tape, q, k, v, q.rows(), 1);
}

ForwardOutput encoder_forward(Tape& tape, const Model& model, std::span<const Sequence> batch) {
  const EncoderConfig& cfg = model.config;
  if (batch.empty()) throw std::invalid_argument("encoder_forward: empty batch");
  const std::size_t n = batch.front().size();
  if (n == 0) throw std::invalid_argument("encoder_forward: empty token sequence");
  if (n > cfg.max_seq_len) {
    throw std::invalid_argument("encoder_forward: sequence length " + std::to_string(n) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  if (model.plan.size() != cfg.num_physical_layers) {
    throw std::invalid_argument("encoder_forward: plan length does not match config");
  }

  std::vector<std::size_t> token_ids, position_ids, cls_rows;
  token_ids.reserve(batch.size() * n);
  position_ids.reserve(batch.size() * n);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Sequence& seq = batch[b];
    if (seq.size() != n) {
      throw std::invalid_argument("encoder_forward: sequences in a batch must share one length");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (seq[i] >= cfg.vocab_size) {
        throw std::out_of_range("encoder_forward: token id " + std::to_string(seq[i]) +
                                " outside vocabulary of " + std::to_string(cfg.vocab_size));
      }
      token_ids.push_back(seq[i]);
      position_ids.push_back(i);
    }
    cls_rows.push_back(b * n);
  }

  const ParamStore& store = model.store;
  Tensor x = nk::add(tape, nk::gather_rows(tape, store.token_embedding, token_ids),
                     nk::gather_rows(tape, store.position_embedding, position_ids));

  ForwardOutput out;
  for (std::size_t layer = 0; layer < model.plan.size(); ++layer) {
    const LayerParams p = resolve_layer_params(store, model.plan, layer);
    Tensor q = nk::linear(tape, x, p.wq, p.bq);
    // The key bias shifts every score in a query row by the same amount, which
    // softmax cancels exactly, so it is stored but never enters the graph.
    Tensor k = nk::matmul(tape, x, p.wk);
    Tensor v = nk::linear(tape, x, p.wv, p.bv);
    Tensor attn = nk::block_attention(tape, q, k, v, n, cfg.num_heads);
    Tensor proj = nk::linear(tape, attn, p.wo, p.bo);
    x = nk::layer_norm_rows(tape, nk::add(tape, x, proj), p.ln1_gamma, p.ln1_beta);
    Tensor hidden = nk::gelu(tape, nk::linear(tape, x, p.w_ff1, p.b_ff1));
    Tensor ff = nk::linear(tape, hidden, p.w_ff2, p.b_ff2);
    x = nk::layer_norm_rows(tape, nk::add(tape, x, ff), p.ln2_gamma, p.ln2_beta);
    out.hidden_states.push_back(nk::gather_rows(tape, x, cls_rows));
  }
  out.logits = nk::linear(tape, out.hidden_states.back(), store.head_w, store.head_b);
  return out;
}

ForwardOutput encoder_forward(const Model& model, std::span<const Sequence> batch) {
  Tape tape(false);
  return encoder_forward(tape, model, batch);
}

}  // namespace sharekd
