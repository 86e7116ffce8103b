#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sharekd/numkit/tensor.hpp"
#include "sharekd/sps.hpp"

namespace sharekd {

class Rng;

using TokenId = std::uint32_t;
using Sequence = std::vector<TokenId>;

struct EncoderConfig {
  std::size_t vocab_size = 32;
  std::size_t max_seq_len = 16;
  std::size_t hidden_dim = 32;
  std::size_t num_heads = 2;
  std::size_t ff_dim = 64;
  std::size_t num_physical_layers = 1;
  std::size_t num_classes = 2;

  std::size_t head_dim() const { return hidden_dim / num_heads; }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

// One encoder block's trainable tensors.
struct LayerParams {
  nk::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  nk::Tensor w_ff1, b_ff1, w_ff2, b_ff2;
  nk::Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;

  // Visits tensors in a fixed order with stable names.
  void for_each(const std::function<void(const std::string&, nk::Tensor&)>& fn);
  void visit(const std::function<void(const std::string&, const nk::Tensor&)>& fn) const;
};

struct NamedTensor {
  std::string name;
  nk::Tensor tensor;
};

// Distinct trainable tensors. Each parameter set exists exactly once no
// matter how many physical layers a SharingPlan routes through it.
struct ParamStore {
  nk::Tensor token_embedding;     // [vocab, d]
  nk::Tensor position_embedding;  // [max_seq_len, d]
  std::vector<LayerParams> layer_sets;
  nk::Tensor head_w;  // [d, classes]
  nk::Tensor head_b;  // [classes]

  std::vector<NamedTensor> named_tensors() const;
  // Handles (aliases) to every stored tensor.
  std::vector<nk::Tensor> parameters() const;
  ParamStore clone() const;
  void zero_grad();
};

// Fresh store with N(0, init_std) weights, zero biases, unit layer-norm scale.
ParamStore init_params(const EncoderConfig& config, std::size_t num_param_sets, Rng& rng,
                       double init_std);
LayerParams init_layer(const EncoderConfig& config, Rng& rng, double init_std);
void init_head(ParamStore& store, std::size_t hidden_dim, std::size_t num_classes, Rng& rng,
               double init_std);

// Configuration, storage and routing of one encoder classifier.
struct Model {
  EncoderConfig config;
  ParamStore store;
  SharingPlan plan;

  void validate() const;
  Model clone() const;
};

}  // namespace sharekd
