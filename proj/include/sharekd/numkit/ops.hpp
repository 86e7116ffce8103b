#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sharekd/numkit/tape.hpp"
#include "sharekd/numkit/tensor.hpp"

// Differentiable primitives. Every op takes the tape it records onto; passing
// a non-recording tape evaluates values only.
namespace sharekd::nk {

inline constexpr double kLogFloor = 1e-12;

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
// x[m,k] * w[k,n] + b[n]
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor sum(Tape& tape, const Tensor& a);
Tensor gelu(Tape& tape, const Tensor& x);

// Row-wise softmax with max subtraction. Throws on non-finite input.
Tensor softmax_rows(Tape& tape, const Tensor& m);

Tensor layer_norm_rows(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-12);
Tensor normalize_rows(Tape& tape, const Tensor& x);

// out[i] = table[ids[i]]
Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> ids);

// Multi-head scaled dot-product attention over consecutive blocks of
// `seq_len` rows. Heads are contiguous column slices of width d / heads.
Tensor block_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v,
                       std::size_t seq_len, std::size_t heads);

// -log(max(probs[label], kLogFloor)) for a probability vector.
Tensor cross_entropy(Tape& tape, const Tensor& probs, std::size_t label);
// Mean over rows of the per-row cross entropy.
Tensor cross_entropy_rows(Tape& tape, const Tensor& probs, std::span<const std::size_t> labels);

// sum_i p_i ln(p_i / q_i) with 0 ln 0 = 0. Throws when q_i == 0 < p_i.
Tensor kl_div(Tape& tape, const Tensor& p, const Tensor& q);
// Mean over rows of the per-row divergence.
Tensor kl_div_rows(Tape& tape, const Tensor& p, const Tensor& q);

// Sum of squared differences.
Tensor mse(Tape& tape, const Tensor& a, const Tensor& b);

}  // namespace sharekd::nk
