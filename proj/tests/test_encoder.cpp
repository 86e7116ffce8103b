#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sharekd/distill.hpp"
#include "sharekd/encoder.hpp"
#include "sharekd/numkit/check.hpp"
#include "sharekd/numkit/ops.hpp"
#include "sharekd/rng.hpp"

namespace sharekd {
namespace {

using nk::Tensor;

oracle::Mat to_mat(const Tensor& t) {
  oracle::Mat m(t.rows(), oracle::Vec(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

oracle::Vec to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

oracle::Mat affine(const oracle::Mat& x, const Tensor& w, const Tensor& b) {
  oracle::Mat out = oracle::matmul(x, to_mat(w));
  for (auto& row : out)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b.at(j);
  return out;
}

// Single-head, single-sequence forward pass written out from scratch.
oracle::Vec forward_oracle(const Model& m, const Sequence& seq) {
  const ParamStore& s = m.store;
  oracle::Mat x;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    oracle::Vec row(m.config.hidden_dim);
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = s.token_embedding.at(seq[i], j) + s.position_embedding.at(i, j);
    x.push_back(row);
  }
  for (const auto& entry : m.plan.entries()) {
    const LayerParams& p = s.layer_sets[entry.param_set];
    const bool swap = entry.role == Role::SwapQK;
    auto q = affine(x, swap ? p.wk : p.wq, swap ? p.bk : p.bq);
    auto k = affine(x, swap ? p.wq : p.wk, swap ? p.bq : p.bk);
    auto v = affine(x, p.wv, p.bv);
    auto a = affine(oracle::attention(q, k, v), p.wo, p.bo);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t j = 0; j < x[i].size(); ++j) a[i][j] += x[i][j];
      x[i] = oracle::layer_norm(a[i], to_vec(p.ln1_gamma), to_vec(p.ln1_beta), 1e-12);
    }
    auto h = affine(x, p.w_ff1, p.b_ff1);
    for (auto& row : h)
      for (double& z : row) z = oracle::gelu(z);
    auto f = affine(h, p.w_ff2, p.b_ff2);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t j = 0; j < x[i].size(); ++j) f[i][j] += x[i][j];
      x[i] = oracle::layer_norm(f[i], to_vec(p.ln2_gamma), to_vec(p.ln2_beta), 1e-12);
    }
  }
  return affine({x[0]}, s.head_w, s.head_b)[0];
}

void randomize(Model& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& t : m.store.parameters())
    for (double& v : t.data()) v = rng.normal(0.0, 0.5);
}

TEST(ScaledDotAttention, ZeroQueriesAverageValues) {
  nk::Tape tape(false);
  Tensor z = Tensor::zeros({3, 2});
  Tensor v = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 9});
  Tensor out = scaled_dot_attention(tape, z, z, v);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(out.at(i, 0), 3.0, 1e-15);
    EXPECT_NEAR(out.at(i, 1), 5.0, 1e-15);
  }
}

TEST(ScaledDotAttention, SingleRowReturnsValue) {
  nk::Tape tape(false);
  Tensor out = scaled_dot_attention(tape, Tensor::matrix(1, 2, {0.3, -2}),
                                    Tensor::matrix(1, 2, {4, 1}), Tensor::matrix(1, 2, {7, -8}));
  EXPECT_DOUBLE_EQ(out.at(0, 0), 7.0);
  EXPECT_DOUBLE_EQ(out.at(0, 1), -8.0);
}

TEST(ScaledDotAttention, MatchesOracle2x2) {
  Rng rng(11);
  std::vector<double> vals(12);
  for (double& v : vals) v = rng.normal();
  Tensor q = Tensor::matrix(2, 2, {vals[0], vals[1], vals[2], vals[3]});
  Tensor k = Tensor::matrix(2, 2, {vals[4], vals[5], vals[6], vals[7]});
  Tensor v = Tensor::matrix(2, 2, {vals[8], vals[9], vals[10], vals[11]});
  nk::Tape tape(false);
  Tensor out = scaled_dot_attention(tape, q, k, v);
  const auto ref = oracle::attention(to_mat(q), to_mat(k), to_mat(v));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(out.at(i, j), ref[i][j], 1e-14);
}

TEST(ScaledDotAttention, ShapeMismatchThrows) {
  nk::Tape tape(false);
  EXPECT_THROW(scaled_dot_attention(tape, Tensor::zeros({2, 2}), Tensor::zeros({3, 2}),
                                    Tensor::zeros({3, 2})),
               std::invalid_argument);
}

TEST(ScaledDotAttention, PermutationEquivariant) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(5), d = 1 + rng.below(4);
    std::vector<double> a(n * d), b(n * d), c(n * d);
    for (auto* vec : {&a, &b, &c})
      for (double& x : *vec) x = rng.normal();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    auto permuted = [&](const std::vector<double>& src) {
      std::vector<double> out(n * d);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = src[perm[i] * d + j];
      return Tensor::matrix(n, d, out);
    };
    nk::Tape tape(false);
    Tensor base = scaled_dot_attention(tape, Tensor::matrix(n, d, a), Tensor::matrix(n, d, b),
                                       Tensor::matrix(n, d, c));
    Tensor perm_out = scaled_dot_attention(tape, permuted(a), permuted(b), permuted(c));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(perm_out.at(i, j), base.at(perm[i], j), 1e-12);
  }
}

TEST(EncoderForward, ZeroWeightsGiveUniformPrediction) {
  EncoderConfig cfg{.vocab_size = 8, .max_seq_len = 4, .hidden_dim = 4, .num_heads = 2,
                    .ff_dim = 8, .num_physical_layers = 2, .num_classes = 3};
  Model m = init_model(cfg, build_sharing_plan(2, SharingMode::Plain), 0, 0.1);
  for (auto& t : m.store.parameters())
    for (double& v : t.data()) v = 0.0;
  for (auto& set : m.store.layer_sets) {
    for (double& v : set.ln1_gamma.data()) v = 1.0;
    for (double& v : set.ln2_gamma.data()) v = 1.0;
  }
  const std::vector<Sequence> batch{{0, 4, 5, 1}};
  ForwardOutput out = encoder_forward(m, batch);
  nk::Tape tape(false);
  Tensor probs = nk::softmax_rows(tape, out.logits);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(out.logits.at(0, c), 0.0);
    EXPECT_NEAR(probs.at(0, c), 1.0 / 3.0, 1e-15);
  }
}

TEST(EncoderForward, OutputShapes) {
  EncoderConfig cfg{.vocab_size = 10, .max_seq_len = 6, .hidden_dim = 8, .num_heads = 2,
                    .ff_dim = 16, .num_physical_layers = 4, .num_classes = 5};
  Model m = init_model(cfg, build_sharing_plan(2, SharingMode::SPS2), 1, 0.1);
  const std::vector<Sequence> batch{{0, 4, 5}, {0, 6, 7}, {0, 8, 9}};
  ForwardOutput out = encoder_forward(m, batch);
  EXPECT_EQ(out.logits.shape(), (nk::Shape{3, 5}));
  ASSERT_EQ(out.hidden_states.size(), 4u);
  for (const auto& h : out.hidden_states) EXPECT_EQ(h.shape(), (nk::Shape{3, 8}));
}

TEST(EncoderForward, MatchesIndependentOracle) {
  EncoderConfig cfg{.vocab_size = 6, .max_seq_len = 5, .hidden_dim = 2, .num_heads = 1,
                    .ff_dim = 3, .num_physical_layers = 1, .num_classes = 2};
  Model m = init_model(cfg, build_sharing_plan(1, SharingMode::Plain), 0, 0.5);
  randomize(m, 0);
  const Sequence seq{0, 4, 2, 5, 1};
  const std::vector<Sequence> batch{seq};
  ForwardOutput out = encoder_forward(m, batch);
  const auto ref = forward_oracle(m, seq);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(out.logits.at(0, c), ref[c], 1e-10);
}

TEST(EncoderForward, SwappedStackMatchesOracle) {
  EncoderConfig cfg{.vocab_size = 6, .max_seq_len = 5, .hidden_dim = 4, .num_heads = 1,
                    .ff_dim = 5, .num_physical_layers = 2, .num_classes = 3};
  Model m = init_model(cfg, build_sharing_plan(1, SharingMode::SPS2), 0, 0.5);
  randomize(m, 3);
  const Sequence seq{0, 3, 4, 5};
  const std::vector<Sequence> batch{seq};
  ForwardOutput out = encoder_forward(m, batch);
  const auto ref = forward_oracle(m, seq);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.logits.at(0, c), ref[c], 1e-10);
}

TEST(EncoderForward, RejectsOversizedAndUnknownTokens) {
  EncoderConfig cfg{.vocab_size = 6, .max_seq_len = 3, .hidden_dim = 4, .num_heads = 2,
                    .ff_dim = 4, .num_physical_layers = 1, .num_classes = 2};
  Model m = init_model(cfg, build_sharing_plan(1, SharingMode::Plain), 0, 0.1);
  const std::vector<Sequence> long_batch{{0, 1, 2, 3}};
  EXPECT_THROW(encoder_forward(m, long_batch), std::invalid_argument);
  const std::vector<Sequence> bad_token{{0, 9, 2}};
  EXPECT_THROW(encoder_forward(m, bad_token), std::out_of_range);
  const std::vector<Sequence> ragged{{0, 1, 2}, {0, 1}};
  EXPECT_THROW(encoder_forward(m, ragged), std::invalid_argument);
}

TEST(EncoderForward, PureFunctionOfInputs) {
  EncoderConfig cfg{.vocab_size = 9, .max_seq_len = 5, .hidden_dim = 8, .num_heads = 2,
                    .ff_dim = 8, .num_physical_layers = 2, .num_classes = 2};
  Model m = init_model(cfg, build_sharing_plan(2, SharingMode::Plain), 4, 0.3);
  const std::vector<Sequence> batch{{0, 4, 5, 6, 1}, {0, 8, 7, 2, 1}};
  const auto before = m.store.clone();
  ForwardOutput a = encoder_forward(m, batch);
  ForwardOutput b = encoder_forward(m, batch);
  for (std::size_t i = 0; i < a.logits.size(); ++i) EXPECT_EQ(a.logits.data()[i], b.logits.data()[i]);
  const auto after = m.store.named_tensors();
  const auto ref = before.named_tensors();
  for (std::size_t i = 0; i < ref.size(); ++i)
    for (std::size_t j = 0; j < ref[i].tensor.size(); ++j)
      EXPECT_EQ(after[i].tensor.data()[j], ref[i].tensor.data()[j]);
}

TEST(EncoderForward, ClassifierLossPassesGradCheck) {
  EncoderConfig cfg{.vocab_size = 8, .max_seq_len = 4, .hidden_dim = 8, .num_heads = 2,
                    .ff_dim = 12, .num_physical_layers = 2, .num_classes = 2};
  Model m = init_model(cfg, build_sharing_plan(2, SharingMode::Plain), 5, 0.5);
  const std::vector<Sequence> batch{{0, 4, 5, 6}, {0, 7, 3, 2}};
  const std::vector<std::size_t> labels{0, 1};
  auto params = m.store.parameters();
  auto res = nk::finite_diff_check(
      [&](nk::Tape& t) {
        auto out = encoder_forward(t, m, batch);
        return nk::cross_entropy_rows(t, nk::softmax_rows(t, out.logits), labels);
      },
      params, 1e-5);
  EXPECT_LE(res.max_rel_error, 1e-4) << "param " << res.worst_param << "[" << res.worst_index << "] analytic " << res.analytic << " numeric " << res.numeric;
}

}  // namespace
}  // namespace sharekd

namespace sharekd {
namespace {

TEST(EncoderForward, KeyBiasLeavesOutputUnchanged) {
  EncoderConfig cfg{.vocab_size = 8, .max_seq_len = 4, .hidden_dim = 8, .num_heads = 2,
                    .ff_dim = 12, .num_physical_layers = 1, .num_classes = 2};
  Model m = init_model(cfg, build_sharing_plan(1, SharingMode::Plain), 9, 0.5);
  const std::vector<Sequence> batch{{0, 4, 5, 6}, {0, 7, 3, 2}};
  const auto before = encoder_forward(m, batch).logits;
  Model shifted = m.clone();
  for (double& v : shifted.store.layer_sets[0].bk.data()) v += 3.0;
  const auto after = encoder_forward(shifted, batch).logits;
  // Oracle: the same shift applied to explicit per-row scores changes no softmax.
  const auto p = oracle::softmax({0.3, -1.2, 2.0});
  const auto q = oracle::softmax({3.3, 1.8, 5.0});
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-15);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before.data()[i], after.data()[i]);
}

}  // namespace
}  // namespace sharekd
