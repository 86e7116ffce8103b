#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sharekd/checkpoint.hpp"
#include "sharekd/distill.hpp"
#include "sharekd/encoder.hpp"

namespace sharekd {
namespace {

namespace fs = std::filesystem;

Model sample_model(SharingMode mode) {
  const auto plan = build_sharing_plan(2, mode);
  EncoderConfig cfg{.vocab_size = 10, .max_seq_len = 6, .hidden_dim = 8, .num_heads = 2,
                    .ff_dim = 12, .num_physical_layers = plan.size(), .num_classes = 3};
  return init_model(cfg, plan, 3, 0.2);
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("sharekd_" + name); }

TEST(Checkpoint, RoundTripPreservesValuesAndSharing) {
  const Model m = sample_model(SharingMode::SPS2);
  const auto path = temp_file("ckpt_roundtrip.ckpt");
  save_checkpoint(path, m);
  const Model back = load_checkpoint(path, m.config);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.plan, m.plan);
  const auto a = m.store.named_tensors(), b = back.store.named_tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(tensor_checksum(a[i].tensor), tensor_checksum(b[i].tensor));
  }
  // Routing still aliases after reload.
  EXPECT_TRUE(resolve_layer_params(back.store, back.plan, 2).wq.same_storage(
      back.store.layer_sets[0].wk));
  const std::vector<Sequence> batch{{0, 4, 5, 6, 7, 1}};
  const auto la = encoder_forward(m, batch).logits, lb = encoder_forward(back, batch).logits;
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la.data()[i], lb.data()[i]);
}

TEST(Checkpoint, ManifestListsEveryTensorOnce) {
  const Model m = sample_model(SharingMode::SPS1);
  const auto path = temp_file("ckpt_manifest.ckpt");
  save_checkpoint(path, m);
  const auto manifest = read_manifest(path);
  EXPECT_EQ(manifest.entries.size(), m.store.named_tensors().size());
  EXPECT_EQ(manifest.plan, m.plan);
  std::size_t elements = 0;
  for (const auto& e : manifest.entries) elements += nk::shape_size(e.shape);
  EXPECT_EQ(elements, count_parameters(m.store, true));
}

TEST(Checkpoint, RejectsConfigMismatch) {
  const Model m = sample_model(SharingMode::Plain);
  const auto path = temp_file("ckpt_mismatch.ckpt");
  save_checkpoint(path, m);
  EncoderConfig other = m.config;
  other.hidden_dim = 16;
  EXPECT_THROW(load_checkpoint(path, other), std::runtime_error);
}

TEST(Checkpoint, DetectsCorruptionAndTruncation) {
  const Model m = sample_model(SharingMode::Plain);
  const auto path = temp_file("ckpt_corrupt.ckpt");
  save_checkpoint(path, m);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x40;
  std::ofstream(path, std::ios::binary) << flipped;
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 16);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  EXPECT_THROW(load_checkpoint(temp_file("ckpt_missing.ckpt")), std::runtime_error);
}

}  // namespace
}  // namespace sharekd
