#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sharekd/model.hpp"

namespace sharekd {

// Checkpoint layout: a text manifest followed by raw little-endian IEEE-754
// doubles.
//
//   sharekd-checkpoint v1
//   config vocab_size=.. max_seq_len=.. hidden_dim=.. num_heads=.. ff_dim=..
//          num_physical_layers=.. num_classes=..          (one line)
//   plan <num_sets> <set>:<I|S>,...
//   tensors <count>
//   <name> <d0>x<d1>.. <byte offset> <fnv1a64 hex>      (one per tensor)
//   end
//   <data>
//
// Offsets are relative to the first byte after the "end" line.

struct ManifestEntry {
  std::string name;
  nk::Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t checksum = 0;
};

struct CheckpointManifest {
  EncoderConfig config;
  SharingPlan plan;
  std::vector<ManifestEntry> entries;
};

std::uint64_t tensor_checksum(const nk::Tensor& t);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
// Throws if the file is malformed, truncated, or (when given) its config
// differs from `expected`.
Model load_checkpoint(const std::filesystem::path& path,
                      const std::optional<EncoderConfig>& expected = std::nullopt);
CheckpointManifest read_manifest(const std::filesystem::path& path);

}  // namespace sharekd
