#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace sharekd {

struct LayerParams;
struct ParamStore;

enum class Role { Identity, SwapQK };
enum class SharingMode { Plain, SPS1, SPS2 };

std::string_view to_string(Role role);
std::string_view to_string(SharingMode mode);
SharingMode parse_sharing_mode(std::string_view text);

struct PlanEntry {
  std::size_t param_set = 0;
  Role role = Role::Identity;
  bool operator==(const PlanEntry&) const = default;
};

// Physical layer -> (parameter set, role). Immutable once built.
class SharingPlan {
 public:
  SharingPlan() = default;
  SharingPlan(std::vector<PlanEntry> entries, std::size_t num_param_sets);

  const std::vector<PlanEntry>& entries() const { return entries_; }
  const PlanEntry& operator[](std::size_t layer) const { return entries_.at(layer); }
  std::size_t size() const { return entries_.size(); }
  std::size_t num_param_sets() const { return num_param_sets_; }

  // Compact text form used in checkpoint manifests: "3 0:I,1:I,2:I,0:S,1:S,2:S".
  std::string serialize() const;
  static SharingPlan parse(std::string_view text);

  bool operator==(const SharingPlan&) const = default;

 private:
  std::vector<PlanEntry> entries_;
  std::size_t num_param_sets_ = 0;
};

// Plain: n layers. SPS1/SPS2: the n sets are stacked twice, the upper copy
// with swapped query/key roles under SPS2. A 6-set student only shares its
// top three sets, giving 9 physical layers.
SharingPlan build_sharing_plan(std::size_t n_independent, SharingMode mode);

// Handles that alias the stored tensors; SwapQK exchanges query and key
// weights and biases, everything else is passed through.
LayerParams apply_role(const LayerParams& params, Role role);
LayerParams resolve_layer_params(const ParamStore& store, const SharingPlan& plan,
                                 std::size_t layer);

// Element count of distinct stored tensors. Excluding embeddings also
// excludes the classifier head, leaving encoder-layer parameters only.
std::size_t count_parameters(const ParamStore& store, bool include_embeddings);

}  // namespace sharekd
