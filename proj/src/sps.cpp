#include "sharekd/sps.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "sharekd/model.hpp"

namespace sharekd {

std::string_view to_string(Role role) {
  return role == Role::Identity ? "identity" : "swap_qk";
}

std::string_view to_string(SharingMode mode) {
  switch (mode) {
    case SharingMode::Plain: return "Plain";
    case SharingMode::SPS1: return "SPS1";
    case SharingMode::SPS2: return "SPS2";
  }
  return "?";
}

SharingMode parse_sharing_mode(std::string_view text) {
  if (text == "Plain") return SharingMode::Plain;
  if (text == "SPS1") return SharingMode::SPS1;
  if (text == "SPS2") return SharingMode::SPS2;
  throw std::invalid_argument("unknown sharing mode '" + std::string(text) +
                              "' (expected Plain, SPS1 or SPS2)");
}

SharingPlan::SharingPlan(std::vector<PlanEntry> entries, std::size_t num_param_sets)
    : entries_(std::move(entries)), num_param_sets_(num_param_sets) {
  if (entries_.empty()) throw std::invalid_argument("sharing plan: no layers");
  std::vector<bool> seen(num_param_sets_, false);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.param_set >= num_param_sets_) {
      throw std::invalid_argument("sharing plan: layer " + std::to_string(i) +
                                  " references set " + std::to_string(e.param_set) + " of " +
                                  std::to_string(num_param_sets_));
    }
    if (e.role == Role::SwapQK && !seen[e.param_set]) {
      throw std::invalid_argument("sharing plan: layer " + std::to_string(i) +
                                  " swaps set " + std::to_string(e.param_set) +
                                  " before any identity use of it");
    }
    if (e.role == Role::Identity) seen[e.param_set] = true;
  }
  for (std::size_t s = 0; s < num_param_sets_; ++s) {
    if (!seen[s]) {
      throw std::invalid_argument("sharing plan: parameter set " + std::to_string(s) +
                                  " is never used");
    }
  }
}

std::string SharingPlan::serialize() const {
  std::string out = std::to_string(num_param_sets_) + " ";
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(entries_[i].param_set);
    out += entries_[i].role == Role::Identity ? ":I" : ":S";
  }
  return out;
}

SharingPlan SharingPlan::parse(std::string_view text) {
  const auto space = text.find(' ');
  if (space == std::string_view::npos) throw std::invalid_argument("sharing plan: malformed '" + std::string(text) + "'");
  auto parse_int = [&](std::string_view s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw std::invalid_argument("sharing plan: bad integer '" + std::string(s) + "'");
    }
    return v;
  };
  const std::size_t sets = parse_int(text.substr(0, space));
  std::vector<PlanEntry> entries;
  std::string_view rest = text.substr(space + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    std::string_view item = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos || colon + 2 != item.size()) {
      throw std::invalid_argument("sharing plan: bad entry '" + std::string(item) + "'");
    }
    const char role = item[colon + 1];
    if (role != 'I' && role != 'S') {
      throw std::invalid_argument("sharing plan: bad role in '" + std::string(item) + "'");
    }
    entries.push_back({parse_int(item.substr(0, colon)), role == 'I' ? Role::Identity : Role::SwapQK});
  }
  return SharingPlan(std::move(entries), sets);
}

SharingPlan build_sharing_plan(std::size_t n_independent, SharingMode mode) {
  if (n_independent == 0) throw std::invalid_argument("sharing plan: need at least one layer");
  std::vector<PlanEntry> entries;
  for (std::size_t i = 0; i < n_independent; ++i) entries.push_back({i, Role::Identity});
  if (mode != SharingMode::Plain) {
    const Role upper = mode == SharingMode::SPS2 ? Role::SwapQK : Role::Identity;
    // The 6-layer student shares only its top three sets.
    const std::size_t first_shared = n_independent == 6 ? 3 : 0;
    for (std::size_t i = first_shared; i < n_independent; ++i) entries.push_back({i, upper});
  }
  return SharingPlan(std::move(entries), n_independent);
}

LayerParams apply_role(const LayerParams& params, Role role) {
  LayerParams view = params;
  if (role == Role::SwapQK) {
    std::swap(view.wq, view.wk);
    std::swap(view.bq, view.bk);
  }
  return view;
}

LayerParams resolve_layer_params(const ParamStore& store, const SharingPlan& plan,
                                 std::size_t layer) {
  if (layer >= plan.size()) {
    throw std::out_of_range("resolve_layer_params: layer " + std::to_string(layer) +
                            " beyond plan of " + std::to_string(plan.size()));
  }
  const PlanEntry& e = plan[layer];
  if (e.param_set >= store.layer_sets.size()) {
    throw std::out_of_range("resolve_layer_params: store lacks parameter set " +
                            std::to_string(e.param_set));
  }
  return apply_role(store.layer_sets[e.param_set], e.role);
}

std::size_t count_parameters(const ParamStore& store, bool include_embeddings) {
  std::unordered_set<const void*> seen;
  std::size_t total = 0;
  auto tally = [&](const nk::Tensor& t) {
    if (t.defined() && seen.insert(t.storage_id()).second) total += t.size();
  };
  if (include_embeddings) {
    tally(store.token_embedding);
    tally(store.position_embedding);
    tally(store.head_w);
    tally(store.head_b);
  }
  for (const auto& layer : store.layer_sets) {
    layer.visit([&](const std::string&, const nk::Tensor& t) { tally(t); });
  }
  return total;
}

}  // namespace sharekd
