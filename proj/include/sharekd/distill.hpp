#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sharekd/encoder.hpp"
#include "sharekd/model.hpp"
#include "sharekd/numkit/tape.hpp"
#include "sharekd/sps.hpp"
#include "sharekd/tasks.hpp"
#include "sharekd/train.hpp"

namespace sharekd {

enum class KLDirection {
  TeacherStudent,  // KL(teacher || student), the soft-target direction
  StudentTeacher,  // KL(student || teacher)
};

std::string_view to_string(KLDirection dir);
KLDirection parse_kl_direction(std::string_view text);

// 1-based physical layer indices.
struct LayerPair {
  std::size_t student_layer = 1;
  std::size_t teacher_layer = 1;
  bool operator==(const LayerPair&) const = default;
};

struct KDConfig {
  double alpha = 0.5;
  double beta = 0.0;
  double temperature = 2.0;
  // Empty means default_layer_pairs.
  std::optional<std::vector<LayerPair>> layer_pairs;
  double threshold = 0.9;
  KLDirection kl_direction = KLDirection::TeacherStudent;
  // Temperature applied to the student inside the KL term only.
  double student_temperature = 1.0;
  // Unit-normalize hidden states before the intermediate loss.
  bool normalize_hidden = false;
  TrainConfig train;

  // Throws on alpha outside [0,1], negative beta, non-positive temperatures.
  void validate_weights() const;
  void validate(std::size_t student_layers, std::size_t teacher_layers) const;
  std::vector<LayerPair> resolved_pairs(std::size_t student_layers,
                                        std::size_t teacher_layers) const;
};

// softmax(z / T) per row.
nk::Tensor temperature_softmax(nk::Tape& tape, const nk::Tensor& z, double temperature);

// Student physical layer i pairs with teacher layer ceil(i * teacher / student).
std::vector<LayerPair> default_layer_pairs(std::size_t student_physical,
                                           std::size_t teacher_layers);

struct KDLossResult {
  nk::Tensor total;
  LossTerms terms;
};

// (1-a) CE(y, softmax(z_s)) + a KL(softmax_T(z_t), softmax(z_s))
//   + b sum_pairs ||h_s - h_t||^2, each term averaged over the batch.
// Teacher tensors are detached; they never receive gradient.
KDLossResult kd_loss(nk::Tape& tape, const ForwardOutput& student, const ForwardOutput& teacher,
                     std::span<const std::size_t> labels, const KDConfig& cfg,
                     std::span<const LayerPair> pairs);
KDLossResult kd_loss(nk::Tape& tape, const ForwardOutput& student, const ForwardOutput& teacher,
                     std::span<const std::size_t> labels, const KDConfig& cfg);

// Builds a classifier with fresh weights routed through `plan`.
Model init_model(EncoderConfig config, SharingPlan plan, std::uint64_t seed, double init_std);

// Cross-entropy training with best-dev selection; reports test metrics.
TrainReport finetune_teacher(Model& teacher, const DatasetBundle& data, const TrainConfig& cfg);

// Copies embeddings and the first n teacher layers into parameter sets
// 0..n-1, attaches a fresh head and routes layers with build_sharing_plan.
Model init_student_from_teacher(const Model& teacher, std::size_t n, SharingMode mode,
                                std::uint64_t seed, double head_init_std = 0.02);

// Knowledge distillation with best-dev selection; the student ends holding
// the best-dev weights and the report carries its test metrics.
TrainReport distill(Model& student, const Model& teacher, const DatasetBundle& data,
                    const KDConfig& cfg);

}  // namespace sharekd
