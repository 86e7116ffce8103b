#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "sharekd/model.hpp"
#include "sharekd/tasks.hpp"
#include "sharekd/train.hpp"

namespace sharekd {

enum class PTPScheme { Full4, CorrectOnly2, ConfidenceOnly2 };

std::string_view to_string(PTPScheme scheme);
PTPScheme parse_ptp_scheme(std::string_view text);
std::size_t num_ptp_classes(PTPScheme scheme);

// Full4 labels in rule-table order.
enum Full4Label : std::size_t {
  kConfidentlyCorrect = 0,
  kUnconfidentlyCorrect = 1,
  kConfidentlyWrong = 2,
  kUnconfidentlyWrong = 3,
};
// CorrectOnly2: 0 correct, 1 wrong. ConfidenceOnly2: 0 confident, 1 unconfident.

std::string_view ptp_label_name(PTPScheme scheme, std::size_t label);
std::size_t parse_ptp_label(PTPScheme scheme, std::string_view name);

struct TeacherPrediction {
  std::uint64_t example_id = 0;
  std::vector<double> logits;
  std::vector<double> probs;
  std::size_t predicted_class = 0;
  double confidence = 0.0;
  bool correct = false;
};

TeacherPrediction make_teacher_prediction(std::uint64_t example_id, std::span<const double> logits,
                                          std::size_t true_label);

// "Confident" means confidence strictly above t. Requires 0.5 <= t <= 1.
std::size_t assign_ptp_label(bool correct, double confidence, double t, PTPScheme scheme);

struct PTPRecord {
  std::uint64_t example_id = 0;
  Sequence tokens;
  std::size_t label = 0;
  double confidence = 0.0;
  bool teacher_correct = false;
};

struct PTPDataset {
  PTPScheme scheme = PTPScheme::Full4;
  double threshold = 0.9;
  std::vector<PTPRecord> records;

  std::size_t num_classes() const { return num_ptp_classes(scheme); }
  // The PTP labels as an ordinary classification dataset.
  Dataset as_dataset() const;
};

std::vector<TeacherPrediction> teacher_predictions(const Model& teacher, const Dataset& data);
PTPDataset build_ptp_dataset(const Model& teacher, const Dataset& data, double t,
                             PTPScheme scheme);

// example_id<TAB>label_name<TAB>confidence(6 dp)<TAB>teacher_correct(0|1)
void write_ptp_tsv(const std::filesystem::path& path, const PTPDataset& ptp);
// Tokens are recovered from `source` by example id.
PTPDataset read_ptp_tsv(const std::filesystem::path& path, const Dataset& source,
                        PTPScheme scheme, double t);

struct PTPTrainConfig {
  TrainConfig train{.learning_rate = 1e-3, .batch_size = 32, .epochs = 30};
  // Stop once the epoch-mean loss improves by less than this for `patience`
  // consecutive epochs; train.epochs is the cap.
  double min_improvement = 1e-4;
  std::size_t patience = 2;
  double head_init_std = 0.02;
};

struct PTPReport {
  TrainReport train;
  bool converged = false;
};

// Trains the encoder of `student` to predict PTP labels through a temporary
// head. The student's own classifier head is left untouched and the PTP head
// is discarded.
PTPReport ptp_pretrain(Model& student, const PTPDataset& ptp, const PTPTrainConfig& cfg);

}  // namespace sharekd
