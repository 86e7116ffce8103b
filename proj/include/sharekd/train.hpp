#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "sharekd/model.hpp"
#include "sharekd/numkit/tape.hpp"
#include "sharekd/tasks.hpp"

namespace sharekd {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double warmup_fraction = 0.1;
  double max_grad_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

class Adam {
 public:
  Adam(std::vector<nk::Tensor> params, double beta1, double beta2, double eps);
  // Applies one bias-corrected update; parameters without a gradient buffer
  // are skipped.
  void step(double learning_rate);
  std::size_t steps() const { return t_; }

 private:
  std::vector<nk::Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<nk::Tensor> params, double max_norm);

// Linear warmup from 0 over the first `warmup_steps`, constant afterwards.
// `step` counts from 1.
double warmup_lr(double base, std::size_t step, std::size_t warmup_steps);

struct LossTerms {
  double total = 0.0;
  double ce = 0.0;
  double kl = 0.0;
  double mse = 0.0;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  LossTerms terms;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossTerms mean;
  std::optional<double> dev_acc;
  std::optional<double> dev_f1;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  std::size_t best_epoch = 0;
  std::optional<Metrics> best_dev;
  std::optional<Metrics> test;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

struct BatchLossResult {
  nk::Tensor loss;
  LossTerms terms;
};

// Builds the minibatch loss on `tape` for the given training-set indices.
using BatchLoss = std::function<BatchLossResult(nk::Tape&, std::span<const std::size_t>)>;

struct LoopHooks {
  // Evaluated after every epoch; the best-accuracy epoch (earliest on ties)
  // is restored at the end.
  const Dataset* dev = nullptr;
  // Return true to stop after the given epoch.
  std::function<bool(const std::vector<EpochRecord>&)> stop;
};

// Minibatch Adam over `model`'s distinct stored tensors. Batches are drawn
// from a permutation seeded by derive_seed(cfg.seed, "shuffle").
TrainReport run_training(Model& model, const Dataset& train, const TrainConfig& cfg,
                         const BatchLoss& batch_loss, const LoopHooks& hooks = {});

// Copies values tensor-by-tensor, preserving the destination's handles.
void copy_values(const ParamStore& from, ParamStore& to);

// One JSON object per epoch followed by a summary object.
void write_report_jsonl(const std::filesystem::path& path, const TrainReport& report);

}  // namespace sharekd
