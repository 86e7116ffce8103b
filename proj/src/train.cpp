#include "sharekd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sharekd/rng.hpp"

namespace sharekd {

using nk::Tensor;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
  if (epochs == 0) throw std::invalid_argument("train config: epochs must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) {
    throw std::invalid_argument("train config: warmup_fraction must be in [0, 1]");
  }
  if (!(max_grad_norm > 0.0)) throw std::invalid_argument("train config: max_grad_norm must be positive");
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double ss = 0.0;
  for (const Tensor& p : params)
    if (p.has_grad())
      for (double g : p.grad()) ss += g * g;
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& p : params)
      if (p.has_grad())
        for (double& g : p.grad_mut()) g *= factor;
  }
  return norm;
}

double warmup_lr(double base, std::size_t step, std::size_t warmup_steps) {
  if (warmup_steps == 0 || step >= warmup_steps) return base;
  return base * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

void copy_values(const ParamStore& from, ParamStore& to) {
  const auto src = from.named_tensors();
  auto dst = to.named_tensors();
  if (src.size() != dst.size()) throw std::invalid_argument("copy_values: stores differ in layout");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].tensor.shape() != dst[i].tensor.shape()) {
      throw std::invalid_argument("copy_values: shape mismatch for " + src[i].name);
    }
    auto s = src[i].tensor.data();
    std::copy(s.begin(), s.end(), dst[i].tensor.data().begin());
  }
}

TrainReport run_training(Model& model, const Dataset& train, const TrainConfig& cfg,
                         const BatchLoss& batch_loss, const LoopHooks& hooks) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("training: empty dataset");
  model.validate();
  const auto start = std::chrono::steady_clock::now();

  std::vector<Tensor> params = model.store.parameters();
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.clear_grad();
  }
  Adam adam(params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  const std::size_t n = train.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches * cfg.epochs;
  const auto warmup_steps = static_cast<std::size_t>(
      std::ceil(cfg.warmup_fraction * static_cast<double>(total_steps)));
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));

  TrainReport report;
  report.seed = cfg.seed;
  std::optional<ParamStore> best;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    LossTerms sum;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      for (Tensor& p : params) p.zero_grad();
      nk::Tape tape;
      BatchLossResult r = batch_loss(tape, idx);
      tape.backward(r.loss);
      clip_grad_norm(params, cfg.max_grad_norm);
      ++step;
      adam.step(warmup_lr(cfg.learning_rate, step, warmup_steps));
      report.steps.push_back({epoch, step, r.terms});
      sum.total += r.terms.total;
      sum.ce += r.terms.ce;
      sum.kl += r.terms.kl;
      sum.mse += r.terms.mse;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    const double inv = 1.0 / static_cast<double>(batches);
    rec.mean = {sum.total * inv, sum.ce * inv, sum.kl * inv, sum.mse * inv};
    if (hooks.dev) {
      Metrics m = evaluate(model, *hooks.dev);
      rec.dev_acc = m.accuracy;
      rec.dev_f1 = m.f1;
      if (!report.best_dev || m.accuracy > report.best_dev->accuracy) {
        report.best_dev = m;
        report.best_epoch = epoch;
        best = model.store.clone();
      }
    } else {
      report.best_epoch = epoch;
    }
    report.epochs.push_back(rec);
    if (hooks.stop && hooks.stop(report.epochs)) break;
  }
  if (best) copy_values(*best, model.store);
  for (Tensor& p : params) p.clear_grad();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void write_report_jsonl(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& e : report.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["loss_total"] = e.mean.total;
    j["loss_ce"] = e.mean.ce;
    j["loss_kl"] = e.mean.kl;
    j["loss_mse"] = e.mean.mse;
    j["dev_acc"] = optional_json(e.dev_acc);
    j["dev_f1"] = optional_json(e.dev_f1);
    out << j.dump() << "\n";
  }
  nlohmann::ordered_json s;
  s["summary"] = true;
  s["epochs_run"] = report.epochs.size();
  s["best_epoch"] = report.best_epoch;
  s["seed"] = report.seed;
  s["dev_acc"] = report.best_dev ? nlohmann::json(report.best_dev->accuracy) : nlohmann::json(nullptr);
  s["dev_f1"] = report.best_dev ? optional_json(report.best_dev->f1) : nlohmann::json(nullptr);
  s["test_acc"] = report.test ? nlohmann::json(report.test->accuracy) : nlohmann::json(nullptr);
  s["test_f1"] = report.test ? optional_json(report.test->f1) : nlohmann::json(nullptr);
  out << s.dump() << "\n";
}

}  // namespace sharekd
