#include "sharekd/distill.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sharekd/numkit/ops.hpp"
#include "sharekd/rng.hpp"

namespace sharekd {

using nk::Tape;
using nk::Tensor;

std::string_view to_string(KLDirection dir) {
  return dir == KLDirection::TeacherStudent ? "teacher_student" : "student_teacher";
}

KLDirection parse_kl_direction(std::string_view text) {
  if (text == "teacher_student") return KLDirection::TeacherStudent;
  if (text == "student_teacher") return KLDirection::StudentTeacher;
  throw std::invalid_argument("unknown KL direction '" + std::string(text) +
                              "' (expected teacher_student or student_teacher)");
}

void KDConfig::validate_weights() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("kd config: alpha=" + std::to_string(alpha) + " outside [0, 1]");
  }
  if (!(beta >= 0.0)) throw std::invalid_argument("kd config: beta must be non-negative");
  if (!(temperature > 0.0)) throw std::invalid_argument("kd config: temperature must be positive");
  if (!(student_temperature > 0.0)) {
    throw std::invalid_argument("kd config: student_temperature must be positive");
  }
}

void KDConfig::validate(std::size_t student_layers, std::size_t teacher_layers) const {
  validate_weights();
  for (const LayerPair& p : resolved_pairs(student_layers, teacher_layers)) {
    if (p.student_layer < 1 || p.student_layer > student_layers || p.teacher_layer < 1 ||
        p.teacher_layer > teacher_layers) {
      throw std::invalid_argument("kd config: layer pair (" + std::to_string(p.student_layer) +
                                  "," + std::to_string(p.teacher_layer) +
                                  ") outside student 1.." + std::to_string(student_layers) +
                                  " / teacher 1.." + std::to_string(teacher_layers));
    }
  }
}

std::vector<LayerPair> KDConfig::resolved_pairs(std::size_t student_layers,
                                                std::size_t teacher_layers) const {
  return layer_pairs ? *layer_pairs : default_layer_pairs(student_layers, teacher_layers);
}

Tensor temperature_softmax(Tape& tape, const Tensor& z, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("temperature_softmax: T must be positive, got " +
                                std::to_string(temperature));
  }
  if (temperature == 1.0) return nk::softmax_rows(tape, z);
  return nk::softmax_rows(tape, nk::scale(tape, z, 1.0 / temperature));
}

std::vector<LayerPair> default_layer_pairs(std::size_t student_physical,
                                           std::size_t teacher_layers) {
  if (student_physical == 0 || teacher_layers == 0) {
    throw std::invalid_argument("default_layer_pairs: layer counts must be positive");
  }
  std::vector<LayerPair> pairs;
  for (std::size_t i = 1; i <= student_physical; ++i) {
    pairs.push_back({i, (i * teacher_layers + student_physical - 1) / student_physical});
  }
  return pairs;
}

namespace {

Tensor detached(const Tensor& t) {
  Tensor copy = t.clone();
  copy.set_requires_grad(false);
  return copy;
}

}  // namespace

KDLossResult kd_loss(Tape& tape, const ForwardOutput& student, const ForwardOutput& teacher,
                     std::span<const std::size_t> labels, const KDConfig& cfg,
                     std::span<const LayerPair> pairs) {
  cfg.validate_weights();
  if (student.logits.shape() != teacher.logits.shape()) {
    throw std::invalid_argument("kd_loss: student logits " + nk::shape_str(student.logits.shape()) +
                                " vs teacher " + nk::shape_str(teacher.logits.shape()));
  }
  const std::size_t batch = student.logits.rows();

  Tensor student_probs = nk::softmax_rows(tape, student.logits);
  Tensor ce = nk::cross_entropy_rows(tape, student_probs, labels);

  Tensor teacher_soft = temperature_softmax(tape, detached(teacher.logits), cfg.temperature);
  Tensor student_kl_probs = cfg.student_temperature == 1.0
                                ? student_probs
                                : temperature_softmax(tape, student.logits, cfg.student_temperature);
  Tensor kl = cfg.kl_direction == KLDirection::TeacherStudent
                  ? nk::kl_div_rows(tape, teacher_soft, student_kl_probs)
                  : nk::kl_div_rows(tape, student_kl_probs, teacher_soft);

  Tensor total = nk::add(tape, nk::scale(tape, ce, 1.0 - cfg.alpha), nk::scale(tape, kl, cfg.alpha));
  double mse_value = 0.0;
  if (!pairs.empty()) {
    Tensor mse_sum;
    for (const LayerPair& p : pairs) {
      if (p.student_layer < 1 || p.student_layer > student.hidden_states.size() ||
          p.teacher_layer < 1 || p.teacher_layer > teacher.hidden_states.size()) {
        throw std::invalid_argument("kd_loss: layer pair (" + std::to_string(p.student_layer) +
                                    "," + std::to_string(p.teacher_layer) + ") out of range");
      }
      Tensor hs = student.hidden_states[p.student_layer - 1];
      Tensor ht = detached(teacher.hidden_states[p.teacher_layer - 1]);
      if (hs.shape() != ht.shape()) {
        throw std::invalid_argument("kd_loss: hidden dim mismatch, student " +
                                    nk::shape_str(hs.shape()) + " vs teacher " +
                                    nk::shape_str(ht.shape()));
      }
      if (cfg.normalize_hidden) {
        hs = nk::normalize_rows(tape, hs);
        ht = nk::normalize_rows(tape, ht);
      }
      Tensor term = nk::mse(tape, hs, ht);
      mse_sum = mse_sum.defined() ? nk::add(tape, mse_sum, term) : term;
    }
    Tensor mse_mean = nk::scale(tape, mse_sum, 1.0 / static_cast<double>(batch));
    mse_value = mse_mean.item();
    total = nk::add(tape, total, nk::scale(tape, mse_mean, cfg.beta));
  }

  KDLossResult r;
  r.total = total;
  r.terms = {total.item(), ce.item(), kl.item(), mse_value};
  return r;
}

KDLossResult kd_loss(Tape& tape, const ForwardOutput& student, const ForwardOutput& teacher,
                     std::span<const std::size_t> labels, const KDConfig& cfg) {
  const auto pairs =
      cfg.resolved_pairs(student.hidden_states.size(), teacher.hidden_states.size());
  return kd_loss(tape, student, teacher, labels, cfg, pairs);
}

Model init_model(EncoderConfig config, SharingPlan plan, std::uint64_t seed, double init_std) {
  config.num_physical_layers = plan.size();
  Rng rng(derive_seed(seed, "init"));
  Model model{config, init_params(config, plan.num_param_sets(), rng, init_std), std::move(plan)};
  model.validate();
  return model;
}

TrainReport finetune_teacher(Model& teacher, const DatasetBundle& data, const TrainConfig& cfg) {
  if (data.train.empty()) throw std::invalid_argument("finetune_teacher: empty training set");
  if (teacher.config.num_classes != data.train.num_classes) {
    throw std::invalid_argument("finetune_teacher: head/class count mismatch");
  }
  const Dataset& train = data.train;
  auto loss = [&](Tape& tape, std::span<const std::size_t> idx) {
    const ForwardOutput out = encoder_forward(tape, teacher, batch_tokens(train, idx));
    std::vector<std::size_t> labels;
    for (std::size_t i : idx) labels.push_back(train.examples[i].label);
    Tensor ce = nk::cross_entropy_rows(tape, nk::softmax_rows(tape, out.logits), labels);
    const double v = ce.item();
    return BatchLossResult{ce, {v, v, 0.0, 0.0}};
  };
  LoopHooks hooks;
  hooks.dev = data.dev.empty() ? nullptr : &data.dev;
  TrainReport report = run_training(teacher, train, cfg, loss, hooks);
  if (!data.test.empty()) report.test = evaluate(teacher, data.test);
  return report;
}

Model init_student_from_teacher(const Model& teacher, std::size_t n, SharingMode mode,
                                std::uint64_t seed, double head_init_std) {
  teacher.validate();
  if (n == 0 || n > teacher.plan.size()) {
    throw std::invalid_argument("init_student_from_teacher: n=" + std::to_string(n) +
                                " outside 1.." + std::to_string(teacher.plan.size()));
  }
  Model student;
  student.plan = build_sharing_plan(n, mode);
  student.config = teacher.config;
  student.config.num_physical_layers = student.plan.size();
  student.store.token_embedding = teacher.store.token_embedding.clone();
  student.store.position_embedding = teacher.store.position_embedding.clone();
  for (std::size_t i = 0; i < n; ++i) {
    LayerParams copy = resolve_layer_params(teacher.store, teacher.plan, i);
    copy.for_each([](const std::string&, Tensor& t) { t = t.clone(); });
    student.store.layer_sets.push_back(std::move(copy));
  }
  Rng rng(derive_seed(seed, "student-head"));
  init_head(student.store, teacher.config.hidden_dim, teacher.config.num_classes, rng,
            head_init_std);
  student.validate();
  return student;
}

namespace {

// Teacher outputs over a dataset, computed once without recording.
struct TeacherCache {
  Tensor logits;                // [N, C]
  std::vector<Tensor> hidden;   // per layer, [N, d]

  ForwardOutput gather(std::span<const std::size_t> idx) const {
    Tape none(false);
    ForwardOutput out;
    out.logits = nk::gather_rows(none, logits, idx);
    for (const Tensor& h : hidden) out.hidden_states.push_back(nk::gather_rows(none, h, idx));
    return out;
  }
};

TeacherCache cache_teacher(const Model& teacher, const Dataset& data) {
  const std::size_t n = data.size(), c = teacher.config.num_classes, d = teacher.config.hidden_dim;
  const std::size_t layers = teacher.plan.size();
  std::vector<double> logits(n * c);
  std::vector<std::vector<double>> hidden(layers, std::vector<double>(n * d));
  constexpr std::size_t kBatch = 64;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += kBatch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(n, start + kBatch); ++i) idx.push_back(i);
    const ForwardOutput out = encoder_forward(teacher, batch_tokens(data, idx));
    std::copy(out.logits.data().begin(), out.logits.data().end(), logits.begin() + start * c);
    for (std::size_t l = 0; l < layers; ++l) {
      auto h = out.hidden_states[l].data();
      std::copy(h.begin(), h.end(), hidden[l].begin() + start * d);
    }
  }
  TeacherCache cache;
  cache.logits = Tensor::matrix(n, c, std::move(logits));
  for (auto& h : hidden) cache.hidden.push_back(Tensor::matrix(n, d, std::move(h)));
  return cache;
}

}  // namespace

TrainReport distill(Model& student, const Model& teacher, const DatasetBundle& data,
                    const KDConfig& cfg) {
  if (data.train.empty()) throw std::invalid_argument("distill: empty training set");
  student.validate();
  teacher.validate();
  cfg.validate(student.plan.size(), teacher.plan.size());
  if (student.config.hidden_dim != teacher.config.hidden_dim) {
    throw std::invalid_argument("distill: student and teacher hidden dims differ");
  }
  if (student.config.num_classes != data.train.num_classes ||
      teacher.config.num_classes != data.train.num_classes) {
    throw std::invalid_argument("distill: head/class count mismatch");
  }
  const auto pairs = cfg.resolved_pairs(student.plan.size(), teacher.plan.size());
  const Dataset& train = data.train;
  const TeacherCache cache = cache_teacher(teacher, train);

  auto loss = [&](Tape& tape, std::span<const std::size_t> idx) {
    const ForwardOutput s = encoder_forward(tape, student, batch_tokens(train, idx));
    const ForwardOutput t = cache.gather(idx);
    std::vector<std::size_t> labels;
    for (std::size_t i : idx) labels.push_back(train.examples[i].label);
    KDLossResult r = kd_loss(tape, s, t, labels, cfg, pairs);
    return BatchLossResult{r.total, r.terms};
  };
  LoopHooks hooks;
  hooks.dev = data.dev.empty() ? nullptr : &data.dev;
  TrainReport report = run_training(student, train, cfg.train, loss, hooks);
  if (!data.test.empty()) report.test = evaluate(student, data.test);
  return report;
}

}  // namespace sharekd
