#include "sharekd/ptp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "sharekd/encoder.hpp"
#include "sharekd/numkit/ops.hpp"
#include "sharekd/rng.hpp"

namespace sharekd {
namespace {

constexpr std::string_view kFull4Names[] = {"confidently_correct", "unconfidently_correct",
                                            "confidently_wrong", "unconfidently_wrong"};
constexpr std::string_view kCorrectNames[] = {"correct", "wrong"};
constexpr std::string_view kConfidenceNames[] = {"confident", "unconfident"};

std::span<const std::string_view> label_names(PTPScheme scheme) {
  switch (scheme) {
    case PTPScheme::Full4: return kFull4Names;
    case PTPScheme::CorrectOnly2: return kCorrectNames;
    case PTPScheme::ConfidenceOnly2: return kConfidenceNames;
  }
  throw std::logic_error("bad PTP scheme");
}

}  // namespace

std::string_view to_string(PTPScheme scheme) {
  switch (scheme) {
    case PTPScheme::Full4: return "Full4";
    case PTPScheme::CorrectOnly2: return "CorrectOnly2";
    case PTPScheme::ConfidenceOnly2: return "ConfidenceOnly2";
  }
  return "?";
}

PTPScheme parse_ptp_scheme(std::string_view text) {
  if (text == "Full4") return PTPScheme::Full4;
  if (text == "CorrectOnly2") return PTPScheme::CorrectOnly2;
  if (text == "ConfidenceOnly2") return PTPScheme::ConfidenceOnly2;
  throw std::invalid_argument("unknown PTP scheme '" + std::string(text) +
                              "' (expected Full4, CorrectOnly2 or ConfidenceOnly2)");
}

std::size_t num_ptp_classes(PTPScheme scheme) { return label_names(scheme).size(); }

std::string_view ptp_label_name(PTPScheme scheme, std::size_t label) {
  auto names = label_names(scheme);
  if (label >= names.size()) {
    throw std::out_of_range("PTP label " + std::to_string(label) + " invalid for " +
                            std::string(to_string(scheme)));
  }
  return names[label];
}

std::size_t parse_ptp_label(PTPScheme scheme, std::string_view name) {
  auto names = label_names(scheme);
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw std::invalid_argument("'" + std::string(name) + "' is not a " +
                                std::string(to_string(scheme)) + " PTP label");
  }
  return static_cast<std::size_t>(it - names.begin());
}

TeacherPrediction make_teacher_prediction(std::uint64_t example_id, std::span<const double> logits,
                                          std::size_t true_label) {
  if (true_label >= logits.size()) {
    throw std::invalid_argument("teacher prediction: label " + std::to_string(true_label) +
                                " outside " + std::to_string(logits.size()) + " classes");
  }
  TeacherPrediction p;
  p.example_id = example_id;
  p.logits.assign(logits.begin(), logits.end());
  nk::Tape tape(false);
  const nk::Tensor probs = nk::softmax_rows(tape, nk::Tensor::vector(p.logits));
  p.probs.assign(probs.data().begin(), probs.data().end());
  p.predicted_class = argmax(p.logits);
  p.confidence = p.probs[p.predicted_class];
  p.correct = p.predicted_class == true_label;
  return p;
}

std::size_t assign_ptp_label(bool correct, double confidence, double t, PTPScheme scheme) {
  if (!(t >= 0.5 && t <= 1.0)) {
    throw std::invalid_argument("PTP threshold t=" + std::to_string(t) + " outside [0.5, 1.0]");
  }
  const bool confident = confidence > t;
  switch (scheme) {
    case PTPScheme::Full4:
      if (correct) return confident ? kConfidentlyCorrect : kUnconfidentlyCorrect;
      return confident ? kConfidentlyWrong : kUnconfidentlyWrong;
    case PTPScheme::CorrectOnly2: return correct ? 0 : 1;
    case PTPScheme::ConfidenceOnly2: return confident ? 0 : 1;
  }
  throw std::logic_error("bad PTP scheme");
}

Dataset PTPDataset::as_dataset() const {
  Dataset d;
  d.num_classes = num_classes();
  for (const auto& r : records) d.examples.push_back({r.example_id, r.tokens, r.label});
  return d;
}

std::vector<TeacherPrediction> teacher_predictions(const Model& teacher, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("teacher predictions: empty dataset");
  if (teacher.config.num_classes != data.num_classes) {
    throw std::invalid_argument("teacher predictions: teacher head has " +
                                std::to_string(teacher.config.num_classes) +
                                " classes, dataset has " + std::to_string(data.num_classes));
  }
  std::vector<TeacherPrediction> out;
  out.reserve(data.size());
  constexpr std::size_t kBatch = 64;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kBatch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + kBatch); ++i) idx.push_back(i);
    const ForwardOutput fwd = encoder_forward(teacher, batch_tokens(data, idx));
    const std::size_t c = fwd.logits.cols();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const Example& e = data.examples[idx[r]];
      out.push_back(make_teacher_prediction(e.id, fwd.logits.data().subspan(r * c, c), e.label));
    }
  }
  return out;
}

PTPDataset build_ptp_dataset(const Model& teacher, const Dataset& data, double t,
                             PTPScheme scheme) {
  assign_ptp_label(true, 1.0, t, scheme);  // validates t up front
  const auto preds = teacher_predictions(teacher, data);
  PTPDataset ptp;
  ptp.scheme = scheme;
  ptp.threshold = t;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    ptp.records.push_back({p.example_id, data.examples[i].tokens,
                           assign_ptp_label(p.correct, p.confidence, t, scheme), p.confidence,
                           p.correct});
  }
  return ptp;
}

void write_ptp_tsv(const std::filesystem::path& path, const PTPDataset& ptp) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char conf[32];
  for (const auto& r : ptp.records) {
    std::snprintf(conf, sizeof conf, "%.6f", r.confidence);
    out << r.example_id << '\t' << ptp_label_name(ptp.scheme, r.label) << '\t' << conf << '\t'
        << (r.teacher_correct ? 1 : 0) << '\n';
  }
}

PTPDataset read_ptp_tsv(const std::filesystem::path& path, const Dataset& source,
                        PTPScheme scheme, double t) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::unordered_map<std::uint64_t, const Example*> by_id;
  for (const auto& e : source.examples) by_id[e.id] = &e;
  PTPDataset ptp;
  ptp.scheme = scheme;
  ptp.threshold = t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream is(line);
    std::uint64_t id = 0;
    std::string name;
    double confidence = 0.0;
    int flag = 0;
    if (!(is >> id >> name >> confidence >> flag) || (flag != 0 && flag != 1)) {
      throw std::runtime_error(path.string() + ": malformed line " + std::to_string(line_no));
    }
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                               " references unknown example " + std::to_string(id));
    }
    ptp.records.push_back({id, it->second->tokens, parse_ptp_label(scheme, name), confidence,
                           flag == 1});
  }
  if (ptp.records.empty()) throw std::runtime_error(path.string() + ": no PTP records");
  return ptp;
}

PTPReport ptp_pretrain(Model& student, const PTPDataset& ptp, const PTPTrainConfig& cfg) {
  if (ptp.records.empty()) throw std::invalid_argument("ptp_pretrain: empty PTP dataset");
  student.validate();

  // Same embedding and layer storage, separate head sized for the PTP labels.
  Model ptp_model{student.config, student.store, student.plan};
  ptp_model.config.num_classes = ptp.num_classes();
  Rng head_rng(derive_seed(cfg.train.seed, "ptp-head"));
  init_head(ptp_model.store, student.config.hidden_dim, ptp.num_classes(), head_rng,
            cfg.head_init_std);

  const Dataset data = ptp.as_dataset();
  data.validate();
  auto loss = [&](nk::Tape& tape, std::span<const std::size_t> idx) {
    const ForwardOutput out = encoder_forward(tape, ptp_model, batch_tokens(data, idx));
    std::vector<std::size_t> labels;
    for (std::size_t i : idx) labels.push_back(data.examples[i].label);
    nk::Tensor ce = nk::cross_entropy_rows(tape, nk::softmax_rows(tape, out.logits), labels);
    const double v = ce.item();
    return BatchLossResult{ce, {v, v, 0.0, 0.0}};
  };

  PTPReport report;
  LoopHooks hooks;
  hooks.stop = [&](const std::vector<EpochRecord>& epochs) {
    if (epochs.size() <= cfg.patience) return false;
    for (std::size_t k = 0; k < cfg.patience; ++k) {
      const double cur = epochs[epochs.size() - 1 - k].mean.total;
      const double prev = epochs[epochs.size() - 2 - k].mean.total;
      if (prev - cur >= cfg.min_improvement) return false;
    }
    report.converged = true;
    return true;
  };
  report.train = run_training(ptp_model, data, cfg.train, loss, hooks);
  return report;
}

}  // namespace sharekd
