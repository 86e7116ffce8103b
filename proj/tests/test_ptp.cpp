#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "sharekd/distill.hpp"
#include "sharekd/encoder.hpp"
#include "sharekd/ptp.hpp"
#include "sharekd/rng.hpp"

namespace sharekd {
namespace {

// Rule table, transcribed directly.
std::string oracle_full4(bool correct, double conf, double t) {
  if (correct && conf > t) return "confidently_correct";
  if (correct) return "unconfidently_correct";
  if (conf > t) return "confidently_wrong";
  return "unconfidently_wrong";
}

TEST(AssignPtpLabel, RuleTableRows) {
  EXPECT_EQ(assign_ptp_label(true, 0.95, 0.9, PTPScheme::Full4), kConfidentlyCorrect);
  EXPECT_EQ(assign_ptp_label(false, 0.70, 0.9, PTPScheme::Full4), kUnconfidentlyWrong);
  EXPECT_EQ(assign_ptp_label(true, 0.90, 0.9, PTPScheme::Full4), kUnconfidentlyCorrect);
  EXPECT_EQ(assign_ptp_label(false, 0.99, 0.9, PTPScheme::Full4), kConfidentlyWrong);
}

TEST(AssignPtpLabel, ThresholdOutsideRangeThrows) {
  EXPECT_THROW(assign_ptp_label(true, 0.9, 0.49, PTPScheme::Full4), std::invalid_argument);
  EXPECT_THROW(assign_ptp_label(true, 0.9, 1.01, PTPScheme::CorrectOnly2), std::invalid_argument);
  EXPECT_NO_THROW(assign_ptp_label(true, 0.9, 0.5, PTPScheme::Full4));
  EXPECT_NO_THROW(assign_ptp_label(true, 0.9, 1.0, PTPScheme::Full4));
}

TEST(AssignPtpLabel, ExactlyOneFull4LabelApplies) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const bool correct = rng.below(2) == 1;
    const double t = 0.5 + 0.5 * rng.uniform();
    const double conf = i % 5 == 0 ? t : 0.5 + 0.5 * rng.uniform();
    int matches = 0;
    for (std::size_t label = 0; label < 4; ++label) {
      const bool c = label == kConfidentlyCorrect || label == kUnconfidentlyCorrect;
      const bool confident = label == kConfidentlyCorrect || label == kConfidentlyWrong;
      if (c == correct && confident == (conf > t)) ++matches;
    }
    EXPECT_EQ(matches, 1);
    EXPECT_EQ(ptp_label_name(PTPScheme::Full4, assign_ptp_label(correct, conf, t, PTPScheme::Full4)),
              oracle_full4(correct, conf, t));
  }
}

TEST(PtpLabels, NamesRoundTrip) {
  for (auto scheme : {PTPScheme::Full4, PTPScheme::CorrectOnly2, PTPScheme::ConfidenceOnly2}) {
    EXPECT_EQ(parse_ptp_scheme(to_string(scheme)), scheme);
    for (std::size_t l = 0; l < num_ptp_classes(scheme); ++l) {
      EXPECT_EQ(parse_ptp_label(scheme, ptp_label_name(scheme, l)), l);
    }
  }
  EXPECT_THROW(parse_ptp_scheme("Full5"), std::invalid_argument);
}

TEST(TeacherPrediction, ConfidenceWithinBounds) {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const std::size_t c = 2 + rng.below(4);
    std::vector<double> z(c);
    for (double& v : z) v = rng.normal(0.0, 1.0 + 20.0 * rng.uniform());
    const auto p = make_teacher_prediction(i, z, rng.below(c));
    EXPECT_GE(p.confidence, 1.0 / static_cast<double>(c) - 1e-15);
    EXPECT_LE(p.confidence, 1.0);
  }
}

Model tiny_teacher(std::uint64_t seed, std::size_t classes = 2) {
  EncoderConfig cfg{.vocab_size = 12, .max_seq_len = 6, .hidden_dim = 8, .num_heads = 2,
                    .ff_dim = 8, .num_physical_layers = 2, .num_classes = classes};
  return init_model(cfg, build_sharing_plan(2, SharingMode::Plain), seed, 1.0);
}

Dataset random_data(std::size_t n, std::uint64_t seed, std::size_t classes = 2) {
  Rng rng(seed);
  Dataset d;
  d.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    Sequence s{0};
    for (int j = 0; j < 5; ++j) s.push_back(static_cast<TokenId>(4 + rng.below(8)));
    d.examples.push_back({i, s, rng.below(classes)});
  }
  return d;
}

TEST(BuildPtpDataset, MatchesPerExampleOracle) {
  const Model teacher = tiny_teacher(3);
  const Dataset data = random_data(1000, 4);
  for (double t : {0.6, 0.9}) {
    const PTPDataset ptp = build_ptp_dataset(teacher, data, t, PTPScheme::Full4);
    ASSERT_EQ(ptp.records.size(), data.size());
    std::size_t counts[4] = {0, 0, 0, 0}, oracle_counts[4] = {0, 0, 0, 0};
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::vector<Sequence> one{data.examples[i].tokens};
      const auto logits = encoder_forward(teacher, one).logits;
      const auto p = oracle::softmax({logits.at(0, 0), logits.at(0, 1)});
      const std::size_t pred = p[1] > p[0] ? 1 : 0;
      const std::string name = oracle_full4(pred == data.examples[i].label, p[pred], t);
      EXPECT_EQ(ptp_label_name(PTPScheme::Full4, ptp.records[i].label), name);
      ++counts[ptp.records[i].label];
      ++oracle_counts[parse_ptp_label(PTPScheme::Full4, name)];
    }
    for (int k = 0; k < 4; ++k) EXPECT_EQ(counts[k], oracle_counts[k]);
  }
}

TEST(BuildPtpDataset, CoarseningFull4MatchesCorrectOnly2) {
  const Model teacher = tiny_teacher(5);
  const Dataset data = random_data(300, 6);
  const auto full = build_ptp_dataset(teacher, data, 0.7, PTPScheme::Full4);
  const auto coarse = build_ptp_dataset(teacher, data, 0.7, PTPScheme::CorrectOnly2);
  const auto conf = build_ptp_dataset(teacher, data, 0.7, PTPScheme::ConfidenceOnly2);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t l = full.records[i].label;
    const bool correct = l == kConfidentlyCorrect || l == kUnconfidentlyCorrect;
    const bool confident = l == kConfidentlyCorrect || l == kConfidentlyWrong;
    EXPECT_EQ(coarse.records[i].label, correct ? 0u : 1u);
    EXPECT_EQ(conf.records[i].label, confident ? 0u : 1u);
  }
}

TEST(BuildPtpDataset, PerfectTeacherGivesConfidentlyCorrect) {
  Model teacher = tiny_teacher(7);
  Dataset data = random_data(50, 8);
  // A head that ignores the encoder and outputs a huge margin for class 1.
  for (double& v : teacher.store.head_w.data()) v = 0.0;
  teacher.store.head_b.data()[0] = -1000.0;
  teacher.store.head_b.data()[1] = 1000.0;
  for (auto& e : data.examples) e.label = 1;
  const auto ptp = build_ptp_dataset(teacher, data, 0.99, PTPScheme::Full4);
  for (const auto& r : ptp.records) EXPECT_EQ(r.label, kConfidentlyCorrect);
}

TEST(BuildPtpDataset, DeterministicAndChecksClassCount) {
  const Model teacher = tiny_teacher(9);
  const Dataset data = random_data(100, 10);
  const auto a = build_ptp_dataset(teacher, data, 0.8, PTPScheme::Full4);
  const auto b = build_ptp_dataset(teacher, data, 0.8, PTPScheme::Full4);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].label, b.records[i].label);
    EXPECT_EQ(a.records[i].confidence, b.records[i].confidence);
  }
  EXPECT_THROW(build_ptp_dataset(teacher, random_data(10, 1, 3), 0.8, PTPScheme::Full4),
               std::invalid_argument);
}

TEST(PtpTsv, RoundTrip) {
  const Model teacher = tiny_teacher(11);
  const Dataset data = random_data(40, 12);
  const auto ptp = build_ptp_dataset(teacher, data, 0.75, PTPScheme::Full4);
  const auto path = std::filesystem::temp_directory_path() / "sharekd_ptp_roundtrip.tsv";
  write_ptp_tsv(path, ptp);
  const auto back = read_ptp_tsv(path, data, PTPScheme::Full4, 0.75);
  ASSERT_EQ(back.records.size(), ptp.records.size());
  for (std::size_t i = 0; i < ptp.records.size(); ++i) {
    EXPECT_EQ(back.records[i].example_id, ptp.records[i].example_id);
    EXPECT_EQ(back.records[i].label, ptp.records[i].label);
    EXPECT_EQ(back.records[i].tokens, ptp.records[i].tokens);
    EXPECT_NEAR(back.records[i].confidence, ptp.records[i].confidence, 5e-7);
  }
  std::filesystem::remove(path);
}

PTPDataset toy_ptp(std::size_t n, bool single_class) {
  PTPDataset ptp;
  ptp.scheme = PTPScheme::Full4;
  Rng rng(13);
  for (std::size_t i = 0; i < n; ++i) {
    // Label determined by the first content token: linearly separable.
    const std::size_t label = single_class ? 0 : rng.below(4);
    Sequence s{0, static_cast<TokenId>(4 + label)};
    for (int j = 0; j < 3; ++j) s.push_back(static_cast<TokenId>(4 + rng.below(8)));
    ptp.records.push_back({i, s, label, 0.9, true});
  }
  return ptp;
}

Model tiny_student(std::uint64_t seed) {
  EncoderConfig cfg{.vocab_size = 12, .max_seq_len = 6, .hidden_dim = 8, .num_heads = 2,
                    .ff_dim = 8, .num_physical_layers = 2, .num_classes = 2};
  return init_model(cfg, build_sharing_plan(1, SharingMode::SPS2), seed, 0.3);
}

TEST(PtpPretrain, SingleClassLossApproachesZero) {
  Model student = tiny_student(1);
  PTPTrainConfig cfg;
  cfg.train.epochs = 30;
  cfg.train.learning_rate = 1e-2;
  const auto report = ptp_pretrain(student, toy_ptp(64, true), cfg);
  EXPECT_LT(report.train.epochs.back().mean.total, 0.05);
}

TEST(PtpPretrain, LossFallsAndContractHolds) {
  Model student = tiny_student(2);
  const ParamStore before = student.store.clone();
  PTPTrainConfig cfg;
  cfg.train.epochs = 15;
  cfg.train.learning_rate = 5e-3;
  const auto report = ptp_pretrain(student, toy_ptp(200, false), cfg);
  EXPECT_LE(report.train.epochs.back().mean.total, report.train.epochs.front().mean.total);

  // Encoder changed, head untouched, shapes and routing preserved.
  EXPECT_NE(student.store.layer_sets[0].wq.data()[0], before.layer_sets[0].wq.data()[0]);
  EXPECT_EQ(student.store.head_w.shape(), before.head_w.shape());
  for (std::size_t i = 0; i < before.head_w.size(); ++i)
    EXPECT_EQ(student.store.head_w.data()[i], before.head_w.data()[i]);
  EXPECT_EQ(student.store.named_tensors().size(), before.named_tensors().size());
  const auto now = student.store.named_tensors(), then = before.named_tensors();
  for (std::size_t i = 0; i < now.size(); ++i) {
    EXPECT_EQ(now[i].name, then[i].name);
    EXPECT_EQ(now[i].tensor.shape(), then[i].tensor.shape());
  }
  EXPECT_EQ(student.plan, build_sharing_plan(1, SharingMode::SPS2));
}

TEST(PtpPretrain, EmptyDatasetThrows) {
  Model student = tiny_student(3);
  EXPECT_THROW(ptp_pretrain(student, PTPDataset{}, PTPTrainConfig{}), std::invalid_argument);
}

}  // namespace
}  // namespace sharekd
