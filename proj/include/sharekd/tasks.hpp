#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sharekd/model.hpp"

namespace sharekd {

// Reserved token ids shared by every task.
inline constexpr TokenId kClsToken = 0;
inline constexpr TokenId kPadToken = 1;
inline constexpr TokenId kSepToken = 2;
inline constexpr TokenId kUnkToken = 3;
inline constexpr TokenId kFirstContentToken = 4;

struct Example {
  std::uint64_t id = 0;
  Sequence tokens;
  std::size_t label = 0;
};

struct Dataset {
  std::vector<Example> examples;
  std::size_t num_classes = 2;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  std::vector<std::size_t> labels() const;
  // Throws unless sequences share one length and labels are in range.
  void validate() const;
};

class Vocabulary {
 public:
  // Reserved tokens only.
  Vocabulary();
  // Reserved tokens followed by `words`, in order.
  explicit Vocabulary(const std::vector<std::string>& words);
  // Generated tasks name content token i as "w<i>".
  static Vocabulary synthetic(std::size_t vocab_size);
  // Reserved tokens plus the most frequent words (ties broken
  // lexicographically), up to `max_size` entries in total.
  static Vocabulary fit(const std::vector<std::string>& texts, std::size_t max_size);

  std::size_t size() const { return words_.size(); }
  TokenId lookup(const std::string& word) const;
  const std::string& word(TokenId id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  void add(const std::string& word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TaskSpec {
  std::string name = "pair-equivalence";  // majority-token | pattern-presence | pair-equivalence
  std::size_t train_size = 2000;
  std::size_t dev_size = 500;
  std::size_t test_size = 500;
  std::size_t seq_len = 16;
  std::size_t vocab_size = 32;
  // pattern-presence: place the trigram in every sequence.
  bool force_pattern = false;
  // pair-equivalence: tokens replaced to build a non-equivalent pair.
  std::size_t negative_edits = 1;

  std::size_t num_classes() const { return 2; }
};

struct DatasetBundle {
  Dataset train, dev, test;
  TaskSpec spec;
  std::uint64_t seed = 0;
  Vocabulary vocab;
  // pattern-presence trigram, empty for other tasks.
  std::vector<TokenId> pattern;
};

// Deterministic in (spec, seed). Splits get consecutive, disjoint example ids
// and no token sequence appears twice across the bundle.
DatasetBundle generate_synthetic_task(const TaskSpec& spec, std::uint64_t seed);

// Reference labelling rules, usable as oracles.
std::size_t majority_token_label(const Sequence& tokens);
bool contains_pattern(const Sequence& tokens, std::span<const TokenId> pattern);
bool segments_equivalent(const Sequence& tokens);

struct TsvSchema {
  std::size_t max_seq_len = 16;
  // Known vocabulary; when absent one is fitted from the file.
  std::optional<Vocabulary> vocab;
  std::size_t max_vocab = 32;
  // Inferred as max label + 1 when absent.
  std::optional<std::size_t> num_classes;
  std::uint64_t first_id = 0;
};

struct LoadedTsv {
  Dataset data;
  Vocabulary vocab;
};

// Lines are `label<TAB>text_a[<TAB>text_b]`. Sequences become
// [CLS] a.. [SEP] b.., truncated or padded to max_seq_len.
LoadedTsv load_tsv(const std::filesystem::path& path, const TsvSchema& schema);
void write_tsv(const std::filesystem::path& path, const Dataset& data, const Vocabulary& vocab);

// <dir>/{train,dev,test}.tsv, vocab.txt, spec.txt
void save_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle);
DatasetBundle load_bundle(const std::filesystem::path& dir);

struct Metrics {
  double accuracy = 0.0;
  // Binary tasks only, positive class 1.
  std::optional<double> f1;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

// Lowest index wins ties.
std::size_t argmax(std::span<const double> values);
Metrics compute_metrics(std::span<const std::size_t> predictions,
                        std::span<const std::size_t> labels, std::size_t num_classes);
std::vector<std::size_t> predict(const Model& model, const Dataset& data,
                                 std::size_t batch_size = 64);
Metrics evaluate(const Model& model, const Dataset& data);

std::vector<Sequence> batch_tokens(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace sharekd
