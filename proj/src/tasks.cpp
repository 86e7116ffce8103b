#include "sharekd/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sharekd/encoder.hpp"
#include "sharekd/rng.hpp"

namespace sharekd {
namespace {

const std::vector<std::string> kReserved = {"[CLS]", "[PAD]", "[SEP]", "[UNK]"};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

TokenId random_content(Rng& rng, std::size_t vocab_size) {
  return static_cast<TokenId>(kFirstContentToken + rng.below(vocab_size - kFirstContentToken));
}

Sequence make_majority_example(Rng& rng, const TaskSpec& spec, std::size_t target) {
  const std::size_t len = spec.seq_len - 1;
  while (true) {
    Sequence seq{kClsToken};
    for (std::size_t i = 0; i < len; ++i) seq.push_back(random_content(rng, spec.vocab_size));
    std::map<TokenId, std::size_t> counts;
    for (std::size_t i = 1; i < seq.size(); ++i) ++counts[seq[i]];
    std::size_t best = 0, ties = 0;
    TokenId mode = 0;
    for (auto [tok, c] : counts) {
      if (c > best) {
        best = c;
        mode = tok;
        ties = 1;
      } else if (c == best) {
        ++ties;
      }
    }
    if (ties == 1 && mode % 2 == target) return seq;
  }
}

Sequence make_pattern_example(Rng& rng, const TaskSpec& spec, std::span<const TokenId> pattern,
                              bool positive) {
  const std::size_t len = spec.seq_len - 1;
  while (true) {
    Sequence seq{kClsToken};
    for (std::size_t i = 0; i < len; ++i) seq.push_back(random_content(rng, spec.vocab_size));
    if (positive) {
      const std::size_t at = 1 + rng.below(len - pattern.size() + 1);
      std::copy(pattern.begin(), pattern.end(), seq.begin() + static_cast<std::ptrdiff_t>(at));
      return seq;
    }
    if (!contains_pattern(seq, pattern)) return seq;
  }
}

Sequence make_pair_example(Rng& rng, const TaskSpec& spec, bool positive) {
  const std::size_t seg = (spec.seq_len - 2) / 2;
  while (true) {
    std::vector<TokenId> a(seg), b;
    for (auto& t : a) t = random_content(rng, spec.vocab_size);
    b = a;
    rng.shuffle(b);
    if (!positive) {
      for (std::size_t e = 0; e < spec.negative_edits; ++e) {
        const std::size_t at = rng.below(seg);
        TokenId replacement;
        do {
          replacement = random_content(rng, spec.vocab_size);
        } while (replacement == b[at]);
        b[at] = replacement;
      }
    }
    Sequence seq{kClsToken};
    seq.insert(seq.end(), a.begin(), a.end());
    seq.push_back(kSepToken);
    seq.insert(seq.end(), b.begin(), b.end());
    while (seq.size() < spec.seq_len) seq.push_back(kPadToken);
    if (segments_equivalent(seq) == positive) return seq;
  }
}

void validate_spec(const TaskSpec& spec) {
  if (spec.name != "majority-token" && spec.name != "pattern-presence" &&
      spec.name != "pair-equivalence") {
    throw std::invalid_argument("unknown task spec '" + spec.name +
                                "' (expected majority-token, pattern-presence or pair-equivalence)");
  }
  if (spec.vocab_size < kFirstContentToken + 4) {
    throw std::invalid_argument("task spec: vocab_size must leave at least 4 content tokens");
  }
  if (spec.seq_len < 5) throw std::invalid_argument("task spec: seq_len must be at least 5");
  if (spec.train_size == 0 || spec.dev_size == 0 || spec.test_size == 0) {
    throw std::invalid_argument("task spec: split sizes must be positive");
  }
  if (spec.name == "pair-equivalence" && spec.negative_edits == 0) {
    throw std::invalid_argument("task spec: negative_edits must be positive");
  }
}

}  // namespace

std::vector<std::size_t> Dataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

void Dataset::validate() const {
  if (num_classes == 0) throw std::invalid_argument("dataset: num_classes must be positive");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    if (e.tokens.size() != examples.front().tokens.size()) {
      throw std::invalid_argument("dataset: example " + std::to_string(i) + " has length " +
                                  std::to_string(e.tokens.size()) + ", expected " +
                                  std::to_string(examples.front().tokens.size()));
    }
    if (e.label >= num_classes) {
      throw std::invalid_argument("dataset: example " + std::to_string(i) + " has label " +
                                  std::to_string(e.label) + " >= " + std::to_string(num_classes));
    }
  }
}

Vocabulary::Vocabulary() {
  for (const auto& w : kReserved) add(w);
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) add(w);
}

void Vocabulary::add(const std::string& word) {
  if (index_.count(word)) throw std::invalid_argument("vocabulary: duplicate word '" + word + "'");
  index_.emplace(word, static_cast<TokenId>(words_.size()));
  words_.push_back(word);
}

Vocabulary Vocabulary::synthetic(std::size_t vocab_size) {
  std::vector<std::string> words;
  for (std::size_t i = kFirstContentToken; i < vocab_size; ++i) words.push_back("w" + std::to_string(i));
  return Vocabulary(words);
}

Vocabulary Vocabulary::fit(const std::vector<std::string>& texts, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (const auto& w : words_of(t))
      if (std::find(kReserved.begin(), kReserved.end(), w) == kReserved.end()) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (const auto& [w, c] : ranked) {
    if (words.size() + kReserved.size() >= max_size) break;
    words.push_back(w);
  }
  return Vocabulary(words);
}

TokenId Vocabulary::lookup(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnkToken : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (const auto& w : words_) out << w << "\n";
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> words;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (n < kReserved.size()) {
      if (line != kReserved[n]) {
        throw std::runtime_error(path.string() + ": line " + std::to_string(n + 1) +
                                 " should be reserved token " + kReserved[n]);
      }
    } else {
      words.push_back(line);
    }
    ++n;
  }
  return Vocabulary(words);
}

std::size_t majority_token_label(const Sequence& tokens) {
  std::map<TokenId, std::size_t> counts;
  for (TokenId t : tokens)
    if (t >= kFirstContentToken) ++counts[t];
  TokenId mode = 0;
  std::size_t best = 0;
  for (auto [tok, c] : counts) {
    if (c > best) {
      best = c;
      mode = tok;
    }
  }
  return mode % 2;
}

bool contains_pattern(const Sequence& tokens, std::span<const TokenId> pattern) {
  if (pattern.empty() || tokens.size() < pattern.size()) return false;
  return std::search(tokens.begin(), tokens.end(), pattern.begin(), pattern.end()) != tokens.end();
}

bool segments_equivalent(const Sequence& tokens) {
  std::vector<TokenId> a, b;
  bool second = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenId t = tokens[i];
    if (t == kSepToken && !second) {
      second = true;
    } else if (t >= kFirstContentToken || t == kUnkToken) {
      (second ? b : a).push_back(t);
    }
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

DatasetBundle generate_synthetic_task(const TaskSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  DatasetBundle bundle;
  bundle.spec = spec;
  bundle.seed = seed;
  bundle.vocab = Vocabulary::synthetic(spec.vocab_size);
  Rng rng(derive_seed(seed, "generate:" + spec.name));

  if (spec.name == "pattern-presence") {
    for (int i = 0; i < 3; ++i) bundle.pattern.push_back(random_content(rng, spec.vocab_size));
  }

  std::set<Sequence> seen;
  std::uint64_t next_id = 0;
  auto fill = [&](Dataset& split, std::size_t count) {
    split.num_classes = spec.num_classes();
    std::vector<Example> examples;
    while (examples.size() < count) {
      const std::size_t target = examples.size() % 2;
      Sequence seq;
      if (spec.name == "majority-token") {
        seq = make_majority_example(rng, spec, target);
      } else if (spec.name == "pattern-presence") {
        seq = make_pattern_example(rng, spec, bundle.pattern, spec.force_pattern || target == 1);
      } else {
        seq = make_pair_example(rng, spec, target == 1);
      }
      if (!seen.insert(seq).second) continue;
      const std::size_t label = spec.name == "pattern-presence" && spec.force_pattern ? 1 : target;
      examples.push_back({0, std::move(seq), label});
    }
    rng.shuffle(examples);
    for (auto& e : examples) e.id = next_id++;
    split.examples = std::move(examples);
  };
  fill(bundle.train, spec.train_size);
  fill(bundle.dev, spec.dev_size);
  fill(bundle.test, spec.test_size);
  return bundle;
}

LoadedTsv load_tsv(const std::filesystem::path& path, const TsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  struct Row {
    std::size_t label;
    std::string a, b;
    bool pair;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split(line, '\t');
    std::size_t label = 0;
    if ((fields.size() != 2 && fields.size() != 3) || !parse_number(fields[0], label)) {
      throw std::runtime_error(path.string() + ": malformed line " + std::to_string(line_no) +
                               " (expected label<TAB>text_a[<TAB>text_b])");
    }
    rows.push_back({label, fields[1], fields.size() == 3 ? fields[2] : "", fields.size() == 3});
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": no examples");
  if (schema.max_seq_len < 2) throw std::invalid_argument("load_tsv: max_seq_len must be at least 2");

  LoadedTsv out;
  if (schema.vocab) {
    out.vocab = *schema.vocab;
  } else {
    std::vector<std::string> texts;
    for (const auto& r : rows) {
      texts.push_back(r.a);
      texts.push_back(r.b);
    }
    out.vocab = Vocabulary::fit(texts, schema.max_vocab);
  }

  std::size_t max_label = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    Sequence seq{kClsToken};
    for (const auto& w : words_of(r.a)) seq.push_back(out.vocab.lookup(w));
    if (r.pair) {
      seq.push_back(kSepToken);
      for (const auto& w : words_of(r.b)) seq.push_back(out.vocab.lookup(w));
    }
    seq.resize(schema.max_seq_len, kPadToken);
    out.data.examples.push_back({schema.first_id + i, std::move(seq), r.label});
    max_label = std::max(max_label, r.label);
  }
  out.data.num_classes = schema.num_classes.value_or(max_label + 1);
  if (max_label >= out.data.num_classes) {
    throw std::runtime_error(path.string() + ": label " + std::to_string(max_label) +
                             " exceeds the declared " + std::to_string(out.data.num_classes) +
                             " classes");
  }
  return out;
}

void write_tsv(const std::filesystem::path& path, const Dataset& data, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& e : data.examples) {
    std::string a, b;
    bool second = false;
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      const TokenId t = e.tokens[i];
      if (i == 0 && t == kClsToken) continue;
      if (t == kPadToken) continue;
      if (t == kSepToken && !second) {
        second = true;
        continue;
      }
      std::string& seg = second ? b : a;
      if (!seg.empty()) seg += ' ';
      seg += vocab.word(t);
    }
    out << e.label << '\t' << a;
    if (second) out << '\t' << b;
    out << '\n';
  }
}

void save_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle) {
  std::filesystem::create_directories(dir);
  write_tsv(dir / "train.tsv", bundle.train, bundle.vocab);
  write_tsv(dir / "dev.tsv", bundle.dev, bundle.vocab);
  write_tsv(dir / "test.tsv", bundle.test, bundle.vocab);
  bundle.vocab.save(dir / "vocab.txt");
  std::ofstream out(dir / "spec.txt");
  const TaskSpec& s = bundle.spec;
  out << "task=" << s.name << "\nseed=" << bundle.seed << "\ntrain_size=" << s.train_size
      << "\ndev_size=" << s.dev_size << "\ntest_size=" << s.test_size << "\nseq_len=" << s.seq_len
      << "\nvocab_size=" << bundle.vocab.size() << "\nnum_classes=" << bundle.train.num_classes
      << "\nforce_pattern=" << (s.force_pattern ? 1 : 0) << "\nnegative_edits=" << s.negative_edits
      << "\npattern=";
  for (std::size_t i = 0; i < bundle.pattern.size(); ++i) out << (i ? "," : "") << bundle.pattern[i];
  out << "\n";
  if (!out) throw std::runtime_error("cannot write " + (dir / "spec.txt").string());
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream in(dir / "spec.txt");
  if (!in) throw std::runtime_error("missing task manifest " + (dir / "spec.txt").string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto num = [&](const std::string& key) {
    std::uint64_t v = 0;
    if (!kv.count(key) || !parse_number(kv[key], v)) {
      throw std::runtime_error((dir / "spec.txt").string() + ": missing or bad '" + key + "'");
    }
    return v;
  };
  DatasetBundle bundle;
  bundle.spec.name = kv["task"];
  bundle.seed = num("seed");
  bundle.spec.train_size = num("train_size");
  bundle.spec.dev_size = num("dev_size");
  bundle.spec.test_size = num("test_size");
  bundle.spec.seq_len = num("seq_len");
  bundle.spec.vocab_size = num("vocab_size");
  bundle.spec.force_pattern = num("force_pattern") != 0;
  bundle.spec.negative_edits = num("negative_edits");
  for (const auto& tok : split(kv["pattern"], ',')) {
    TokenId t = 0;
    if (!tok.empty() && parse_number(tok, t)) bundle.pattern.push_back(t);
  }
  bundle.vocab = Vocabulary::load(dir / "vocab.txt");
  TsvSchema schema;
  schema.max_seq_len = bundle.spec.seq_len;
  schema.vocab = bundle.vocab;
  schema.num_classes = num("num_classes");
  schema.first_id = 0;
  bundle.train = load_tsv(dir / "train.tsv", schema).data;
  schema.first_id = bundle.train.size();
  bundle.dev = load_tsv(dir / "dev.tsv", schema).data;
  schema.first_id += bundle.dev.size();
  bundle.test = load_tsv(dir / "test.tsv", schema).data;
  return bundle;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

Metrics compute_metrics(std::span<const std::size_t> predictions,
                        std::span<const std::size_t> labels, std::size_t num_classes) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("compute_metrics: prediction/label count mismatch");
  }
  if (labels.empty()) throw std::invalid_argument("compute_metrics: no examples");
  Metrics m;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw std::invalid_argument("compute_metrics: class index out of range");
    }
    ++m.confusion[labels[i]][predictions[i]];
    if (labels[i] == predictions[i]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  if (num_classes == 2) {
    const double tp = static_cast<double>(m.confusion[1][1]);
    const double fp = static_cast<double>(m.confusion[0][1]);
    const double fn = static_cast<double>(m.confusion[1][0]);
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    m.f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return m;
}

std::vector<Sequence> batch_tokens(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<Sequence> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.examples.at(i).tokens);
  return out;
}

std::vector<std::size_t> predict(const Model& model, const Dataset& data, std::size_t batch_size) {
  std::vector<std::size_t> preds;
  preds.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const auto out = encoder_forward(model, batch_tokens(data, idx));
    const std::size_t c = out.logits.cols();
    for (std::size_t r = 0; r < idx.size(); ++r)
      preds.push_back(argmax(out.logits.data().subspan(r * c, c)));
  }
  return preds;
}

Metrics evaluate(const Model& model, const Dataset& data) {
  if (model.config.num_classes != data.num_classes) {
    throw std::invalid_argument("evaluate: model predicts " +
                                std::to_string(model.config.num_classes) +
                                " classes, dataset has " + std::to_string(data.num_classes));
  }
  const auto preds = predict(model, data);
  const auto labels = data.labels();
  return compute_metrics(preds, labels, data.num_classes);
}

}  // namespace sharekd
