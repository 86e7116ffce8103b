#include "sharekd/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace sharekd {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::string pairs_text(const std::optional<std::vector<LayerPair>>& pairs) {
  if (!pairs) return "auto";
  if (pairs->empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < pairs->size(); ++i) {
    if (i) out += ",";
    out += std::to_string((*pairs)[i].student_layer) + ":" + std::to_string((*pairs)[i].teacher_layer);
  }
  return out;
}

std::optional<std::vector<LayerPair>> parse_pairs(const std::string& key, const std::string& v) {
  if (v == "auto") return std::nullopt;
  std::vector<LayerPair> out;
  if (v == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError(key, "expected s:t pairs, got '" + item + "'");
    out.push_back({to_u64(key, trim(item.substr(0, colon))), to_u64(key, trim(item.substr(colon + 1)))});
  }
  return out;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(KEY, MEMBER)                                                               \
  Field {                                                                                     \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_u64(KEY, v); },              \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }                           \
  }
#define DOUBLE_FIELD(KEY, MEMBER)                                                             \
  Field {                                                                                     \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); },           \
        [](const RunConfig& c) { return format_double(c.MEMBER); }                            \
  }
#define BOOL_FIELD(KEY, MEMBER)                                                               \
  Field {                                                                                     \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); },             \
        [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }           \
  }
#define STRING_FIELD(KEY, MEMBER)                                                             \
  Field {                                                                                     \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = v; },                            \
        [](const RunConfig& c) { return std::string(c.MEMBER); }                              \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      STRING_FIELD("task", task),
      SIZE_FIELD("task.train_size", task_spec.train_size),
      SIZE_FIELD("task.dev_size", task_spec.dev_size),
      SIZE_FIELD("task.test_size", task_spec.test_size),
      SIZE_FIELD("task.seq_len", task_spec.seq_len),
      SIZE_FIELD("task.vocab_size", task_spec.vocab_size),
      BOOL_FIELD("task.force_pattern", task_spec.force_pattern),
      SIZE_FIELD("task.negative_edits", task_spec.negative_edits),
      STRING_FIELD("tsv.train", train_tsv),
      STRING_FIELD("tsv.dev", dev_tsv),
      STRING_FIELD("tsv.test", test_tsv),
      SIZE_FIELD("tsv.max_vocab", tsv_max_vocab),
      SIZE_FIELD("model.hidden_dim", encoder.hidden_dim),
      SIZE_FIELD("model.num_heads", encoder.num_heads),
      SIZE_FIELD("model.ff_dim", encoder.ff_dim),
      DOUBLE_FIELD("model.init_std", init_std),
      SIZE_FIELD("teacher.layers", encoder.num_physical_layers),
      DOUBLE_FIELD("teacher.lr", teacher_train.learning_rate),
      SIZE_FIELD("teacher.batch_size", teacher_train.batch_size),
      SIZE_FIELD("teacher.epochs", teacher_train.epochs),
      SIZE_FIELD("student.layers", student_layers),
      Field{"sps",
            [](RunConfig& c, const std::string& v) {
              try {
                c.sps = parse_sharing_mode(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError("sps", e.what());
              }
            },
            [](const RunConfig& c) { return std::string(to_string(c.sps)); }},
      Field{"ptp",
            [](RunConfig& c, const std::string& v) {
              if (v == "None") {
                c.ptp.reset();
                return;
              }
              try {
                c.ptp = parse_ptp_scheme(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError("ptp", e.what());
              }
            },
            [](const RunConfig& c) { return c.ptp ? std::string(to_string(*c.ptp)) : "None"; }},
      DOUBLE_FIELD("ptp.t", kd.threshold),
      DOUBLE_FIELD("ptp.lr", ptp_train.train.learning_rate),
      SIZE_FIELD("ptp.batch_size", ptp_train.train.batch_size),
      SIZE_FIELD("ptp.max_epochs", ptp_train.train.epochs),
      DOUBLE_FIELD("ptp.min_improvement", ptp_train.min_improvement),
      SIZE_FIELD("ptp.patience", ptp_train.patience),
      DOUBLE_FIELD("kd.alpha", kd.alpha),
      DOUBLE_FIELD("kd.beta", kd.beta),
      DOUBLE_FIELD("kd.temperature", kd.temperature),
      DOUBLE_FIELD("kd.student_temperature", kd.student_temperature),
      Field{"kd.kl_direction",
            [](RunConfig& c, const std::string& v) {
              try {
                c.kd.kl_direction = parse_kl_direction(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError("kd.kl_direction", e.what());
              }
            },
            [](const RunConfig& c) { return std::string(to_string(c.kd.kl_direction)); }},
      Field{"kd.layer_pairs",
            [](RunConfig& c, const std::string& v) { c.kd.layer_pairs = parse_pairs("kd.layer_pairs", v); },
            [](const RunConfig& c) { return pairs_text(c.kd.layer_pairs); }},
      BOOL_FIELD("kd.normalize_hidden", kd.normalize_hidden),
      DOUBLE_FIELD("kd.lr", kd.train.learning_rate),
      SIZE_FIELD("kd.batch_size", kd.train.batch_size),
      SIZE_FIELD("kd.epochs", kd.train.epochs),
      Field{"out", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
            [](const RunConfig& c) { return c.out_dir.string(); }},
      SIZE_FIELD("seed", seed),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void RunConfig::validate() const {
  const bool synthetic = task != "tsv";
  if (synthetic) {
    if (task != "pair-equivalence" && task != "majority-token" && task != "pattern-presence") {
      throw ConfigError("task", "unknown task '" + task + "'");
    }
  } else if (train_tsv.empty() || dev_tsv.empty() || test_tsv.empty()) {
    throw ConfigError("tsv.train", "task = tsv needs tsv.train, tsv.dev and tsv.test");
  }
  try {
    EncoderConfig e = encoder;
    e.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError("model", ex.what());
  }
  if (student_layers == 0 || student_layers > encoder.num_physical_layers) {
    throw ConfigError("student.layers", "must be in 1.." + std::to_string(encoder.num_physical_layers));
  }
  if (!(init_std > 0.0)) throw ConfigError("model.init_std", "must be positive");
  if (!(kd.threshold >= 0.5 && kd.threshold <= 1.0)) throw ConfigError("ptp.t", "must be in [0.5, 1.0]");
  if (!(kd.alpha >= 0.0 && kd.alpha <= 1.0)) throw ConfigError("kd.alpha", "must be in [0, 1]");
  if (!(kd.beta >= 0.0)) throw ConfigError("kd.beta", "must be non-negative");
  if (!(kd.temperature > 0.0)) throw ConfigError("kd.temperature", "must be positive");
  if (!(kd.student_temperature > 0.0)) throw ConfigError("kd.student_temperature", "must be positive");
  auto check_train = [](const TrainConfig& t, const std::string& prefix) {
    if (!(t.learning_rate > 0.0)) throw ConfigError(prefix + ".lr", "must be positive");
    if (t.batch_size == 0) throw ConfigError(prefix + ".batch_size", "must be positive");
    if (t.epochs == 0) throw ConfigError(prefix + (prefix == "ptp" ? ".max_epochs" : ".epochs"), "must be positive");
  };
  check_train(teacher_train, "teacher");
  check_train(ptp_train.train, "ptp");
  check_train(kd.train, "kd");
  const std::size_t student_physical = build_sharing_plan(student_layers, sps).size();
  if (kd.layer_pairs) {
    for (const auto& p : *kd.layer_pairs) {
      if (p.student_layer < 1 || p.student_layer > student_physical || p.teacher_layer < 1 ||
          p.teacher_layer > encoder.num_physical_layers) {
        throw ConfigError("kd.layer_pairs", "pair " + std::to_string(p.student_layer) + ":" +
                                                std::to_string(p.teacher_layer) +
                                                " outside student 1.." +
                                                std::to_string(student_physical) + " / teacher 1.." +
                                                std::to_string(encoder.num_physical_layers));
      }
    }
  }
}

bool RunConfig::operator==(const RunConfig& other) const {
  return config_entries(*this) == config_entries(other);
}

RunConfig parse_run_config(const std::string& text) {
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(key, "unknown key");
    if (!seen.insert(key).second) throw ConfigError(key, "duplicate key");
    it->second->set(cfg, value);
  }
  cfg.task_spec.name = cfg.task;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace sharekd
