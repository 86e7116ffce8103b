#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sharekd/distill.hpp"
#include "sharekd/model.hpp"
#include "sharekd/ptp.hpp"
#include "sharekd/sps.hpp"
#include "sharekd/tasks.hpp"
#include "sharekd/train.hpp"

namespace sharekd {

// Invalid configuration; `field` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  // "pair-equivalence", "majority-token", "pattern-presence" or "tsv".
  std::string task = "pair-equivalence";
  TaskSpec task_spec;  // seq_len also bounds tsv sequences
  std::string train_tsv, dev_tsv, test_tsv;
  std::size_t tsv_max_vocab = 1024;

  // Teacher geometry; students share it with fewer independent layers.
  // vocab_size and max_seq_len are overwritten from the task data.
  EncoderConfig encoder{.vocab_size = 32, .max_seq_len = 16, .hidden_dim = 32, .num_heads = 2,
                        .ff_dim = 64, .num_physical_layers = 4, .num_classes = 2};
  std::size_t student_layers = 1;
  double init_std = 0.1;

  SharingMode sps = SharingMode::SPS2;
  std::optional<PTPScheme> ptp = PTPScheme::Full4;

  TrainConfig teacher_train;
  PTPTrainConfig ptp_train;
  KDConfig kd;

  std::filesystem::path out_dir = "run";
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const RunConfig&) const;
};

// `key = value` lines; blank lines and lines starting with '#' are ignored.
// Unknown keys and unparsable values raise ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
// Canonical key/value pairs, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg);
std::string serialize_run_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace sharekd
