#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sharekd {

struct SummaryRecord {
  std::string task;
  std::string sps_mode;
  std::string ptp_scheme;
  double alpha = 0.0;
  double beta = 0.0;
  double temperature = 1.0;
  double t = 0.9;
  std::uint64_t seed = 0;
  double test_acc = 0.0;
  std::optional<double> test_f1;
};

SummaryRecord parse_summary(const std::string& json_text);
SummaryRecord read_summary(const std::filesystem::path& run_dir);

// "Plain", "SPS1", "SPS2", or e.g. "SPS2+PTP-Full4".
std::string method_label(const std::string& sps_mode, const std::string& ptp_scheme);

struct CellStats {
  std::size_t runs = 0;
  double acc_mean = 0.0;
  double acc_std = 0.0;  // sample standard deviation; 0 for a single run
  std::optional<double> f1_mean;
  std::optional<double> f1_std;
};

struct Delta {
  std::string name;  // "SPS1-Plain", "SPS2-SPS1", "+PTP-SPS2"
  double acc = 0.0;
  std::optional<double> f1;
};

struct TaskRow {
  std::string task;
  std::map<std::string, CellStats> cells;  // by method label
  std::vector<Delta> deltas;               // only those whose methods are present
};

struct AblationTable {
  std::vector<std::string> methods;  // column order
  std::vector<TaskRow> rows;         // sorted by task
};

// Thrown when run directories lack a summary; lists every such directory.
class MissingSummaryError : public std::runtime_error {
 public:
  explicit MissingSummaryError(std::vector<std::filesystem::path> dirs);
  const std::vector<std::filesystem::path>& dirs() const { return dirs_; }

 private:
  std::vector<std::filesystem::path> dirs_;
};

AblationTable build_report(const std::vector<SummaryRecord>& records);
AblationTable report(const std::vector<std::filesystem::path>& run_dirs);

// Mean and sample standard deviation (n - 1 denominator, 0 when n == 1).
std::pair<double, double> mean_std(const std::vector<double>& xs);

std::string render_markdown(const AblationTable& table);
std::string render_json(const AblationTable& table);

}  // namespace sharekd
