#include "sharekd/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "sharekd/pipeline.hpp"

namespace sharekd {
namespace {

int method_rank(const std::string& label) {
  if (label == "Plain") return 0;
  if (label == "SPS1") return 1;
  if (label == "SPS2") return 2;
  return 3;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string join_dirs(const std::vector<std::filesystem::path>& dirs) {
  std::string out = "missing summary record in:";
  for (const auto& d : dirs) out += " " + d.string();
  return out;
}

}  // namespace

MissingSummaryError::MissingSummaryError(std::vector<std::filesystem::path> dirs)
    : std::runtime_error(join_dirs(dirs)), dirs_(std::move(dirs)) {}

SummaryRecord parse_summary(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  SummaryRecord r;
  r.task = j.at("task").get<std::string>();
  r.sps_mode = j.at("sps_mode").get<std::string>();
  r.ptp_scheme = j.at("ptp_scheme").get<std::string>();
  r.alpha = j.at("alpha").get<double>();
  r.beta = j.at("beta").get<double>();
  r.temperature = j.at("temperature").get<double>();
  r.t = j.at("t").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.test_acc = j.at("test_acc").get<double>();
  if (!j.at("test_f1").is_null()) r.test_f1 = j.at("test_f1").get<double>();
  return r;
}

SummaryRecord read_summary(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / artifacts::kSummary);
  if (!in) throw MissingSummaryError({run_dir});
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_summary(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error((run_dir / artifacts::kSummary).string() + ": " + e.what());
  }
}

std::string method_label(const std::string& sps_mode, const std::string& ptp_scheme) {
  if (ptp_scheme == "None" || ptp_scheme.empty()) return sps_mode;
  return sps_mode + "+PTP-" + ptp_scheme;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_std of no values");
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

AblationTable build_report(const std::vector<SummaryRecord>& records) {
  std::map<std::string, std::map<std::string, std::vector<const SummaryRecord*>>> grouped;
  for (const auto& r : records) grouped[r.task][method_label(r.sps_mode, r.ptp_scheme)].push_back(&r);

  AblationTable table;
  for (const auto& [task, by_method] : grouped) {
    TaskRow row;
    row.task = task;
    for (const auto& [method, runs] : by_method) {
      std::vector<double> accs, f1s;
      for (const auto* r : runs) {
        accs.push_back(r->test_acc);
        if (r->test_f1) f1s.push_back(*r->test_f1);
      }
      CellStats cell;
      cell.runs = runs.size();
      std::tie(cell.acc_mean, cell.acc_std) = mean_std(accs);
      if (f1s.size() == runs.size()) {
        const auto [m, s] = mean_std(f1s);
        cell.f1_mean = m;
        cell.f1_std = s;
      }
      row.cells[method] = cell;
      if (std::find(table.methods.begin(), table.methods.end(), method) == table.methods.end()) {
        table.methods.push_back(method);
      }
    }
    auto delta = [&](const std::string& name, const std::string& hi, const std::string& lo) {
      auto a = row.cells.find(hi), b = row.cells.find(lo);
      if (a == row.cells.end() || b == row.cells.end()) return;
      Delta d{name, a->second.acc_mean - b->second.acc_mean, std::nullopt};
      if (a->second.f1_mean && b->second.f1_mean) d.f1 = *a->second.f1_mean - *b->second.f1_mean;
      row.deltas.push_back(d);
    };
    delta("SPS1-Plain", "SPS1", "Plain");
    delta("SPS2-SPS1", "SPS2", "SPS1");
    delta("+PTP-SPS2", "SPS2+PTP-Full4", "SPS2");
    table.rows.push_back(std::move(row));
  }
  std::stable_sort(table.methods.begin(), table.methods.end(),
                   [](const std::string& a, const std::string& b) {
                     const int ra = method_rank(a), rb = method_rank(b);
                     return ra != rb ? ra < rb : a < b;
                   });
  return table;
}

AblationTable report(const std::vector<std::filesystem::path>& run_dirs) {
  std::vector<std::filesystem::path> missing;
  for (const auto& d : run_dirs) {
    if (!std::filesystem::is_regular_file(d / artifacts::kSummary)) missing.push_back(d);
  }
  if (!missing.empty()) throw MissingSummaryError(std::move(missing));
  std::vector<SummaryRecord> records;
  for (const auto& d : run_dirs) records.push_back(read_summary(d));
  return build_report(records);
}

std::string render_markdown(const AblationTable& table) {
  std::ostringstream out;
  out << "| task |";
  for (const auto& m : table.methods) out << " " << m << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < table.methods.size(); ++i) out << "---|";
  out << "\n";
  for (const auto& row : table.rows) {
    out << "| " << row.task << " |";
    for (const auto& m : table.methods) {
      auto it = row.cells.find(m);
      if (it == row.cells.end()) {
        out << " - |";
        continue;
      }
      const CellStats& c = it->second;
      out << " acc " << fmt(c.acc_mean) << " ± " << fmt(c.acc_std);
      if (c.f1_mean) out << ", F1 " << fmt(*c.f1_mean) << " ± " << fmt(*c.f1_std);
      out << " (n=" << c.runs << ") |";
    }
    out << "\n";
  }
  bool any = false;
  for (const auto& row : table.rows) {
    for (const auto& d : row.deltas) {
      if (!any) out << "\n| task | delta | acc | F1 |\n|---|---|---|---|\n";
      any = true;
      out << "| " << row.task << " | " << d.name << " | " << fmt(d.acc) << " | "
          << (d.f1 ? fmt(*d.f1) : "-") << " |\n";
    }
  }
  return out.str();
}

std::string render_json(const AblationTable& table) {
  nlohmann::ordered_json j;
  j["methods"] = table.methods;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    nlohmann::ordered_json r;
    r["task"] = row.task;
    r["cells"] = nlohmann::ordered_json::object();
    for (const auto& m : table.methods) {
      auto it = row.cells.find(m);
      if (it == row.cells.end()) continue;
      const CellStats& c = it->second;
      nlohmann::ordered_json cell;
      cell["runs"] = c.runs;
      cell["acc_mean"] = c.acc_mean;
      cell["acc_std"] = c.acc_std;
      if (c.f1_mean) {
        cell["f1_mean"] = *c.f1_mean;
        cell["f1_std"] = *c.f1_std;
      }
      r["cells"][m] = cell;
    }
    r["deltas"] = nlohmann::ordered_json::array();
    for (const auto& d : row.deltas) {
      nlohmann::ordered_json dj;
      dj["name"] = d.name;
      dj["acc"] = d.acc;
      dj["f1"] = d.f1 ? nlohmann::ordered_json(*d.f1) : nlohmann::ordered_json(nullptr);
      r["deltas"].push_back(dj);
    }
    j["rows"].push_back(r);
  }
  return j.dump(2) + "\n";
}

}  // namespace sharekd
