#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "sharekd/config.hpp"

namespace sharekd {

// A pipeline stage failed after the configuration was accepted.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Artifact names inside a run directory.
namespace artifacts {
inline constexpr const char* kTaskDir = "task";
inline constexpr const char* kConfig = "config.txt";
inline constexpr const char* kTeacher = "teacher.ckpt";
inline constexpr const char* kTeacherReport = "teacher_report.jsonl";
inline constexpr const char* kPtpData = "ptp.tsv";
inline constexpr const char* kStudentInit = "student_init.ckpt";
inline constexpr const char* kPtpReport = "ptp_report.jsonl";
inline constexpr const char* kStudent = "student.ckpt";
inline constexpr const char* kDistillReport = "distill_report.jsonl";
inline constexpr const char* kSummary = "summary.json";
inline constexpr const char* kTiming = "timing.jsonl";
}  // namespace artifacts

// Each stage reads its inputs from cfg.out_dir and writes its outputs there,
// so any stage can be rerun on its own. Stage seeds are derive_seed(cfg.seed,
// <stage key>). Failures are reported as StageError.
void stage_gen_task(const RunConfig& cfg);
void stage_train_teacher(const RunConfig& cfg);
void stage_build_ptp(const RunConfig& cfg);      // no-op when cfg.ptp is None
void stage_ptp_pretrain(const RunConfig& cfg);   // initialises the student; PTP only if enabled
void stage_distill(const RunConfig& cfg);
void stage_eval(const RunConfig& cfg);

// Validates, then runs every stage in order. Throws ConfigError or StageError.
void run_pipeline(const RunConfig& cfg);

// The summary record written by stage_eval: one JSON object with the fields
// task, sps_mode, ptp_scheme, alpha, beta, temperature, t, seed, test_acc,
// test_f1 (null for non-binary tasks) and config (every config key echoed).
std::string summary_record(const RunConfig& cfg, double test_acc, std::optional<double> test_f1);

}  // namespace sharekd
