#include "sharekd/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <nlohmann/json.hpp>

#include "sharekd/checkpoint.hpp"
#include "sharekd/rng.hpp"

namespace sharekd {
namespace {

namespace fs = std::filesystem;

fs::path artifact(const RunConfig& cfg, const char* name) { return cfg.out_dir / name; }

void require_file(const fs::path& p, const std::string& stage) {
  if (!fs::exists(p)) throw StageError(stage, "missing input " + p.string());
}

// Runs `body`, converting library errors into StageError and appending the
// stage's wall time to the timing log (kept apart from metric files).
template <typename F>
void timed_stage(const RunConfig& cfg, const std::string& stage, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  try {
    fs::create_directories(cfg.out_dir);
    body();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream log(artifact(cfg, artifacts::kTiming), std::ios::app);
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["seconds"] = secs;
  log << j.dump() << "\n";
}

EncoderConfig teacher_config(const RunConfig& cfg, const DatasetBundle& bundle) {
  EncoderConfig e = cfg.encoder;
  e.vocab_size = bundle.vocab.size();
  e.max_seq_len = bundle.spec.seq_len;
  e.num_classes = bundle.train.num_classes;
  return e;
}

DatasetBundle load_task(const RunConfig& cfg, const std::string& stage) {
  const fs::path dir = artifact(cfg, artifacts::kTaskDir);
  require_file(dir / "spec.txt", stage);
  return load_bundle(dir);
}

KDConfig kd_config(const RunConfig& cfg) {
  KDConfig kd = cfg.kd;
  kd.train.seed = derive_seed(cfg.seed, "distill");
  return kd;
}

}  // namespace

void stage_gen_task(const RunConfig& cfg) {
  timed_stage(cfg, "gen-task", [&] {
    DatasetBundle bundle;
    if (cfg.task == "tsv") {
      TsvSchema schema;
      schema.max_seq_len = cfg.task_spec.seq_len;
      schema.max_vocab = cfg.tsv_max_vocab;
      for (const auto& p : {cfg.train_tsv, cfg.dev_tsv, cfg.test_tsv}) {
        if (!fs::exists(p)) throw ConfigError("tsv", "no such file " + p);
      }
      LoadedTsv train = load_tsv(cfg.train_tsv, schema);
      schema.vocab = train.vocab;
      schema.num_classes = train.data.num_classes;
      schema.first_id = train.data.size();
      bundle.dev = load_tsv(cfg.dev_tsv, schema).data;
      schema.first_id += bundle.dev.size();
      bundle.test = load_tsv(cfg.test_tsv, schema).data;
      bundle.train = std::move(train.data);
      bundle.vocab = std::move(train.vocab);
      bundle.spec = cfg.task_spec;
      bundle.spec.name = "tsv";
      bundle.spec.train_size = bundle.train.size();
      bundle.spec.dev_size = bundle.dev.size();
      bundle.spec.test_size = bundle.test.size();
      bundle.spec.vocab_size = bundle.vocab.size();
      bundle.seed = cfg.seed;
    } else {
      TaskSpec spec = cfg.task_spec;
      spec.name = cfg.task;
      bundle = generate_synthetic_task(spec, derive_seed(cfg.seed, "task"));
    }
    save_bundle(artifact(cfg, artifacts::kTaskDir), bundle);
    std::ofstream(artifact(cfg, artifacts::kConfig)) << serialize_run_config(cfg);
  });
}

void stage_train_teacher(const RunConfig& cfg) {
  timed_stage(cfg, "train-teacher", [&] {
    const DatasetBundle bundle = load_task(cfg, "train-teacher");
    const EncoderConfig ec = teacher_config(cfg, bundle);
    Model teacher = init_model(ec, build_sharing_plan(ec.num_physical_layers, SharingMode::Plain),
                               derive_seed(cfg.seed, "teacher-init"), cfg.init_std);
    TrainConfig tc = cfg.teacher_train;
    tc.seed = derive_seed(cfg.seed, "teacher-train");
    const TrainReport report = finetune_teacher(teacher, bundle, tc);
    save_checkpoint(artifact(cfg, artifacts::kTeacher), teacher);
    write_report_jsonl(artifact(cfg, artifacts::kTeacherReport), report);
  });
}

void stage_build_ptp(const RunConfig& cfg) {
  if (!cfg.ptp) return;
  timed_stage(cfg, "build-ptp", [&] {
    const DatasetBundle bundle = load_task(cfg, "build-ptp");
    require_file(artifact(cfg, artifacts::kTeacher), "build-ptp");
    const Model teacher =
        load_checkpoint(artifact(cfg, artifacts::kTeacher), teacher_config(cfg, bundle));
    const PTPDataset ptp = build_ptp_dataset(teacher, bundle.train, cfg.kd.threshold, *cfg.ptp);
    write_ptp_tsv(artifact(cfg, artifacts::kPtpData), ptp);
  });
}

void stage_ptp_pretrain(const RunConfig& cfg) {
  timed_stage(cfg, "ptp-pretrain", [&] {
    const DatasetBundle bundle = load_task(cfg, "ptp-pretrain");
    require_file(artifact(cfg, artifacts::kTeacher), "ptp-pretrain");
    const Model teacher =
        load_checkpoint(artifact(cfg, artifacts::kTeacher), teacher_config(cfg, bundle));
    Model student = init_student_from_teacher(teacher, cfg.student_layers, cfg.sps,
                                              derive_seed(cfg.seed, "student-init"),
                                              cfg.ptp_train.head_init_std);
    if (cfg.ptp) {
      require_file(artifact(cfg, artifacts::kPtpData), "ptp-pretrain");
      const PTPDataset ptp = read_ptp_tsv(artifact(cfg, artifacts::kPtpData), bundle.train,
                                          *cfg.ptp, cfg.kd.threshold);
      PTPTrainConfig pc = cfg.ptp_train;
      pc.train.seed = derive_seed(cfg.seed, "ptp-train");
      const PTPReport report = ptp_pretrain(student, ptp, pc);
      write_report_jsonl(artifact(cfg, artifacts::kPtpReport), report.train);
    }
    save_checkpoint(artifact(cfg, artifacts::kStudentInit), student);
  });
}

void stage_distill(const RunConfig& cfg) {
  timed_stage(cfg, "distill", [&] {
    const DatasetBundle bundle = load_task(cfg, "distill");
    require_file(artifact(cfg, artifacts::kTeacher), "distill");
    require_file(artifact(cfg, artifacts::kStudentInit), "distill");
    const EncoderConfig ec = teacher_config(cfg, bundle);
    const Model teacher = load_checkpoint(artifact(cfg, artifacts::kTeacher), ec);
    Model student = load_checkpoint(artifact(cfg, artifacts::kStudentInit));
    const TrainReport report = distill(student, teacher, bundle, kd_config(cfg));
    save_checkpoint(artifact(cfg, artifacts::kStudent), student);
    write_report_jsonl(artifact(cfg, artifacts::kDistillReport), report);
  });
}

void stage_eval(const RunConfig& cfg) {
  timed_stage(cfg, "eval", [&] {
    const DatasetBundle bundle = load_task(cfg, "eval");
    require_file(artifact(cfg, artifacts::kStudent), "eval");
    const Model student = load_checkpoint(artifact(cfg, artifacts::kStudent));
    const Metrics m = evaluate(student, bundle.test);
    std::ofstream out(artifact(cfg, artifacts::kSummary));
    out << summary_record(cfg, m.accuracy, m.f1) << "\n";
    if (!out) throw StageError("eval", "cannot write summary");
  });
}

void run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  stage_gen_task(cfg);
  stage_train_teacher(cfg);
  stage_build_ptp(cfg);
  stage_ptp_pretrain(cfg);
  stage_distill(cfg);
  stage_eval(cfg);
}

std::string summary_record(const RunConfig& cfg, double test_acc, std::optional<double> test_f1) {
  nlohmann::ordered_json j;
  j["task"] = cfg.task;
  j["sps_mode"] = std::string(to_string(cfg.sps));
  j["ptp_scheme"] = cfg.ptp ? std::string(to_string(*cfg.ptp)) : "None";
  j["alpha"] = cfg.kd.alpha;
  j["beta"] = cfg.kd.beta;
  j["temperature"] = cfg.kd.temperature;
  j["t"] = cfg.kd.threshold;
  j["seed"] = cfg.seed;
  j["test_acc"] = test_acc;
  j["test_f1"] = test_f1 ? nlohmann::ordered_json(*test_f1) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json echo;
  for (const auto& [k, v] : config_entries(cfg)) echo[k] = v;
  j["config"] = echo;
  return j.dump();
}

}  // namespace sharekd
