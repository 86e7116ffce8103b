// sharekd command-line front end.
//
//   sharekd <stage> --config run.cfg [--seed N] [--out DIR]
//   sharekd run     --config run.cfg [--seed N] [--out DIR]
//   sharekd report  DIR... [--json]
//
// Exit codes: 0 success, 2 config error, 3 stage failure.

#include <CLI11.hpp>
#include <iostream>

#include "sharekd/pipeline.hpp"
#include "sharekd/report.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct RunArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_run_flags(CLI::App* cmd, RunArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration (key = value lines)")->required();
  cmd->add_option("--seed", args.seed, "overrides the config seed");
  cmd->add_option("--out", args.out, "overrides the config output directory");
}

sharekd::RunConfig resolve(const RunArgs& args) {
  sharekd::RunConfig cfg = sharekd::load_run_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  if (args.out) cfg.out_dir = *args.out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sharekd: distill encoder classifiers into parameter-shared students"};
  app.require_subcommand(1);

  using StageFn = void (*)(const sharekd::RunConfig&);
  const std::vector<std::tuple<std::string, std::string, StageFn>> stages = {
      {"gen-task", "generate or import the task data", sharekd::stage_gen_task},
      {"train-teacher", "finetune the teacher", sharekd::stage_train_teacher},
      {"build-ptp", "label the training set with teacher-prediction classes",
       sharekd::stage_build_ptp},
      {"ptp-pretrain", "initialise the student and pretrain it on teacher-prediction labels",
       sharekd::stage_ptp_pretrain},
      {"distill", "distill the teacher into the student", sharekd::stage_distill},
      {"eval", "evaluate the student and write the summary record", sharekd::stage_eval},
      {"run", "run every stage in order", sharekd::run_pipeline},
  };

  RunArgs run_args;
  StageFn selected = nullptr;
  for (const auto& [name, help, fn] : stages) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_run_flags(cmd, run_args);
    cmd->callback([&selected, f = fn] { selected = f; });
  }

  std::vector<std::string> report_dirs;
  bool report_json = false;
  CLI::App* report_cmd = app.add_subcommand("report", "aggregate summary records into an ablation table");
  report_cmd->add_option("dirs", report_dirs, "run directories")->required();
  report_cmd->add_flag("--json", report_json, "emit JSON instead of a markdown table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (report_cmd->parsed()) {
    try {
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      const auto table = sharekd::report(dirs);
      std::cout << (report_json ? sharekd::render_json(table) : sharekd::render_markdown(table));
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "report: " << e.what() << "\n";
      return kExitStage;
    }
  }

  sharekd::RunConfig cfg;
  try {
    cfg = resolve(run_args);
  } catch (const sharekd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    selected(cfg);
  } catch (const sharekd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "stage failed: " << e.what() << "\n";
    return kExitStage;
  }
  return 0;
}
