#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "wdistill/wdistill.h"

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> methods;
  std::vector<std::string> checkpoints;
  std::string log_level = "info";
  bool print_config = false;
};

nlohmann::json read_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  return nlohmann::json::parse(in);
}

void apply_overrides(const std::string& command, const Options& o, nlohmann::json& cfg) {
  if (o.seed) {
    cfg["seeds"] = {*o.seed};
    cfg["teacher_train"]["seed"] = *o.seed;
  }
  if (!o.out_dir.empty()) cfg["out_dir"] = o.out_dir;
  if (!o.methods.empty()) {
    if (command == "sweep") {
      cfg["sweep"]["method"] = o.methods.front();
    } else {
      cfg["methods"] = o.methods;
    }
  }
  if (!o.checkpoints.empty()) cfg["checkpoints"] = o.checkpoints;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight distillation experiments on toy sequence-to-sequence tasks"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--log-level", o.log_level, "off, error, warn, info or debug")->capture_default_str();

  const std::vector<std::pair<std::string, std::string>> commands{
      {"train-teacher", "Train the teacher model and save checkpoints/teacher.ckpt"},
      {"distill", "Train students with the configured methods over all seeds"},
      {"ablate", "Generate only selected weight groups, without the KD term"},
      {"sweep", "Train students over a learning-rate/warmup or depth/width grid"},
      {"bench", "Measure greedy decoding throughput"},
      {"eval", "Evaluate checkpoints on the test split"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Run with this single seed");
    sub->add_option("--out", o.out_dir, "Experiment directory");
    sub->add_flag("--print-config", o.print_config, "Print the resolved config and exit");
    if (name == "distill" || name == "sweep") {
      sub->add_option("--method", o.methods, "none, kd, wd, init or init+kd");
    }
    if (name == "bench" || name == "eval") {
      sub->add_option("--checkpoint", o.checkpoints, "Model checkpoint (default: teacher and all students)");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  nlohmann::json cfg;
  try {
    cfg = read_config(o.config_path);
    apply_overrides(command, o, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }

  if (wd_set_log_level(o.log_level.c_str()) != WD_OK) {
    std::cerr << "error: " << wd_last_error() << '\n';
    return kUsageError;
  }

  const std::string text = cfg.dump();
  char* out = nullptr;
  const wd_status status =
      o.print_config ? wd_resolve_config(text.c_str(), &out) : wd_run_command(command.c_str(), text.c_str(), &out);
  if (status != WD_OK) {
    std::cerr << "error: " << wd_last_error() << '\n';
    return status == WD_ERR_INVALID_ARGUMENT || status == WD_ERR_CONFIG ? kUsageError : kRuntimeError;
  }
  std::cout << out << '\n';
  wd_string_free(out);
  return 0;
}
