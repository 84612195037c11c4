#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "data.hpp"
#include "distill.hpp"
#include "generator.hpp"
#include "model.hpp"

namespace wdistill {

struct TaskSpec {
  Task task = Task::Reverse;
  std::size_t train_size = 4000;
  std::size_t valid_size = 300;
  std::size_t test_size = 500;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  std::uint64_t data_seed = 11;
  // Only for task "file".
  std::filesystem::path train_path, valid_path, test_path;
};

struct DataSplits {
  Corpus train, valid, test;
};

DataSplits make_splits(const TaskSpec& spec, std::size_t vocab);

struct SweepSpec {
  std::string grid = "lr_warmup";  // or "depth_width"
  std::string method = "wd";
  std::vector<double> lrs{1e-3, 2e-3};
  std::vector<std::size_t> warmups{200, 400};
  std::vector<std::size_t> depths{1, 2};
  std::vector<std::size_t> widths{16, 32};
};

struct ExperimentConfig {
  ModelConfig teacher;
  ModelConfig student;
  TrainConfig teacher_train;
  TrainConfig student_train;  // baselines and Phase 2
  TrainConfig phase1;
  TaskSpec task;
  std::vector<std::string> selection{"all"};
  GeneratorOptions generator;
  bool pseudo_data = true;  // kd/wd students learn from teacher decodes
  std::size_t pseudo_beam = 1;
  std::vector<std::string> methods{"none", "kd", "wd"};
  std::vector<std::vector<std::string>> ablate_sets{{"encoder"}, {"decoder"}, {"embed_enc"},
                                                    {"embed_dec"}, {"output"},  {"all"}};
  SweepSpec sweep;
  std::size_t bench_repeats = 5;
  std::size_t bench_sentences = 200;
  std::vector<std::filesystem::path> checkpoints;  // bench/eval targets; empty means teacher plus students
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::filesystem::path out_dir = "runs";

  ExperimentConfig();
  void validate() const;
  nlohmann::json to_json() const;
  // Fields missing from j keep their defaults.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

struct ExperimentLayout {
  std::filesystem::path root;
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path curves() const { return root / "curves"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path teacher_checkpoint() const { return checkpoints() / "teacher.ckpt"; }
  void create() const;
};

// One trained student.
struct StudentRun {
  std::string method;
  std::string selection;  // generator selection label, "none" for non-generated runs
  std::uint64_t seed = 0;
  double token_accuracy = 0.0;
  double bleu = 0.0;
  double sentences_per_second = 0.0;
  double step0_train_loss = 0.0;    // first row of the student's final training phase
  double phase1_accuracy = -1.0;    // wd only
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> curves;

  nlohmann::json to_json() const;
};

double median(std::vector<double> values);

// Everything a student run needs besides its own config: data splits, the
// frozen teacher and the teacher-decoded training corpus.
struct RunContext {
  ExperimentLayout layout;
  DataSplits data;
  ModelConfig teacher_config;
  TransformerParams teacher;
  Corpus pseudo;
};

// Loads the teacher checkpoint from the layout (unless no method needs it) and
// prepares the data.
RunContext prepare_context(const ExperimentConfig& cfg, bool need_teacher);

// Trains one student with the given method (none, kd, wd, init, init+kd).
// `tag` names the artifacts.
StudentRun run_student(const ExperimentConfig& cfg, const RunContext& ctx, const std::string& method,
                       std::uint64_t seed, const std::string& tag);

// The commands return their JSON report, which is also written to reports/.
nlohmann::json cmd_train_teacher(const ExperimentConfig& cfg);
nlohmann::json cmd_distill(const ExperimentConfig& cfg);
nlohmann::json cmd_ablate(const ExperimentConfig& cfg);
nlohmann::json cmd_sweep(const ExperimentConfig& cfg);
nlohmann::json cmd_bench(const ExperimentConfig& cfg);
nlohmann::json cmd_eval(const ExperimentConfig& cfg);

const std::vector<std::string>& command_names();
nlohmann::json run_command(const std::string& name, const ExperimentConfig& cfg);

}  // namespace wdistill
