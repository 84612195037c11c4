#include "experiment.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "checkpoint.hpp"
#include "error.hpp"
#include "metrics.hpp"

namespace wdistill {

using nlohmann::json;

namespace {

const std::vector<std::string> kMethods{"none", "kd", "wd", "init", "init+kd"};

template <typename T>
T get(const json& j, const char* key, const T& fallback) {
  try {
    return j.value(key, fallback);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

const json& object_at(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError(std::string("config field '") + key + "' must be an object");
  return j.at(key);
}

// Width given without ffn_hidden keeps the 4x ratio instead of inheriting the
// default hidden size.
ModelConfig model_from(const json& j, const ModelConfig& defaults) {
  json merged = model_config_to_json(defaults);
  if (j.contains("width") && !j.contains("ffn_hidden")) merged.erase("ffn_hidden");
  merged.merge_patch(j);
  ModelConfig cfg = model_config_from_json(merged);
  cfg.validate();
  return cfg;
}

json task_to_json(const TaskSpec& t) {
  return {{"name", task_name(t.task)},
          {"train_size", t.train_size},
          {"valid_size", t.valid_size},
          {"test_size", t.test_size},
          {"min_len", t.min_len},
          {"max_len", t.max_len},
          {"data_seed", t.data_seed},
          {"train_path", t.train_path.string()},
          {"valid_path", t.valid_path.string()},
          {"test_path", t.test_path.string()}};
}

TaskSpec task_from(const json& j, const TaskSpec& d) {
  TaskSpec t = d;
  t.task = task_from_name(get<std::string>(j, "name", task_name(d.task)));
  t.train_size = get(j, "train_size", d.train_size);
  t.valid_size = get(j, "valid_size", d.valid_size);
  t.test_size = get(j, "test_size", d.test_size);
  t.min_len = get(j, "min_len", d.min_len);
  t.max_len = get(j, "max_len", d.max_len);
  t.data_seed = get(j, "data_seed", d.data_seed);
  t.train_path = get<std::string>(j, "train_path", d.train_path.string());
  t.valid_path = get<std::string>(j, "valid_path", d.valid_path.string());
  t.test_path = get<std::string>(j, "test_path", d.test_path.string());
  return t;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

std::string num(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

std::string path_safe(std::string s) {
  for (auto& c : s)
    if (c == '+') c = '-';
  return s;
}

ModelConfig resized(ModelConfig cfg, std::size_t dec_depth, std::size_t width) {
  cfg.dec_depth = dec_depth;
  cfg.width = width;
  cfg.ffn_hidden = 4 * width;
  while (cfg.heads > 1 && width % cfg.heads != 0) --cfg.heads;
  return cfg;
}

std::vector<std::vector<int>> bench_sample(const ExperimentConfig& cfg, const DataSplits& data) {
  auto sources = data.test.sources();
  if (sources.size() > cfg.bench_sentences) sources.resize(cfg.bench_sentences);
  return sources;
}

std::vector<std::filesystem::path> model_targets(const ExperimentConfig& cfg, const ExperimentLayout& layout) {
  if (!cfg.checkpoints.empty()) return cfg.checkpoints;
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::exists(layout.teacher_checkpoint())) {
    throw IoError("no checkpoints given and " + layout.teacher_checkpoint().string() + " does not exist");
  }
  out.push_back(layout.teacher_checkpoint());
  std::vector<std::filesystem::path> students;
  for (const auto& entry : std::filesystem::directory_iterator(layout.checkpoints())) {
    const auto& p = entry.path();
    if (p.extension() != ".ckpt" || p == layout.teacher_checkpoint() || p.stem().extension() == ".gen") continue;
    students.push_back(p);
  }
  std::sort(students.begin(), students.end());
  out.insert(out.end(), students.begin(), students.end());
  return out;
}

}  // namespace

DataSplits make_splits(const TaskSpec& spec, std::size_t vocab) {
  DataSplits d;
  if (spec.task == Task::File) {
    if (spec.train_path.empty() || spec.valid_path.empty() || spec.test_path.empty()) {
      throw ConfigError("task 'file' needs train_path, valid_path and test_path");
    }
    d.train = load_tsv(spec.train_path, vocab);
    d.valid = load_tsv(spec.valid_path, vocab);
    d.test = load_tsv(spec.test_path, vocab);
  } else {
    d.train = gen_synthetic(spec.task, spec.train_size, spec.min_len, spec.max_len, vocab, spec.data_seed);
    d.valid = gen_synthetic(spec.task, spec.valid_size, spec.min_len, spec.max_len, vocab, spec.data_seed + 1);
    d.test = gen_synthetic(spec.task, spec.test_size, spec.min_len, spec.max_len, vocab, spec.data_seed + 2);
  }
  if (d.train.empty() || d.valid.empty() || d.test.empty()) throw ConfigError("every data split must be non-empty");
  return d;
}

ExperimentConfig::ExperimentConfig() {
  teacher.enc_depth = 2;
  teacher.dec_depth = 2;
  teacher.width = 32;
  teacher.ffn_hidden = 128;
  teacher.heads = 4;
  teacher.vocab = 16;
  teacher.max_len = 12;
  student = teacher;
  student.dec_depth = 1;
  student.width = 16;
  student.ffn_hidden = 64;

  teacher_train.alpha = 1.0;
  teacher_train.base_lr = 2e-3;
  teacher_train.warmup_steps = 400;
  teacher_train.epochs = 10;
  teacher_train.batch_size = 32;
  student_train = teacher_train;
  student_train.alpha = 0.5;
  phase1 = student_train;
  phase1.epochs = 3;
}

void ExperimentConfig::validate() const {
  teacher.validate();
  student.validate();
  teacher_train.validate();
  student_train.validate();
  phase1.validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (methods.empty()) throw ConfigError("methods must not be empty");
  for (const auto& m : methods) {
    if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end()) {
      throw ConfigError("unknown method '" + m + "' (expected none, kd, wd, init or init+kd)");
    }
  }
  ClassSelection::parse(selection);
  for (const auto& s : ablate_sets) ClassSelection::parse(s);
  if (teacher.vocab != student.vocab) throw ConfigError("teacher and student must share the vocabulary");
  if (teacher.max_len != student.max_len) throw ConfigError("teacher and student must share max_len");
  if (task.task != Task::File && task.max_len + 1 > teacher.max_len) {
    throw ConfigError("task max_len plus EOS exceeds the model's max_len");
  }
  if (bench_repeats < 1 || bench_sentences < 1) throw ConfigError("bench needs at least one repeat and sentence");
  if (pseudo_beam < 1) throw ConfigError("pseudo_beam must be at least 1");
  if (sweep.grid != "lr_warmup" && sweep.grid != "depth_width") {
    throw ConfigError("sweep.grid must be lr_warmup or depth_width");
  }
  if (std::find(kMethods.begin(), kMethods.end(), sweep.method) == kMethods.end()) {
    throw ConfigError("unknown sweep method '" + sweep.method + "'");
  }
  const bool lr_grid = sweep.grid == "lr_warmup";
  if ((lr_grid && (sweep.lrs.empty() || sweep.warmups.empty())) ||
      (!lr_grid && (sweep.depths.empty() || sweep.widths.empty()))) {
    throw ConfigError("sweep grid must not be empty");
  }
}

json ExperimentConfig::to_json() const {
  json ckpts = json::array();
  for (const auto& c : checkpoints) ckpts.push_back(c.string());
  return {{"teacher", model_config_to_json(teacher)},
          {"student", model_config_to_json(student)},
          {"teacher_train", teacher_train.to_json()},
          {"student_train", student_train.to_json()},
          {"phase1", phase1.to_json()},
          {"task", task_to_json(task)},
          {"selection", selection},
          {"generator",
           {{"transfer_vectors", generator.transfer_vectors}, {"transfer_layernorm", generator.transfer_layernorm}}},
          {"pseudo_data", pseudo_data},
          {"pseudo_beam", pseudo_beam},
          {"methods", methods},
          {"ablate_sets", ablate_sets},
          {"sweep",
           {{"grid", sweep.grid},
            {"method", sweep.method},
            {"lrs", sweep.lrs},
            {"warmups", sweep.warmups},
            {"depths", sweep.depths},
            {"widths", sweep.widths}}},
          {"bench", {{"repeats", bench_repeats}, {"sentences", bench_sentences}}},
          {"checkpoints", ckpts},
          {"seeds", seeds},
          {"out_dir", out_dir.string()}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  const json known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config field '" + key + "'");
    if (!known[key].is_object() || !value.is_object()) continue;
    for (const auto& [sub, unused] : value.items()) {
      if (!known[key].contains(sub)) throw ConfigError("unknown config field '" + key + "." + sub + "'");
    }
  }
  c.teacher = model_from(object_at(j, "teacher"), c.teacher);
  c.student = model_from(object_at(j, "student"), c.student);
  c.teacher_train = TrainConfig::from_json(object_at(j, "teacher_train"), c.teacher_train);
  c.student_train = TrainConfig::from_json(object_at(j, "student_train"), c.student_train);
  c.phase1 = TrainConfig::from_json(object_at(j, "phase1"), c.phase1);
  c.task = task_from(object_at(j, "task"), c.task);
  c.selection = get(j, "selection", c.selection);
  const json& g = object_at(j, "generator");
  c.generator.transfer_vectors = get(g, "transfer_vectors", c.generator.transfer_vectors);
  c.generator.transfer_layernorm = get(g, "transfer_layernorm", c.generator.transfer_layernorm);
  c.pseudo_data = get(j, "pseudo_data", c.pseudo_data);
  c.pseudo_beam = get(j, "pseudo_beam", c.pseudo_beam);
  c.methods = get(j, "methods", c.methods);
  c.ablate_sets = get(j, "ablate_sets", c.ablate_sets);
  const json& s = object_at(j, "sweep");
  c.sweep.grid = get(s, "grid", c.sweep.grid);
  c.sweep.method = get(s, "method", c.sweep.method);
  c.sweep.lrs = get(s, "lrs", c.sweep.lrs);
  c.sweep.warmups = get(s, "warmups", c.sweep.warmups);
  c.sweep.depths = get(s, "depths", c.sweep.depths);
  c.sweep.widths = get(s, "widths", c.sweep.widths);
  const json& b = object_at(j, "bench");
  c.bench_repeats = get(b, "repeats", c.bench_repeats);
  c.bench_sentences = get(b, "sentences", c.bench_sentences);
  for (const auto& p : get(j, "checkpoints", std::vector<std::string>{})) c.checkpoints.emplace_back(p);
  c.seeds = get(j, "seeds", c.seeds);
  c.out_dir = get<std::string>(j, "out_dir", c.out_dir.string());
  c.validate();
  return c;
}

void ExperimentLayout::create() const {
  for (const auto& d : {checkpoints(), curves(), reports()}) std::filesystem::create_directories(d);
}

json StudentRun::to_json() const {
  json curve_paths = json::array();
  for (const auto& c : curves) curve_paths.push_back(c.string());
  json j = {{"method", method},
            {"selection", selection},
            {"seed", seed},
            {"token_accuracy", token_accuracy},
            {"bleu", bleu},
            {"sentences_per_second", sentences_per_second},
            {"step0_train_loss", step0_train_loss},
            {"checkpoint", checkpoint.string()},
            {"curves", curve_paths}};
  if (phase1_accuracy >= 0.0) j["phase1_token_accuracy"] = phase1_accuracy;
  return j;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

RunContext prepare_context(const ExperimentConfig& cfg, bool need_teacher) {
  RunContext ctx;
  ctx.layout = {cfg.out_dir};
  ctx.layout.create();
  ctx.teacher_config = cfg.teacher;
  if (need_teacher) {
    const auto path = ctx.layout.teacher_checkpoint();
    if (!std::filesystem::exists(path)) {
      throw IoError("teacher checkpoint " + path.string() + " not found; run train-teacher first");
    }
    auto saved = load_model(path);
    if (!(saved.config == cfg.teacher)) {
      spdlog::warn("teacher checkpoint config differs from the experiment config; using the checkpoint's");
    }
    ctx.teacher_config = saved.config;
    // Constants: the teacher never receives gradients.
    ctx.teacher = saved.params.clone(false);
  }
  ctx.data = make_splits(cfg.task, cfg.student.vocab);
  if (need_teacher && cfg.pseudo_data) {
    spdlog::info("decoding {} training sources with the teacher", ctx.data.train.size());
    ctx.pseudo = build_pseudo_corpus(ctx.teacher, ctx.teacher_config, ctx.data.train, cfg.pseudo_beam);
  }
  return ctx;
}

StudentRun run_student(const ExperimentConfig& cfg, const RunContext& ctx, const std::string& method,
                       std::uint64_t seed, const std::string& tag) {
  if (std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end()) {
    throw ConfigError("unknown method '" + method + "'");
  }
  const bool uses_teacher = method != "none";
  if (uses_teacher && ctx.teacher.size() == 0) throw ConfigError("method " + method + " needs a teacher");
  const bool distills = method == "kd" || method == "wd" || method == "init+kd";
  const Corpus& train = distills && cfg.pseudo_data ? ctx.pseudo : ctx.data.train;
  const ModelConfig& scfg = cfg.student;

  TrainConfig tc = cfg.student_train;
  tc.seed = seed;
  if (!distills) tc.alpha = 1.0;
  std::optional<TeacherView> view;
  if (tc.alpha != 1.0) view = TeacherView{&ctx.teacher, &ctx.teacher_config};

  StudentRun run;
  run.method = method;
  run.selection = "none";
  run.seed = seed;
  run.checkpoint = ctx.layout.checkpoints() / (tag + ".ckpt");
  spdlog::info("training student {} (seed {})", tag, seed);

  TransformerParams student;
  if (method == "wd") {
    Generator gen = Generator::build(ctx.teacher_config, scfg, ClassSelection::parse(cfg.selection), cfg.generator,
                                     mix(seed, 1));
    run.selection = gen.selection().label();
    auto direct = direct_params(gen, init_params(scfg, mix(seed, 0)));
    TrainConfig p1 = cfg.phase1;
    p1.seed = seed;
    if (!distills) p1.alpha = 1.0;
    const auto c1 = train_phase1(ctx.teacher, ctx.teacher_config, gen, direct, train, ctx.data.valid, p1);
    gen.save(ctx.layout.checkpoints() / (tag + ".gen.ckpt"));
    run.curves.push_back(ctx.layout.curves() / (tag + "_phase1.csv"));
    write_curve_csv(run.curves.back(), c1);
    student = materialize_student(gen, ctx.teacher, direct);
    run.phase1_accuracy = evaluate(student, scfg, ctx.data.test).token_accuracy;
    const auto c2 = train_phase2(student, scfg, ctx.teacher, ctx.teacher_config, train, ctx.data.valid, tc);
    run.curves.push_back(ctx.layout.curves() / (tag + "_phase2.csv"));
    write_curve_csv(run.curves.back(), c2);
    run.step0_train_loss = c2.front().total;
  } else {
    student = method.rfind("init", 0) == 0 ? init_baseline(ctx.teacher, ctx.teacher_config, scfg)
                                           : init_params(scfg, mix(seed, 0));
    const auto curve = train_model(student, scfg, train, ctx.data.valid, tc, view, method);
    run.curves.push_back(ctx.layout.curves() / (tag + ".csv"));
    write_curve_csv(run.curves.back(), curve);
    run.step0_train_loss = curve.front().total;
  }

  const auto report = evaluate(student, scfg, ctx.data.test);
  run.token_accuracy = report.token_accuracy;
  run.bleu = report.bleu;
  run.sentences_per_second = report.sentences_per_second;
  save_model(run.checkpoint, scfg, student,
             {{"method", method}, {"seed", seed}, {"selection", run.selection}, {"train", tc.to_json()}});
  spdlog::info("{}: token accuracy {:.4f}, BLEU {:.2f}", tag, run.token_accuracy, run.bleu);
  return run;
}

json cmd_train_teacher(const ExperimentConfig& cfg) {
  cfg.validate();
  const ExperimentLayout layout{cfg.out_dir};
  layout.create();
  const DataSplits data = make_splits(cfg.task, cfg.teacher.vocab);
  TrainConfig tc = cfg.teacher_train;
  tc.alpha = 1.0;
  ExperimentConfig resolved = cfg;
  resolved.teacher_train = tc;

  spdlog::info("training teacher on {} pairs", data.train.size());
  auto params = init_params(cfg.teacher, mix(tc.seed, 0));
  const auto curve = train_model(params, cfg.teacher, data.train, data.valid, tc, std::nullopt, "teacher");
  write_curve_csv(layout.curves() / "teacher.csv", curve);
  save_model(layout.teacher_checkpoint(), cfg.teacher, params, {{"method", "teacher"}, {"train", tc.to_json()}});
  EvalReport report = evaluate(params, cfg.teacher, data.test);
  json out = {{"command", "train-teacher"},
              {"config", resolved.to_json()},
              {"checkpoint", layout.teacher_checkpoint().string()},
              {"digest", file_digest(layout.teacher_checkpoint())},
              {"curve", (layout.curves() / "teacher.csv").string()},
              {"eval", report.to_json()}};
  write_json(layout.reports() / "teacher.json", out);
  spdlog::info("teacher: token accuracy {:.4f}, BLEU {:.2f}", report.token_accuracy, report.bleu);
  return out;
}

json cmd_distill(const ExperimentConfig& cfg) {
  cfg.validate();
  const bool need_teacher = std::any_of(cfg.methods.begin(), cfg.methods.end(), [](auto& m) { return m != "none"; });
  const RunContext ctx = prepare_context(cfg, need_teacher);

  json out = {{"command", "distill"}, {"config", cfg.to_json()}};
  if (need_teacher) {
    out["teacher"] = evaluate(ctx.teacher, ctx.teacher_config, ctx.data.test).to_json();
    if (cfg.pseudo_data) {
      std::size_t agree = 0;
      for (std::size_t i = 0; i < ctx.pseudo.size(); ++i) agree += ctx.pseudo.pairs[i] == ctx.data.train.pairs[i];
      out["pseudo_agreement"] = static_cast<double>(agree) / static_cast<double>(ctx.pseudo.size());
    }
  }
  json runs = json::array(), summary = json::object();
  std::vector<std::vector<std::string>> rows;
  for (const auto& method : cfg.methods) {
    std::vector<double> acc, bleu, step0;
    for (auto seed : cfg.seeds) {
      const auto run = run_student(cfg, ctx, method, seed, path_safe(method) + "_s" + std::to_string(seed));
      acc.push_back(run.token_accuracy);
      bleu.push_back(run.bleu);
      step0.push_back(run.step0_train_loss);
      runs.push_back(run.to_json());
      rows.push_back({method, std::to_string(seed), run.selection, num(run.token_accuracy), num(run.bleu),
                      num(run.sentences_per_second), num(run.step0_train_loss)});
    }
    summary[method] = {{"median_token_accuracy", median(acc)},
                       {"median_bleu", median(bleu)},
                       {"median_step0_train_loss", median(step0)},
                       {"seeds", cfg.seeds.size()}};
  }
  out["runs"] = runs;
  out["summary"] = summary;
  write_csv(ctx.layout.reports() / "distill.csv",
            {"method", "seed", "selection", "token_accuracy", "bleu", "sentences_per_second", "step0_train_loss"},
            rows);
  write_json(ctx.layout.reports() / "distill.json", out);
  return out;
}

json cmd_ablate(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentConfig resolved = cfg;
  resolved.phase1.alpha = 1.0;
  resolved.student_train.alpha = 1.0;
  resolved.pseudo_data = false;
  const RunContext ctx = prepare_context(resolved, true);

  json out = {{"command", "ablate"}, {"config", resolved.to_json()}};
  json runs = json::array(), summary = json::object();
  std::vector<std::vector<std::string>> rows;
  auto record = [&](const std::string& label, const std::vector<StudentRun>& set) {
    std::vector<double> acc, bleu;
    for (const auto& r : set) {
      acc.push_back(r.token_accuracy);
      bleu.push_back(r.bleu);
      runs.push_back(r.to_json());
      rows.push_back({label, std::to_string(r.seed), num(r.token_accuracy), num(r.bleu)});
    }
    summary[label] = {{"median_token_accuracy", median(acc)}, {"median_bleu", median(bleu)}};
  };

  std::vector<StudentRun> baseline;
  for (auto seed : cfg.seeds) baseline.push_back(run_student(resolved, ctx, "none", seed, "ablate_none_s" + std::to_string(seed)));
  record("none", baseline);
  for (const auto& set : cfg.ablate_sets) {
    ExperimentConfig cell = resolved;
    cell.selection = set;
    const std::string label = ClassSelection::parse(set).label();
    std::vector<StudentRun> results;
    for (auto seed : cfg.seeds) {
      results.push_back(run_student(cell, ctx, "wd", seed, "ablate_" + path_safe(label) + "_s" + std::to_string(seed)));
    }
    record(label, results);
  }
  out["runs"] = runs;
  out["summary"] = summary;
  write_csv(ctx.layout.reports() / "ablate.csv", {"selection", "seed", "token_accuracy", "bleu"}, rows);
  write_json(ctx.layout.reports() / "ablate.json", out);
  return out;
}

json cmd_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const RunContext ctx = prepare_context(cfg, cfg.sweep.method != "none");
  const auto sample = bench_sample(cfg, ctx.data);

  double teacher_speed = 0.0;
  std::vector<std::vector<std::string>> rows;
  json cells = json::array();
  if (ctx.teacher.size() != 0) {
    teacher_speed = bench_decode(ctx.teacher, ctx.teacher_config, sample, cfg.bench_repeats).median;
    const auto tr = evaluate(ctx.teacher, ctx.teacher_config, ctx.data.test);
    rows.push_back({"teacher", "", "", "", num(tr.token_accuracy), num(tr.bleu), num(teacher_speed), "1"});
  }

  struct Cell {
    std::string a, b;
    ExperimentConfig cfg;
  };
  std::vector<Cell> grid;
  if (cfg.sweep.grid == "lr_warmup") {
    for (double lr : cfg.sweep.lrs) {
      for (std::size_t w : cfg.sweep.warmups) {
        ExperimentConfig c = cfg;
        c.student_train.base_lr = c.phase1.base_lr = lr;
        c.student_train.warmup_steps = c.phase1.warmup_steps = w;
        c.validate();
        grid.push_back({num(lr), std::to_string(w), c});
      }
    }
  } else {
    for (std::size_t d : cfg.sweep.depths) {
      for (std::size_t w : cfg.sweep.widths) {
        ExperimentConfig c = cfg;
        c.student = resized(cfg.student, d, w);
        c.validate();
        grid.push_back({std::to_string(d), std::to_string(w), c});
      }
    }
  }

  for (const auto& cell : grid) {
    for (auto seed : cfg.seeds) {
      const std::string tag = "sweep_" + cell.a + "_" + cell.b + "_s" + std::to_string(seed);
      const auto run = run_student(cell.cfg, ctx, cfg.sweep.method, seed, tag);
      const auto student = load_model(run.checkpoint);
      const double speed = bench_decode(student.params, student.config, sample, cfg.bench_repeats).median;
      const double speedup = teacher_speed > 0.0 ? speed / teacher_speed : 0.0;
      rows.push_back({"cell", cell.a, cell.b, std::to_string(seed), num(run.token_accuracy), num(run.bleu), num(speed),
                      teacher_speed > 0.0 ? num(speedup) : ""});
      json j = run.to_json();
      j["grid"] = {cell.a, cell.b};
      j["bench_sentences_per_second"] = speed;
      if (teacher_speed > 0.0) j["speedup"] = speedup;
      cells.push_back(j);
    }
  }
  const bool lr_grid = cfg.sweep.grid == "lr_warmup";
  write_csv(ctx.layout.reports() / "sweep.csv",
            {"role", lr_grid ? "lr" : "dec_depth", lr_grid ? "warmup" : "width", "seed", "token_accuracy", "bleu",
             "sentences_per_second", "speedup"},
            rows);
  json out = {{"command", "sweep"}, {"config", cfg.to_json()}, {"teacher_sentences_per_second", teacher_speed},
              {"cells", cells}};
  write_json(ctx.layout.reports() / "sweep.json", out);
  return out;
}

json cmd_bench(const ExperimentConfig& cfg) {
  cfg.validate();
  const ExperimentLayout layout{cfg.out_dir};
  layout.create();
  const auto sample = bench_sample(cfg, make_splits(cfg.task, cfg.student.vocab));
  json models = json::array();
  double reference = 0.0;
  for (const auto& path : model_targets(cfg, layout)) {
    const auto saved = load_model(path);
    const auto r = bench_decode(saved.params, saved.config, sample, cfg.bench_repeats);
    if (reference == 0.0) reference = r.median;
    models.push_back({{"checkpoint", path.string()},
                      {"model", model_config_to_json(saved.config)},
                      {"sentences", r.sentences},
                      {"per_run", r.per_run},
                      {"median_sentences_per_second", r.median},
                      {"speedup", r.median / reference}});
    spdlog::info("{}: {:.1f} sentences/s", path.string(), r.median);
  }
  json out = {{"command", "bench"}, {"config", cfg.to_json()}, {"models", models}};
  write_json(layout.reports() / "bench.json", out);
  return out;
}

json cmd_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  const ExperimentLayout layout{cfg.out_dir};
  layout.create();
  const auto data = make_splits(cfg.task, cfg.student.vocab);
  json models = json::array();
  for (const auto& path : model_targets(cfg, layout)) {
    const auto saved = load_model(path);
    json j = evaluate(saved.params, saved.config, data.test).to_json();
    j["checkpoint"] = path.string();
    j["digest"] = file_digest(path);
    models.push_back(j);
  }
  json out = {{"command", "eval"}, {"config", cfg.to_json()}, {"models", models}};
  write_json(layout.reports() / "eval.json", out);
  return out;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"train-teacher", "distill", "ablate", "sweep", "bench", "eval"};
  return names;
}

json run_command(const std::string& name, const ExperimentConfig& cfg) {
  if (name == "train-teacher") return cmd_train_teacher(cfg);
  if (name == "distill") return cmd_distill(cfg);
  if (name == "ablate") return cmd_ablate(cfg);
  if (name == "sweep") return cmd_sweep(cfg);
  if (name == "bench") return cmd_bench(cfg);
  if (name == "eval") return cmd_eval(cfg);
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace wdistill
