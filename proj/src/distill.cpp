#include "distill.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <functional>

#include "error.hpp"
#include "metrics.hpp"
#include "ops.hpp"

namespace wdistill {

void TrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (warmup_steps < 1) throw ConfigError("warmup_steps must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(base_lr >= 0.0)) throw ConfigError("base_lr must be non-negative");
  if (!(phase2_warmup_factor > 0.0)) throw ConfigError("phase2_warmup_factor must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"alpha", alpha},   {"base_lr", base_lr}, {"warmup_steps", warmup_steps},
          {"epochs", epochs}, {"batch_size", batch_size}, {"seed", seed},
          {"phase2_warmup_factor", phase2_warmup_factor}, {"beta1", beta1}, {"beta2", beta2},
          {"eps", eps},       {"max_steps", max_steps}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& d) {
  TrainConfig tc;
  try {
    tc.alpha = j.value("alpha", d.alpha);
    tc.base_lr = j.value("base_lr", d.base_lr);
    tc.warmup_steps = j.value("warmup_steps", d.warmup_steps);
    tc.epochs = j.value("epochs", d.epochs);
    tc.batch_size = j.value("batch_size", d.batch_size);
    tc.seed = j.value("seed", d.seed);
    tc.phase2_warmup_factor = j.value("phase2_warmup_factor", d.phase2_warmup_factor);
    tc.beta1 = j.value("beta1", d.beta1);
    tc.beta2 = j.value("beta2", d.beta2);
    tc.eps = j.value("eps", d.eps);
    tc.max_steps = j.value("max_steps", d.max_steps);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  tc.validate();
  return tc;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

double inverse_sqrt_lr(double base_lr, std::size_t warmup, std::size_t step) {
  const double s = static_cast<double>(std::max<std::size_t>(step, 1));
  const double w = static_cast<double>(std::max<std::size_t>(warmup, 1));
  return base_lr * std::min(s / w, std::sqrt(w / s));
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    if (!p.is_leaf()) throw Error("Adam can only update leaf tensors");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!std::isfinite(g[j])) throw NumericError("non-finite gradient reached the optimizer");
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

LossBreakdown LossBreakdown::combine(double kd, double gt, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  return {kd, gt, (1.0 - alpha) * kd + alpha * gt};
}

Tensor kd_word_loss(const Tensor& student_logits, const Tensor& teacher_logits, std::span<const std::uint8_t> mask) {
  if (student_logits.shape() != teacher_logits.shape()) {
    throw ShapeError("kd_word_loss: student logits " + shape_to_string(student_logits.shape()) +
                     " vs teacher logits " + shape_to_string(teacher_logits.shape()));
  }
  const std::size_t v = student_logits.shape().back();
  const std::size_t n = student_logits.size() / v;
  Tensor probs = Tensor::from_data({n, v}, ops::softmax_rows(teacher_logits.data(), v));
  return ops::softmax_cross_entropy(ops::reshape(student_logits, {n, v}), probs, mask);
}

namespace {

Tensor one_hot(const TokenGrid& gold, std::size_t vocab) {
  std::vector<double> v(gold.ids.size() * vocab, 0.0);
  for (std::size_t i = 0; i < gold.ids.size(); ++i) v[i * vocab + static_cast<std::size_t>(gold.ids[i])] = 1.0;
  return Tensor::from_data({gold.ids.size(), vocab}, std::move(v));
}

}  // namespace

CombinedLoss combined_loss(const Tensor& student_logits, const Tensor& teacher_probs, const TokenGrid& gold,
                           double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  const std::size_t v = student_logits.shape().back();
  const std::size_t n = student_logits.size() / v;
  if (n != gold.ids.size()) throw ShapeError("combined_loss: logits do not match the gold grid");
  Tensor logits = ops::reshape(student_logits, {n, v});
  Tensor gt = ops::softmax_cross_entropy(logits, one_hot(gold, v), gold.mask);
  CombinedLoss out;
  out.parts.gt_term = gt.item();
  if (!teacher_probs.defined()) {
    if (alpha != 1.0) throw ConfigError("a KD term (alpha < 1) needs teacher distributions");
    out.total = gt;
    out.parts.total = out.parts.gt_term;
    return out;
  }
  Tensor kd = ops::softmax_cross_entropy(logits, teacher_probs, gold.mask);
  out.total = ops::add(ops::scale(kd, 1.0 - alpha), ops::scale(gt, alpha));
  out.parts = LossBreakdown::combine(kd.item(), out.parts.gt_term, alpha);
  return out;
}

CombinedLoss combined_loss_from_logits(const Tensor& student_logits, const Tensor& teacher_logits,
                                       const TokenGrid& gold, double alpha) {
  if (student_logits.shape() != teacher_logits.shape()) {
    throw ShapeError("combined_loss: student logits " + shape_to_string(student_logits.shape()) +
                     " vs teacher logits " + shape_to_string(teacher_logits.shape()));
  }
  const std::size_t v = teacher_logits.shape().back();
  const std::size_t n = teacher_logits.size() / v;
  return combined_loss(student_logits, Tensor::from_data({n, v}, ops::softmax_rows(teacher_logits.data(), v)), gold,
                       alpha);
}

void write_curve_csv(const std::filesystem::path& path, const LossCurve& curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(12);
  os << "phase,epoch,step,kd_term,gt_term,total,valid_loss\n";
  for (const auto& r : curve) {
    os << r.phase << ',' << r.epoch << ',' << r.step << ',' << r.kd_term << ',' << r.gt_term << ',' << r.total << ','
       << r.valid_loss << '\n';
  }
}

namespace {

// Teacher output distributions for every kept training pair, one row per
// target position.
class TeacherCache {
 public:
  TeacherCache(const TeacherView& teacher, const std::vector<SequencePair>& pairs, std::size_t vocab) : vocab_(vocab) {
    if (teacher.config->vocab != vocab) throw ConfigError("teacher and student vocabularies differ");
    NoGradGuard no_grad;
    rows_.resize(pairs.size());
    constexpr std::size_t kChunk = 64;
    for (std::size_t start = 0; start < pairs.size(); start += kChunk) {
      const std::size_t end = std::min(pairs.size(), start + kChunk);
      std::vector<SequencePair> part(pairs.begin() + start, pairs.begin() + end);
      Batch b = Batch::from_pairs(part);
      Tensor logits = forward(*teacher.params, *teacher.config, b.src, b.tgt_in);
      const auto probs = ops::softmax_rows(logits.data(), vocab);
      for (std::size_t r = 0; r < part.size(); ++r) {
        const std::size_t len = part[r].tgt.size();
        const auto* first = probs.data() + r * b.tgt_in.cols * vocab;
        rows_[start + r].assign(first, first + len * vocab);
      }
    }
  }

  Tensor batch_probs(const Batch& b) const {
    std::vector<double> out(b.tgt_out.ids.size() * vocab_, 0.0);
    for (std::size_t r = 0; r < b.rows(); ++r) {
      const auto& src = rows_[b.pair_index[r]];
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(r * b.tgt_out.cols * vocab_));
    }
    return Tensor::from_data({b.tgt_out.ids.size(), vocab_}, std::move(out));
  }

 private:
  std::size_t vocab_;
  std::vector<std::vector<double>> rows_;
};

LossCurve run_training(const std::function<TransformerParams()>& materialize, const std::vector<Tensor>& trainable,
                       const ModelConfig& cfg, const Corpus& train, const Corpus& valid, const TrainConfig& tc,
                       const std::optional<TeacherView>& teacher, const std::string& phase, std::size_t warmup) {
  tc.validate();
  if (!teacher && tc.alpha != 1.0) throw ConfigError(phase + ": alpha < 1 requires a teacher");
  BatchStream stream(train, tc.batch_size, cfg.max_len, tc.seed);
  std::optional<TeacherCache> cache;
  if (teacher) cache.emplace(*teacher, stream.kept(), cfg.vocab);

  const auto step_loss = [&](const TransformerParams& params, const Batch& b) {
    Tensor logits = forward(params, cfg, b.src, b.tgt_in);
    return combined_loss(logits, cache ? cache->batch_probs(b) : Tensor(), b.tgt_out, tc.alpha);
  };

  const auto snapshot = [&](std::size_t epoch, std::size_t step, const LossBreakdown& train_loss) {
    NoGradGuard no_grad;
    CurveRow row{phase, epoch, step, train_loss.kd_term, train_loss.gt_term, train_loss.total, 0.0};
    row.valid_loss = corpus_loss(materialize(), cfg, valid);
    return row;
  };

  LossCurve curve;
  {
    NoGradGuard no_grad;
    const TransformerParams params = materialize();
    LossBreakdown sum;
    std::size_t tokens = 0;
    for (const auto& b : stream.in_order()) {
      const auto parts = step_loss(params, b).parts;
      std::size_t active = 0;
      for (auto m : b.tgt_out.mask) active += m;
      sum.kd_term += parts.kd_term * static_cast<double>(active);
      sum.gt_term += parts.gt_term * static_cast<double>(active);
      sum.total += parts.total * static_cast<double>(active);
      tokens += active;
    }
    const double inv = 1.0 / static_cast<double>(tokens);
    curve.push_back(snapshot(0, 0, {sum.kd_term * inv, sum.gt_term * inv, sum.total * inv}));
  }

  Adam opt(trainable, tc.beta1, tc.beta2, tc.eps);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    LossBreakdown sum;
    std::size_t batches = 0;
    for (const auto& b : stream.epoch(epoch)) {
      if (tc.max_steps && step >= tc.max_steps) break;
      try {
        const TransformerParams params = materialize();
        CombinedLoss loss = step_loss(params, b);
        loss.total.backward();
        opt.step(inverse_sqrt_lr(tc.base_lr, warmup, step + 1));
        sum.kd_term += loss.parts.kd_term;
        sum.gt_term += loss.parts.gt_term;
        sum.total += loss.parts.total;
      } catch (const NumericError& e) {
        throw NumericError(phase + " diverged at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step + 1) + ": " + e.what());
      }
      ++step;
      ++batches;
    }
    if (batches == 0) break;
    const double inv = 1.0 / static_cast<double>(batches);
    curve.push_back(snapshot(epoch, step, {sum.kd_term * inv, sum.gt_term * inv, sum.total * inv}));
    spdlog::debug("{} epoch {} step {} loss {:.5f} valid {:.5f}", phase, epoch, step, curve.back().total,
                  curve.back().valid_loss);
  }
  return curve;
}

}  // namespace

LossCurve train_model(TransformerParams& params, const ModelConfig& cfg, const Corpus& train, const Corpus& valid,
                      const TrainConfig& tc, const std::optional<TeacherView>& teacher, const std::string& phase,
                      std::optional<std::size_t> warmup_override) {
  params.check_complete(cfg);
  return run_training([&] { return params; }, params.leaves(), cfg, train, valid, tc, teacher, phase,
                      warmup_override.value_or(tc.warmup_steps));
}

TransformerParams direct_params(const Generator& gen, const TransformerParams& init) {
  TransformerParams out;
  for (const auto& [key, t] : init) {
    if (!gen.generates(key)) out.set(key, t.detach(true));
  }
  return out;
}

TransformerParams assemble_student(const Generator& gen, const std::map<WeightKey, Tensor>& sources,
                                   const TransformerParams& direct) {
  TransformerParams student = gen.generate(sources);
  for (const auto& [key, t] : direct) {
    if (student.contains(key)) throw ConfigError("weight " + key.to_string() + " is both generated and direct");
    student.set(key, t);
  }
  student.check_complete(gen.student_config());
  return student;
}

LossCurve train_phase1(const TransformerParams& teacher, const ModelConfig& teacher_cfg, Generator& gen,
                       TransformerParams& direct, const Corpus& train, const Corpus& valid, const TrainConfig& tc) {
  if (!(teacher_cfg == gen.teacher_config())) throw ConfigError("phase 1: teacher config differs from the generator's");
  const auto sources = gen.stack_sources(teacher);
  std::vector<Tensor> trainable = gen.trainable();
  for (const auto& t : direct.leaves()) trainable.push_back(t);
  std::optional<TeacherView> view;
  if (tc.alpha != 1.0) view = TeacherView{&teacher, &teacher_cfg};
  return run_training([&] { return assemble_student(gen, sources, direct); }, trainable, gen.student_config(), train,
                      valid, tc, view, "phase1", tc.warmup_steps);
}

TransformerParams materialize_student(const Generator& gen, const TransformerParams& teacher,
                                      const TransformerParams& direct) {
  NoGradGuard no_grad;
  return assemble_student(gen, gen.stack_sources(teacher), direct).clone(true);
}

std::size_t phase2_warmup(const TrainConfig& tc) {
  const double w = std::round(static_cast<double>(tc.warmup_steps) * tc.phase2_warmup_factor);
  return std::max<std::size_t>(1, static_cast<std::size_t>(w));
}

LossCurve train_phase2(TransformerParams& student, const ModelConfig& student_cfg, const TransformerParams& teacher,
                       const ModelConfig& teacher_cfg, const Corpus& train, const Corpus& valid,
                       const TrainConfig& tc) {
  std::optional<TeacherView> view;
  if (tc.alpha != 1.0) view = TeacherView{&teacher, &teacher_cfg};
  return train_model(student, student_cfg, train, valid, tc, view, "phase2", phase2_warmup(tc));
}

Corpus build_pseudo_corpus(const TransformerParams& teacher, const ModelConfig& teacher_cfg, const Corpus& sources,
                           std::size_t beam_width, std::size_t batch_size) {
  if (beam_width < 1) throw ConfigError("beam width must be at least 1");
  Corpus out{sources.task, sources.vocab, {}};
  out.pairs.reserve(sources.size());
  if (beam_width == 1) {
    for (std::size_t start = 0; start < sources.size(); start += batch_size) {
      std::vector<std::vector<int>> chunk;
      for (std::size_t i = start; i < std::min(sources.size(), start + batch_size); ++i) {
        chunk.push_back(sources.pairs[i].src);
      }
      auto hyps = greedy_decode(teacher, teacher_cfg, TokenGrid::from_sequences(chunk), teacher_cfg.max_len);
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        hyps[i].push_back(kEos);
        out.pairs.push_back({std::move(chunk[i]), std::move(hyps[i])});
      }
    }
  } else {
    for (const auto& p : sources.pairs) {
      auto h = beam_decode(teacher, teacher_cfg, p.src, beam_width, 1.0, teacher_cfg.max_len);
      h.tokens.push_back(kEos);
      out.pairs.push_back({p.src, std::move(h.tokens)});
    }
  }
  return out;
}

TransformerParams init_baseline(const TransformerParams& teacher, const ModelConfig& teacher_cfg,
                                const ModelConfig& student_cfg) {
  student_cfg.validate();
  if (student_cfg.enc_depth > teacher_cfg.enc_depth || student_cfg.dec_depth > teacher_cfg.dec_depth ||
      student_cfg.width > teacher_cfg.width || student_cfg.ffn_hidden > teacher_cfg.ffn_hidden) {
    throw ConfigError("init baseline: the student is larger than the teacher in some dimension");
  }
  if (student_cfg.vocab != teacher_cfg.vocab || student_cfg.max_len != teacher_cfg.max_len) {
    throw ConfigError("init baseline: teacher and student must share vocab and max_len");
  }
  TransformerParams out;
  for (const auto& key : enumerate_keys(student_cfg)) {
    const Tensor& t = teacher.at(key);
    const Shape s_shape = class_shape(student_cfg, key.cls);
    std::vector<double> values(shape_size(s_shape));
    auto td = t.data();
    if (s_shape.size() == 1) {
      std::copy_n(td.begin(), s_shape[0], values.begin());
    } else {
      const std::size_t t_cols = t.dim(1);
      for (std::size_t r = 0; r < s_shape[0]; ++r) {
        std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(r * t_cols), s_shape[1],
                    values.begin() + static_cast<std::ptrdiff_t>(r * s_shape[1]));
      }
    }
    out.set(key, Tensor::from_data(s_shape, std::move(values), true));
  }
  return out;
}

}  // namespace wdistill
