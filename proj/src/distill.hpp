#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "data.hpp"
#include "generator.hpp"
#include "model.hpp"

namespace wdistill {

struct TrainConfig {
  double alpha = 0.5;  // weight of the ground-truth term; 1 - alpha goes to the KD term
  double base_lr = 1e-3;
  std::size_t warmup_steps = 400;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  double phase2_warmup_factor = 0.25;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::size_t max_steps = 0;  // 0: no cap beyond epochs

  void validate() const;
  nlohmann::json to_json() const;
  // Missing fields fall back to `defaults`.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& defaults);
  static TrainConfig from_json(const nlohmann::json& j);
};

// Linear warmup to base_lr over warmup steps, then decay with 1/sqrt(step).
// Steps count from 1.
double inverse_sqrt_lr(double base_lr, std::size_t warmup, std::size_t step);

class Adam {
 public:
  Adam(std::vector<Tensor> params, double beta1, double beta2, double eps);

  // Applies one update with the given learning rate to every parameter that
  // received a gradient, then clears the gradients.
  void step(double lr);
  void zero_grad();
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct LossBreakdown {
  double kd_term = 0.0;
  double gt_term = 0.0;
  double total = 0.0;

  // (1 - alpha) * kd + alpha * gt
  static LossBreakdown combine(double kd, double gt, double alpha);
};

// Cross-entropy of the student softmax against the teacher softmax (temperature
// 1), averaged over unmasked positions. Logits are [..., vocab]; the teacher
// side carries no gradient.
Tensor kd_word_loss(const Tensor& student_logits, const Tensor& teacher_logits, std::span<const std::uint8_t> mask);

struct CombinedLoss {
  Tensor total;
  LossBreakdown parts;
};

// (1 - alpha) * KD + alpha * CE(gold). teacher_probs holds one teacher
// distribution per gold position ([rows*cols, vocab]); it may be empty only
// when alpha == 1, in which case kd_term is reported as 0.
CombinedLoss combined_loss(const Tensor& student_logits, const Tensor& teacher_probs, const TokenGrid& gold,
                           double alpha);
// Convenience form taking raw teacher logits.
CombinedLoss combined_loss_from_logits(const Tensor& student_logits, const Tensor& teacher_logits,
                                       const TokenGrid& gold, double alpha);

struct CurveRow {
  std::string phase;
  std::size_t epoch = 0;
  std::size_t step = 0;
  double kd_term = 0.0;
  double gt_term = 0.0;
  double total = 0.0;
  double valid_loss = 0.0;
};
using LossCurve = std::vector<CurveRow>;

void write_curve_csv(const std::filesystem::path& path, const LossCurve& curve);

// Frozen teacher supplying the KD term. Its output distributions over the
// training pairs are computed once per run.
struct TeacherView {
  const TransformerParams* params = nullptr;
  const ModelConfig* config = nullptr;
};

// Trains every trainable leaf of `params` in place. Row 0 of the curve holds
// the loss before any update.
LossCurve train_model(TransformerParams& params, const ModelConfig& cfg, const Corpus& train, const Corpus& valid,
                      const TrainConfig& tc, const std::optional<TeacherView>& teacher, const std::string& phase,
                      std::optional<std::size_t> warmup_override = std::nullopt);

// Directly trained student weights for the keys the generator does not cover,
// taken from `init` (a full student parameter set).
TransformerParams direct_params(const Generator& gen, const TransformerParams& init);

// Generated weights merged with the directly trained ones.
TransformerParams assemble_student(const Generator& gen, const std::map<WeightKey, Tensor>& sources,
                                   const TransformerParams& direct);

// Phase 1: optimizes the generator parameters (and the direct weights) while
// the teacher stays frozen.
LossCurve train_phase1(const TransformerParams& teacher, const ModelConfig& teacher_cfg, Generator& gen,
                       TransformerParams& direct, const Corpus& train, const Corpus& valid, const TrainConfig& tc);

// Detached copy of the generated student; the starting point of Phase 2.
TransformerParams materialize_student(const Generator& gen, const TransformerParams& teacher,
                                      const TransformerParams& direct);

std::size_t phase2_warmup(const TrainConfig& tc);

// Phase 2: fine-tunes the materialized student directly, using the warmup
// scaled by phase2_warmup_factor.
LossCurve train_phase2(TransformerParams& student, const ModelConfig& student_cfg, const TransformerParams& teacher,
                       const ModelConfig& teacher_cfg, const Corpus& train, const Corpus& valid,
                       const TrainConfig& tc);

// Teacher decodes of every source become the targets (sequence-level KD data).
Corpus build_pseudo_corpus(const TransformerParams& teacher, const ModelConfig& teacher_cfg, const Corpus& sources,
                           std::size_t beam_width = 1, std::size_t batch_size = 64);

// Student layer i copies teacher layer i; every matrix keeps its leading
// rows/columns and every vector its leading entries.
TransformerParams init_baseline(const TransformerParams& teacher, const ModelConfig& teacher_cfg,
                                const ModelConfig& student_cfg);

}  // namespace wdistill
