#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "model.hpp"
#include "taxonomy.hpp"

namespace wdistill {

// Coarse weight families that can be switched between "generated from the
// teacher" and "trained directly".
enum class Selection : std::uint8_t { Encoder, Decoder, EmbedEnc, EmbedDec, Output };

class ClassSelection {
 public:
  ClassSelection() = default;
  explicit ClassSelection(std::set<Selection> groups) : groups_(std::move(groups)) {}

  static ClassSelection all();
  static ClassSelection none() { return {}; }
  // Accepts encoder, decoder, embed_enc, embed_dec, output, all, none.
  static ClassSelection parse(const std::vector<std::string>& names);

  bool covers(const WeightKey& key) const;
  bool empty() const { return groups_.empty(); }
  std::vector<std::string> names() const;
  std::string label() const;  // "+"-joined names, "none" when empty

 private:
  std::set<Selection> groups_;
};

struct GeneratorOptions {
  bool transfer_vectors = true;    // biases and layernorm parameters
  bool transfer_layernorm = true;  // only consulted when transfer_vectors is on
};

// Learnable map for one student weight. w_in ([I_t,I_s]) contracts the input
// axis, w_out ([O_t,O_s]) the output axis and w_layer ([L',1]) the stacked
// layer axis; scale and shift have the student weight's shape. When teacher
// and student weights already agree in shape (and L' == 1) only scale and
// shift exist.
struct GeneratorParams {
  std::optional<Tensor> w_in;
  std::optional<Tensor> w_out;
  std::optional<Tensor> w_layer;
  Tensor scale;
  Tensor shift;

  std::vector<std::pair<std::string, Tensor>> named() const;
};

struct GeneratorEntry {
  WeightKey student_key;
  SubsetPlan plan;
  GeneratorParams params;
};

// stacked: [I_t, O_t, L'] -> [I_s, O_s]
Tensor transform_subset(const Tensor& stacked, const GeneratorParams& gp);
// stacked: [O_t, L'] -> [O_s]
Tensor transform_vector(const Tensor& stacked, const GeneratorParams& gp);

class Generator {
 public:
  // W_I/W_O/W_L are Glorot-uniform, scale starts at ones and shift at zeros.
  static Generator build(const ModelConfig& teacher, const ModelConfig& student, const ClassSelection& selection,
                         const GeneratorOptions& options, std::uint64_t seed);

  const ModelConfig& teacher_config() const { return teacher_; }
  const ModelConfig& student_config() const { return student_; }
  const ClassSelection& selection() const { return selection_; }
  const GeneratorOptions& options() const { return options_; }
  const std::map<WeightKey, GeneratorEntry>& entries() const { return entries_; }
  bool generates(const WeightKey& key) const { return entries_.count(key) != 0; }

  std::vector<Tensor> trainable() const;
  std::size_t param_count() const;

  // Teacher subsets stacked along a trailing layer axis, one per student key.
  // The result holds constants; compute it once per teacher.
  std::map<WeightKey, Tensor> stack_sources(const TransformerParams& teacher) const;

  // Student weights for every generated key, differentiable w.r.t. the
  // generator parameters only.
  TransformerParams generate(const std::map<WeightKey, Tensor>& sources) const;
  TransformerParams generate(const TransformerParams& teacher) const { return generate(stack_sources(teacher)); }

  nlohmann::json describe() const;
  void save(const std::filesystem::path& path) const;
  static Generator load(const std::filesystem::path& path);

 private:
  ModelConfig teacher_;
  ModelConfig student_;
  ClassSelection selection_;
  GeneratorOptions options_;
  std::map<WeightKey, GeneratorEntry> entries_;
};

}  // namespace wdistill
