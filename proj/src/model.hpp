#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace wdistill {

inline constexpr int kEos = 0;
inline constexpr int kBos = 1;
inline constexpr int kPad = 2;
inline constexpr int kFirstSymbol = 3;

struct ModelConfig {
  std::size_t enc_depth = 2;
  std::size_t dec_depth = 2;
  std::size_t width = 32;
  std::size_t ffn_hidden = 128;
  std::size_t heads = 4;
  std::size_t vocab = 16;
  std::size_t max_len = 12;

  // Throws ConfigError when a dimension is zero or heads does not divide width.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class Part : std::uint8_t { Encoder, Decoder };

enum class WeightClass : std::uint8_t {
  SelfWq, SelfWk, SelfWv, SelfWo, SelfBq, SelfBk, SelfBv, SelfBo,
  CrossWq, CrossWk, CrossWv, CrossWo, CrossBq, CrossBk, CrossBv, CrossBo,
  FfnW1, FfnB1, FfnW2, FfnB2,
  LnG1, LnB1, LnG2, LnB2, LnG3, LnB3,
  Embed, PosEmbed, FinalLnG, FinalLnB, OutputProj,
};

// What a weight axis measures. Width and Ffn axes can be resized by the
// parameter generator; Vocab and Positions axes are shared between teacher and
// student and never contracted.
enum class AxisKind : std::uint8_t { Width, Ffn, Vocab, Positions };

struct ClassInfo {
  WeightClass cls;
  const char* name;
  bool per_layer;
  bool decoder_only;
  bool is_vector;
  bool is_layernorm;
  AxisKind rows;  // ignored for vectors
  AxisKind cols;
};

const ClassInfo& class_info(WeightClass cls);
const std::vector<WeightClass>& all_classes();
std::optional<WeightClass> class_from_name(const std::string& name);
std::size_t axis_length(const ModelConfig& cfg, AxisKind kind);
Shape class_shape(const ModelConfig& cfg, WeightClass cls);

const char* part_name(Part part);
Part part_from_name(const std::string& name);

struct WeightKey {
  Part part = Part::Encoder;
  int layer = -1;  // -1 for per-part weights (embeddings, output projection, final layernorm)
  WeightClass cls = WeightClass::Embed;

  auto operator<=>(const WeightKey&) const = default;
  std::string to_string() const;
  static WeightKey parse(const std::string& text);
};

// Every key implied by the config, in canonical (sorted) order.
std::vector<WeightKey> enumerate_keys(const ModelConfig& cfg);
std::size_t depth_of(const ModelConfig& cfg, Part part);

// Closed-form parameter count; tests compare it with the enumerated key set.
std::size_t param_count(const ModelConfig& cfg);

class TransformerParams {
 public:
  using Map = std::map<WeightKey, Tensor>;

  const Tensor& at(const WeightKey& key) const;
  Tensor& at(const WeightKey& key);
  bool contains(const WeightKey& key) const { return tensors_.count(key) != 0; }
  void set(const WeightKey& key, Tensor t) { tensors_[key] = std::move(t); }
  std::size_t size() const { return tensors_.size(); }
  std::size_t total_elements() const;

  const Map& tensors() const { return tensors_; }
  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }

  // Trainable leaves in key order.
  std::vector<Tensor> leaves() const;

  // Throws ConfigError unless the key set and every shape match cfg.
  void check_complete(const ModelConfig& cfg) const;

  // Deep copy; every tensor becomes a fresh leaf.
  TransformerParams clone(bool requires_grad) const;

 private:
  Map tensors_;
};

// Glorot-uniform matrices, zero biases, unit layernorm gains.
TransformerParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Row-major id grid plus a 0/1 mask marking real (non-padding) positions.
struct TokenGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;

  static TokenGrid from_sequences(const std::vector<std::vector<int>>& seqs);
  int id(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
};

// Teacher-forced decoder logits, shape [rows, tgt_cols, vocab].
Tensor forward(const TransformerParams& params, const ModelConfig& cfg, const TokenGrid& src,
               const TokenGrid& tgt_in);

// Argmax decoding; returned sequences exclude the terminating EOS. Ties go to
// the lower token id.
std::vector<std::vector<int>> greedy_decode(const TransformerParams& params, const ModelConfig& cfg,
                                            const TokenGrid& src, std::size_t max_steps);

struct Hypothesis {
  std::vector<int> tokens;  // excludes EOS
  bool finished = false;    // ended with EOS
  double log_prob = 0.0;
  double score = 0.0;       // log_prob / length^alpha, length counts the EOS
};

double length_normalized(double log_prob, std::size_t length, double alpha);

Hypothesis beam_decode(const TransformerParams& params, const ModelConfig& cfg, const std::vector<int>& src,
                       std::size_t width, double lennorm_alpha, std::size_t max_steps);

// Teacher-forced log-probability of an output sequence (plus EOS when finished).
double sequence_log_prob(const TransformerParams& params, const ModelConfig& cfg, const std::vector<int>& src,
                         const std::vector<int>& tokens, bool finished);

}  // namespace wdistill
