#pragma once

#include <vector>

#include "model.hpp"

namespace wdistill {

// All instances of one weight class within one part, ordered by layer.
// Per-part classes (embeddings, output projection, final layernorm) form
// groups with a single instance at layer -1.
struct WeightGroup {
  Part part;
  WeightClass cls;
  std::vector<WeightKey> instances;
  Shape shape;

  bool per_layer() const { return class_info(cls).per_layer; }
};

// The teacher layers feeding one student weight instance.
struct SubsetPlan {
  Part part;
  WeightClass cls;
  int student_layer;               // -1 for per-part classes
  std::vector<int> source_layers;  // contiguous, ascending; {-1} for per-part classes

  std::size_t span() const { return source_layers.size(); }
};

std::vector<WeightGroup> group(const ModelConfig& cfg, Part part);
// Same grouping, additionally checking that params is complete for cfg.
std::vector<WeightGroup> group(const TransformerParams& params, const ModelConfig& cfg, Part part);

// Splits a group of L_t per-layer instances into student_depth contiguous
// subsets of L_t / student_depth layers. Throws ConfigError when the depths do
// not divide.
std::vector<SubsetPlan> split(const WeightGroup& g, std::size_t student_depth);

}  // namespace wdistill
