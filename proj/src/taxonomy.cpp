#include "taxonomy.hpp"

#include "error.hpp"

namespace wdistill {

std::vector<WeightGroup> group(const ModelConfig& cfg, Part part) {
  std::vector<WeightGroup> groups;
  for (WeightClass cls : all_classes()) {
    const auto& info = class_info(cls);
    if (info.decoder_only && part != Part::Decoder) continue;
    WeightGroup g{part, cls, {}, class_shape(cfg, cls)};
    if (info.per_layer) {
      for (std::size_t l = 0; l < depth_of(cfg, part); ++l) g.instances.push_back({part, static_cast<int>(l), cls});
    } else {
      g.instances.push_back({part, -1, cls});
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<WeightGroup> group(const TransformerParams& params, const ModelConfig& cfg, Part part) {
  params.check_complete(cfg);
  return group(cfg, part);
}

std::vector<SubsetPlan> split(const WeightGroup& g, std::size_t student_depth) {
  if (!g.per_layer()) return {SubsetPlan{g.part, g.cls, -1, {-1}}};
  const std::size_t teacher_depth = g.instances.size();
  if (student_depth == 0 || student_depth > teacher_depth || teacher_depth % student_depth != 0) {
    throw ConfigError(std::string(part_name(g.part)) + " depth " + std::to_string(teacher_depth) +
                      " cannot be split into " + std::to_string(student_depth) +
                      " equal groups of adjacent layers");
  }
  const std::size_t span = teacher_depth / student_depth;
  std::vector<SubsetPlan> plans;
  for (std::size_t i = 0; i < student_depth; ++i) {
    SubsetPlan p{g.part, g.cls, static_cast<int>(i), {}};
    for (std::size_t j = 0; j < span; ++j) p.source_layers.push_back(g.instances[i * span + j].layer);
    plans.push_back(std::move(p));
  }
  return plans;
}

}  // namespace wdistill
