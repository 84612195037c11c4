#include "generator.hpp"

#include <cmath>
#include <random>

#include "checkpoint.hpp"
#include "error.hpp"
#include "ops.hpp"

namespace wdistill {

namespace {

const std::vector<std::pair<Selection, const char*>> kSelectionNames = {
    {Selection::Encoder, "encoder"}, {Selection::Decoder, "decoder"}, {Selection::EmbedEnc, "embed_enc"},
    {Selection::EmbedDec, "embed_dec"}, {Selection::Output, "output"},
};

bool contractible(AxisKind kind) { return kind == AxisKind::Width || kind == AxisKind::Ffn; }

Tensor glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = dist(rng);
  return Tensor::from_data({rows, cols}, std::move(v), true);
}

}  // namespace

ClassSelection ClassSelection::all() {
  std::set<Selection> s;
  for (const auto& [sel, name] : kSelectionNames) s.insert(sel);
  return ClassSelection(std::move(s));
}

ClassSelection ClassSelection::parse(const std::vector<std::string>& names) {
  std::set<Selection> s;
  for (const auto& n : names) {
    if (n == "all") return all();
    if (n == "none") continue;
    bool found = false;
    for (const auto& [sel, name] : kSelectionNames) {
      if (n == name) {
        s.insert(sel);
        found = true;
      }
    }
    if (!found) throw ConfigError("unknown weight selection '" + n + "'");
  }
  return ClassSelection(std::move(s));
}

bool ClassSelection::covers(const WeightKey& key) const {
  Selection sel;
  switch (key.cls) {
    case WeightClass::Embed:
    case WeightClass::PosEmbed:
      sel = key.part == Part::Encoder ? Selection::EmbedEnc : Selection::EmbedDec;
      break;
    case WeightClass::OutputProj:
      sel = Selection::Output;
      break;
    default:
      sel = key.part == Part::Encoder ? Selection::Encoder : Selection::Decoder;
      break;
  }
  return groups_.count(sel) != 0;
}

std::vector<std::string> ClassSelection::names() const {
  std::vector<std::string> out;
  for (const auto& [sel, name] : kSelectionNames) {
    if (groups_.count(sel)) out.emplace_back(name);
  }
  return out;
}

std::string ClassSelection::label() const {
  if (groups_.size() == kSelectionNames.size()) return "all";
  std::string s;
  for (const auto& n : names()) s += (s.empty() ? "" : "+") + n;
  return s.empty() ? "none" : s;
}

std::vector<std::pair<std::string, Tensor>> GeneratorParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (w_in) out.emplace_back("W_I", *w_in);
  if (w_out) out.emplace_back("W_O", *w_out);
  if (w_layer) out.emplace_back("W_L", *w_layer);
  out.emplace_back("W", scale);
  out.emplace_back("B", shift);
  return out;
}

Tensor transform_subset(const Tensor& stacked, const GeneratorParams& gp) {
  if (stacked.rank() != 3) throw ShapeError("transform_subset expects a stacked [I,O,L] tensor");
  Tensor x = stacked;
  if (gp.w_in) x = ops::mode_product(x, *gp.w_in, 0);
  if (gp.w_out) x = ops::mode_product(x, *gp.w_out, 1);
  if (gp.w_layer) x = ops::mode_product(x, *gp.w_layer, 2);
  if (x.dim(2) != 1 || gp.scale.shape() != Shape{x.dim(0), x.dim(1)}) {
    throw ShapeError("transform_subset: subset " + shape_to_string(stacked.shape()) + " does not map onto " +
                     shape_to_string(gp.scale.shape()));
  }
  x = ops::reshape(x, {x.dim(0), x.dim(1)});
  return ops::add(ops::hadamard(ops::tanh(x), gp.scale), gp.shift);
}

Tensor transform_vector(const Tensor& stacked, const GeneratorParams& gp) {
  if (stacked.rank() != 2) throw ShapeError("transform_vector expects a stacked [O,L] tensor");
  if (gp.w_in) throw ShapeError("transform_vector: vector weights have no input axis");
  Tensor x = ops::reshape(stacked, {1, stacked.dim(0), stacked.dim(1)});
  if (gp.w_out) x = ops::mode_product(x, *gp.w_out, 1);
  if (gp.w_layer) x = ops::mode_product(x, *gp.w_layer, 2);
  if (x.dim(2) != 1 || gp.scale.shape() != Shape{x.dim(1)}) {
    throw ShapeError("transform_vector: subset " + shape_to_string(stacked.shape()) + " does not map onto " +
                     shape_to_string(gp.scale.shape()));
  }
  x = ops::reshape(x, {x.dim(1)});
  return ops::add(ops::hadamard(ops::tanh(x), gp.scale), gp.shift);
}

Generator Generator::build(const ModelConfig& teacher, const ModelConfig& student, const ClassSelection& selection,
                           const GeneratorOptions& options, std::uint64_t seed) {
  teacher.validate();
  student.validate();
  if (teacher.vocab != student.vocab) throw ConfigError("teacher and student must share the vocabulary");
  if (teacher.max_len != student.max_len) throw ConfigError("teacher and student must share max_len");

  Generator gen;
  gen.teacher_ = teacher;
  gen.student_ = student;
  gen.selection_ = selection;
  gen.options_ = options;
  std::mt19937_64 rng(seed);

  for (Part part : {Part::Encoder, Part::Decoder}) {
    for (const auto& g : group(teacher, part)) {
      const auto& info = class_info(g.cls);
      const WeightKey probe{part, info.per_layer ? 0 : -1, g.cls};
      if (!selection.covers(probe)) continue;
      if (info.is_vector && !options.transfer_vectors) continue;
      if (info.is_layernorm && !options.transfer_layernorm) continue;

      const Shape t_shape = class_shape(teacher, g.cls);
      const Shape s_shape = class_shape(student, g.cls);
      for (auto& plan : split(g, depth_of(student, part))) {
        GeneratorEntry e{{part, plan.student_layer, g.cls}, plan, {}};
        const std::size_t span = plan.span();
        if (t_shape != s_shape || span != 1) {
          if (!info.is_vector && contractible(info.rows)) e.params.w_in = glorot(t_shape[0], s_shape[0], rng);
          if (contractible(info.cols)) e.params.w_out = glorot(t_shape.back(), s_shape.back(), rng);
          e.params.w_layer = glorot(span, 1, rng);
        }
        e.params.scale = Tensor::full(s_shape, 1.0, true);
        e.params.shift = Tensor::zeros(s_shape, true);
        gen.entries_.emplace(e.student_key, std::move(e));
      }
    }
  }
  return gen;
}

std::vector<Tensor> Generator::trainable() const {
  std::vector<Tensor> out;
  for (const auto& [k, e] : entries_) {
    for (auto& [name, t] : e.params.named()) out.push_back(t);
  }
  return out;
}

std::size_t Generator::param_count() const {
  std::size_t n = 0;
  for (const auto& t : trainable()) n += t.size();
  return n;
}

std::map<WeightKey, Tensor> Generator::stack_sources(const TransformerParams& teacher) const {
  std::map<WeightKey, Tensor> out;
  for (const auto& [skey, e] : entries_) {
    const Shape t_shape = class_shape(teacher_, e.plan.cls);
    const std::size_t span = e.plan.span();
    const std::size_t n = shape_size(t_shape);
    std::vector<double> stacked(n * span);
    for (std::size_t k = 0; k < span; ++k) {
      const WeightKey tkey{e.plan.part, e.plan.source_layers[k], e.plan.cls};
      const Tensor& t = teacher.at(tkey);
      if (t.shape() != t_shape) {
        throw ShapeError("teacher weight " + tkey.to_string() + " has shape " + shape_to_string(t.shape()));
      }
      auto td = t.data();
      for (std::size_t i = 0; i < n; ++i) stacked[i * span + k] = td[i];
    }
    Shape shape = t_shape;
    shape.push_back(span);
    out.emplace(skey, Tensor::from_data(std::move(shape), std::move(stacked)));
  }
  return out;
}

TransformerParams Generator::generate(const std::map<WeightKey, Tensor>& sources) const {
  TransformerParams student;
  for (const auto& [skey, e] : entries_) {
    auto it = sources.find(skey);
    if (it == sources.end()) throw ConfigError("no teacher subset stacked for " + skey.to_string());
    const bool vec = class_info(skey.cls).is_vector;
    student.set(skey, vec ? transform_vector(it->second, e.params) : transform_subset(it->second, e.params));
  }
  return student;
}

nlohmann::json Generator::describe() const {
  return {{"kind", "generator"},
          {"teacher", model_config_to_json(teacher_)},
          {"student", model_config_to_json(student_)},
          {"selection", selection_.names()},
          {"transfer_vectors", options_.transfer_vectors},
          {"transfer_layernorm", options_.transfer_layernorm}};
}

void Generator::save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.config = describe();
  for (const auto& [skey, e] : entries_) {
    for (auto& [name, t] : e.params.named()) ckpt.tensors.emplace_back("gen/" + skey.to_string() + "/" + name, t);
  }
  save_checkpoint(path, ckpt);
}

Generator Generator::load(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  const auto& c = ckpt.config;
  if (c.value("kind", "") != "generator") throw IoError(path.string() + " does not hold a generator");
  GeneratorOptions opts{c.value("transfer_vectors", true), c.value("transfer_layernorm", true)};
  Generator gen = build(model_config_from_json(c.at("teacher")), model_config_from_json(c.at("student")),
                        ClassSelection::parse(c.at("selection").get<std::vector<std::string>>()), opts, 0);

  std::map<std::string, Tensor*> slots;
  for (auto& [skey, e] : gen.entries_) {
    const std::string prefix = "gen/" + skey.to_string() + "/";
    auto& p = e.params;
    if (p.w_in) slots[prefix + "W_I"] = &*p.w_in;
    if (p.w_out) slots[prefix + "W_O"] = &*p.w_out;
    if (p.w_layer) slots[prefix + "W_L"] = &*p.w_layer;
    slots[prefix + "W"] = &p.scale;
    slots[prefix + "B"] = &p.shift;
  }
  if (slots.size() != ckpt.tensors.size()) {
    throw IoError(path.string() + ": generator checkpoint has " + std::to_string(ckpt.tensors.size()) +
                  " tensors, expected " + std::to_string(slots.size()));
  }
  for (auto& [name, t] : ckpt.tensors) {
    auto it = slots.find(name);
    if (it == slots.end()) throw IoError(path.string() + ": unexpected tensor " + name);
    if (it->second->shape() != t.shape()) throw IoError(path.string() + ": wrong shape for " + name);
    t.set_requires_grad(true);
    *it->second = t;
  }
  return gen;
}

}  // namespace wdistill
