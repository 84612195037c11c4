#include "model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "error.hpp"
#include "ops.hpp"

namespace wdistill {

namespace {

using enum WeightClass;
using enum AxisKind;

// Indexed by WeightClass.
const std::array<ClassInfo, 31> kClasses = {{
    {SelfWq, "self_attn.Wq", true, false, false, false, Width, Width},
    {SelfWk, "self_attn.Wk", true, false, false, false, Width, Width},
    {SelfWv, "self_attn.Wv", true, false, false, false, Width, Width},
    {SelfWo, "self_attn.Wo", true, false, false, false, Width, Width},
    {SelfBq, "self_attn.bq", true, false, true, false, Width, Width},
    {SelfBk, "self_attn.bk", true, false, true, false, Width, Width},
    {SelfBv, "self_attn.bv", true, false, true, false, Width, Width},
    {SelfBo, "self_attn.bo", true, false, true, false, Width, Width},
    {CrossWq, "cross_attn.Wq", true, true, false, false, Width, Width},
    {CrossWk, "cross_attn.Wk", true, true, false, false, Width, Width},
    {CrossWv, "cross_attn.Wv", true, true, false, false, Width, Width},
    {CrossWo, "cross_attn.Wo", true, true, false, false, Width, Width},
    {CrossBq, "cross_attn.bq", true, true, true, false, Width, Width},
    {CrossBk, "cross_attn.bk", true, true, true, false, Width, Width},
    {CrossBv, "cross_attn.bv", true, true, true, false, Width, Width},
    {CrossBo, "cross_attn.bo", true, true, true, false, Width, Width},
    {FfnW1, "ffn.W1", true, false, false, false, Width, Ffn},
    {FfnB1, "ffn.b1", true, false, true, false, Ffn, Ffn},
    {FfnW2, "ffn.W2", true, false, false, false, Ffn, Width},
    {FfnB2, "ffn.b2", true, false, true, false, Width, Width},
    {LnG1, "layernorm.g1", true, false, true, true, Width, Width},
    {LnB1, "layernorm.b1", true, false, true, true, Width, Width},
    {LnG2, "layernorm.g2", true, false, true, true, Width, Width},
    {LnB2, "layernorm.b2", true, false, true, true, Width, Width},
    {LnG3, "layernorm.g3", true, true, true, true, Width, Width},
    {LnB3, "layernorm.b3", true, true, true, true, Width, Width},
    {Embed, "embed", false, false, false, false, Vocab, Width},
    {PosEmbed, "pos_embed", false, false, false, false, Positions, Width},
    {FinalLnG, "final_ln.g", false, false, true, true, Width, Width},
    {FinalLnB, "final_ln.b", false, false, true, true, Width, Width},
    {OutputProj, "output_proj", false, true, false, false, Width, Vocab},
}};

bool is_gain(WeightClass cls) { return cls == LnG1 || cls == LnG2 || cls == LnG3 || cls == FinalLnG; }

}  // namespace

void ModelConfig::validate() const {
  if (enc_depth == 0 || dec_depth == 0 || width == 0 || ffn_hidden == 0 || heads == 0 || vocab == 0 ||
      max_len == 0) {
    throw ConfigError("model config: every dimension must be at least 1");
  }
  if (width % heads != 0) {
    throw ConfigError("model config: width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (vocab <= static_cast<std::size_t>(kFirstSymbol)) {
    throw ConfigError("model config: vocab must exceed the reserved ids");
  }
}

const ClassInfo& class_info(WeightClass cls) { return kClasses[static_cast<std::size_t>(cls)]; }

const std::vector<WeightClass>& all_classes() {
  static const std::vector<WeightClass> classes = [] {
    std::vector<WeightClass> v;
    for (const auto& info : kClasses) v.push_back(info.cls);
    return v;
  }();
  return classes;
}

std::optional<WeightClass> class_from_name(const std::string& name) {
  for (const auto& info : kClasses) {
    if (name == info.name) return info.cls;
  }
  return std::nullopt;
}

std::size_t axis_length(const ModelConfig& cfg, AxisKind kind) {
  switch (kind) {
    case Width: return cfg.width;
    case Ffn: return cfg.ffn_hidden;
    case Vocab: return cfg.vocab;
    case Positions: return cfg.max_len;
  }
  return 0;
}

Shape class_shape(const ModelConfig& cfg, WeightClass cls) {
  const auto& info = class_info(cls);
  if (info.is_vector) return {axis_length(cfg, info.cols)};
  return {axis_length(cfg, info.rows), axis_length(cfg, info.cols)};
}

const char* part_name(Part part) { return part == Part::Encoder ? "encoder" : "decoder"; }

Part part_from_name(const std::string& name) {
  if (name == "encoder") return Part::Encoder;
  if (name == "decoder") return Part::Decoder;
  throw ConfigError("unknown model part '" + name + "'");
}

std::string WeightKey::to_string() const {
  std::string s = part_name(part);
  if (layer >= 0) s += ".l" + std::to_string(layer);
  s += '.';
  s += class_info(cls).name;
  return s;
}

WeightKey WeightKey::parse(const std::string& text) {
  const auto bad = [&] { return ConfigError("malformed weight key '" + text + "'"); };
  const auto dot = text.find('.');
  if (dot == std::string::npos) throw bad();
  WeightKey key;
  key.part = part_from_name(text.substr(0, dot));
  std::string rest = text.substr(dot + 1);
  if (rest.size() > 1 && rest[0] == 'l' && std::isdigit(static_cast<unsigned char>(rest[1]))) {
    const auto next = rest.find('.');
    if (next == std::string::npos) throw bad();
    key.layer = std::stoi(rest.substr(1, next - 1));
    rest = rest.substr(next + 1);
  }
  auto cls = class_from_name(rest);
  if (!cls) throw bad();
  key.cls = *cls;
  const auto& info = class_info(key.cls);
  if (info.per_layer != (key.layer >= 0)) throw bad();
  if (info.decoder_only && key.part != Part::Decoder) throw bad();
  return key;
}

std::size_t depth_of(const ModelConfig& cfg, Part part) {
  return part == Part::Encoder ? cfg.enc_depth : cfg.dec_depth;
}

std::vector<WeightKey> enumerate_keys(const ModelConfig& cfg) {
  std::vector<WeightKey> keys;
  for (Part part : {Part::Encoder, Part::Decoder}) {
    for (const auto& info : kClasses) {
      if (info.decoder_only && part != Part::Decoder) continue;
      if (info.per_layer) {
        for (std::size_t l = 0; l < depth_of(cfg, part); ++l) keys.push_back({part, static_cast<int>(l), info.cls});
      } else {
        keys.push_back({part, -1, info.cls});
      }
    }
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

std::size_t param_count(const ModelConfig& cfg) {
  const std::size_t d = cfg.width, f = cfg.ffn_hidden, v = cfg.vocab, p = cfg.max_len;
  const std::size_t attention = 4 * d * d + 4 * d;
  const std::size_t ffn = d * f + f + f * d + d;
  const std::size_t enc_layer = attention + ffn + 4 * d;
  const std::size_t dec_layer = 2 * attention + ffn + 6 * d;
  const std::size_t per_part = v * d + p * d + 2 * d;
  return cfg.enc_depth * enc_layer + cfg.dec_depth * dec_layer + 2 * per_part + d * v;
}

const Tensor& TransformerParams::at(const WeightKey& key) const {
  auto it = tensors_.find(key);
  if (it == tensors_.end()) throw ConfigError("missing weight " + key.to_string());
  return it->second;
}

Tensor& TransformerParams::at(const WeightKey& key) {
  auto it = tensors_.find(key);
  if (it == tensors_.end()) throw ConfigError("missing weight " + key.to_string());
  return it->second;
}

std::size_t TransformerParams::total_elements() const {
  std::size_t n = 0;
  for (const auto& [k, t] : tensors_) n += t.size();
  return n;
}

std::vector<Tensor> TransformerParams::leaves() const {
  std::vector<Tensor> out;
  for (const auto& [k, t] : tensors_) {
    if (t.is_leaf() && t.requires_grad()) out.push_back(t);
  }
  return out;
}

void TransformerParams::check_complete(const ModelConfig& cfg) const {
  const auto keys = enumerate_keys(cfg);
  if (keys.size() != tensors_.size()) {
    throw ConfigError("parameter set has " + std::to_string(tensors_.size()) + " tensors, config implies " +
                      std::to_string(keys.size()));
  }
  for (const auto& key : keys) {
    const auto& t = at(key);
    if (t.shape() != class_shape(cfg, key.cls)) {
      throw ConfigError("weight " + key.to_string() + " has shape " + shape_to_string(t.shape()) + ", expected " +
                        shape_to_string(class_shape(cfg, key.cls)));
    }
  }
}

TransformerParams TransformerParams::clone(bool requires_grad) const {
  TransformerParams out;
  for (const auto& [k, t] : tensors_) out.set(k, t.detach(requires_grad));
  return out;
}

TransformerParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  TransformerParams params;
  for (const auto& key : enumerate_keys(cfg)) {
    const Shape shape = class_shape(cfg, key.cls);
    if (shape.size() == 1) {
      params.set(key, Tensor::full(shape, is_gain(key.cls) ? 1.0 : 0.0, true));
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = dist(rng);
    params.set(key, Tensor::from_data(shape, std::move(values), true));
  }
  return params;
}

TokenGrid TokenGrid::from_sequences(const std::vector<std::vector<int>>& seqs) {
  TokenGrid g;
  g.rows = seqs.size();
  for (const auto& s : seqs) g.cols = std::max(g.cols, s.size());
  g.cols = std::max<std::size_t>(g.cols, 1);
  g.ids.assign(g.rows * g.cols, kPad);
  g.mask.assign(g.rows * g.cols, 0);
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < seqs[r].size(); ++c) {
      g.ids[r * g.cols + c] = seqs[r][c];
      g.mask[r * g.cols + c] = 1;
    }
  }
  return g;
}

namespace {

void check_grid(const TokenGrid& grid, const ModelConfig& cfg, const char* what) {
  if (grid.rows == 0 || grid.cols == 0) throw ShapeError(std::string(what) + " batch is empty");
  if (grid.ids.size() != grid.rows * grid.cols || grid.mask.size() != grid.ids.size()) {
    throw ShapeError(std::string(what) + " grid storage does not match its dimensions");
  }
  if (grid.cols > cfg.max_len) {
    throw ShapeError(std::string(what) + " length " + std::to_string(grid.cols) + " exceeds max_len " +
                     std::to_string(cfg.max_len));
  }
  for (int id : grid.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab) {
      throw ShapeError(std::string(what) + " token id " + std::to_string(id) + " outside vocab of " +
                       std::to_string(cfg.vocab));
    }
  }
}

WeightKey key(Part part, int layer, WeightClass cls) { return {part, layer, cls}; }

struct AttentionWeights {
  const Tensor& wq; const Tensor& wk; const Tensor& wv; const Tensor& wo;
  const Tensor& bq; const Tensor& bk; const Tensor& bv; const Tensor& bo;
};

AttentionWeights attention_weights(const TransformerParams& p, Part part, int layer, bool cross) {
  const WeightClass base = cross ? CrossWq : SelfWq;
  auto at = [&](int offset) -> const Tensor& {
    return p.at(key(part, layer, static_cast<WeightClass>(static_cast<int>(base) + offset)));
  };
  return {at(0), at(1), at(2), at(3), at(4), at(5), at(6), at(7)};
}

// Multi-head attention of query rows [batch*q_len, d] over key rows
// [batch*k_len, d]; key_mask marks usable keys.
Tensor attention(const AttentionWeights& w, const Tensor& queries, const Tensor& keys, std::size_t batch,
                 std::size_t q_len, std::size_t k_len, std::span<const std::uint8_t> key_mask, bool causal,
                 std::size_t heads) {
  const std::size_t d = queries.dim(1);
  const std::size_t e = d / heads;
  Tensor q = ops::split_heads(ops::add_bias(ops::matmul(queries, w.wq), w.bq), batch, q_len, heads);
  Tensor k = ops::split_heads(ops::add_bias(ops::matmul(keys, w.wk), w.bk), batch, k_len, heads);
  Tensor v = ops::split_heads(ops::add_bias(ops::matmul(keys, w.wv), w.bv), batch, k_len, heads);
  Tensor scores = ops::scale(ops::bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(e)));
  std::vector<std::uint8_t> allowed(batch * heads * q_len * k_len);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < q_len; ++i)
        for (std::size_t j = 0; j < k_len; ++j)
          allowed[((b * heads + h) * q_len + i) * k_len + j] =
              key_mask[b * k_len + j] && (!causal || j <= i) ? 1 : 0;
  Tensor probs = ops::masked_softmax(scores, allowed);
  Tensor ctx = ops::merge_heads(ops::bmm(probs, v), batch, q_len, heads);
  return ops::add_bias(ops::matmul(ctx, w.wo), w.bo);
}

Tensor ffn(const TransformerParams& p, Part part, int layer, const Tensor& x) {
  Tensor h = ops::relu(ops::add_bias(ops::matmul(x, p.at(key(part, layer, FfnW1))), p.at(key(part, layer, FfnB1))));
  return ops::add_bias(ops::matmul(h, p.at(key(part, layer, FfnW2))), p.at(key(part, layer, FfnB2)));
}

Tensor ln(const TransformerParams& p, Part part, int layer, WeightClass gain, WeightClass bias, const Tensor& x) {
  return ops::layer_norm(x, p.at(key(part, layer, gain)), p.at(key(part, layer, bias)));
}

Tensor embed(const TransformerParams& p, Part part, const TokenGrid& grid) {
  std::vector<int> positions(grid.rows * grid.cols);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i % grid.cols);
  return ops::add(ops::embedding(p.at(key(part, -1, Embed)), grid.ids),
                  ops::embedding(p.at(key(part, -1, PosEmbed)), positions));
}

Tensor encode(const TransformerParams& p, const ModelConfig& cfg, const TokenGrid& src) {
  Tensor x = embed(p, Part::Encoder, src);
  for (std::size_t l = 0; l < cfg.enc_depth; ++l) {
    const int li = static_cast<int>(l);
    Tensor h = ln(p, Part::Encoder, li, LnG1, LnB1, x);
    x = ops::add(x, attention(attention_weights(p, Part::Encoder, li, false), h, h, src.rows, src.cols, src.cols,
                              src.mask, false, cfg.heads));
    h = ln(p, Part::Encoder, li, LnG2, LnB2, x);
    x = ops::add(x, ffn(p, Part::Encoder, li, h));
  }
  return ln(p, Part::Encoder, -1, FinalLnG, FinalLnB, x);
}

// Decoder logits [rows*tgt_cols, vocab] given encoder rows for the same batch.
Tensor decode(const TransformerParams& p, const ModelConfig& cfg, const Tensor& memory, const TokenGrid& src,
              const TokenGrid& tgt) {
  Tensor y = embed(p, Part::Decoder, tgt);
  for (std::size_t l = 0; l < cfg.dec_depth; ++l) {
    const int li = static_cast<int>(l);
    Tensor h = ln(p, Part::Decoder, li, LnG1, LnB1, y);
    y = ops::add(y, attention(attention_weights(p, Part::Decoder, li, false), h, h, tgt.rows, tgt.cols, tgt.cols,
                              tgt.mask, true, cfg.heads));
    h = ln(p, Part::Decoder, li, LnG2, LnB2, y);
    y = ops::add(y, attention(attention_weights(p, Part::Decoder, li, true), h, memory, tgt.rows, tgt.cols,
                              src.cols, src.mask, false, cfg.heads));
    h = ln(p, Part::Decoder, li, LnG3, LnB3, y);
    y = ops::add(y, ffn(p, Part::Decoder, li, h));
  }
  y = ln(p, Part::Decoder, -1, FinalLnG, FinalLnB, y);
  return ops::matmul(y, p.at(key(Part::Decoder, -1, OutputProj)));
}

// Replicates row block `row` of an encoder output `count` times.
Tensor repeat_rows(const Tensor& memory, std::size_t row_len, std::size_t count) {
  const std::size_t d = memory.dim(1);
  std::vector<double> out;
  out.reserve(count * row_len * d);
  auto src = memory.data();
  for (std::size_t i = 0; i < count; ++i) out.insert(out.end(), src.begin(), src.begin() + row_len * d);
  return Tensor::from_data({count * row_len, d}, std::move(out));
}

TokenGrid prefix_grid(const std::vector<std::vector<int>>& prefixes) {
  TokenGrid g = TokenGrid::from_sequences(prefixes);
  std::fill(g.mask.begin(), g.mask.end(), 1);
  return g;
}

std::vector<double> last_log_probs(const Tensor& logits, std::size_t rows, std::size_t cols, std::size_t vocab) {
  std::vector<double> out(rows * vocab);
  auto ld = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* lr = ld.data() + ((r + 1) * cols - 1) * vocab;
    const double mx = *std::max_element(lr, lr + vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(lr[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < vocab; ++j) out[r * vocab + j] = lr[j] - lse;
  }
  return out;
}

TokenGrid single_source(const std::vector<int>& src) { return TokenGrid::from_sequences({src}); }

}  // namespace

Tensor forward(const TransformerParams& params, const ModelConfig& cfg, const TokenGrid& src,
               const TokenGrid& tgt_in) {
  check_grid(src, cfg, "source");
  check_grid(tgt_in, cfg, "target");
  if (src.rows != tgt_in.rows) throw ShapeError("source and target batches differ in size");
  Tensor memory = encode(params, cfg, src);
  Tensor logits = decode(params, cfg, memory, src, tgt_in);
  return ops::reshape(logits, {tgt_in.rows, tgt_in.cols, cfg.vocab});
}

std::vector<std::vector<int>> greedy_decode(const TransformerParams& params, const ModelConfig& cfg,
                                            const TokenGrid& src, std::size_t max_steps) {
  check_grid(src, cfg, "source");
  NoGradGuard no_grad;
  std::vector<std::vector<int>> out(src.rows);
  if (max_steps == 0) return out;
  max_steps = std::min(max_steps, cfg.max_len);
  Tensor memory = encode(params, cfg, src);
  std::vector<std::vector<int>> prefixes(src.rows, std::vector<int>{kBos});
  std::vector<bool> done(src.rows, false);
  for (std::size_t step = 0; step < max_steps; ++step) {
    TokenGrid tgt = prefix_grid(prefixes);
    Tensor logits = decode(params, cfg, memory, src, tgt);
    auto ld = logits.data();
    bool all_done = true;
    for (std::size_t r = 0; r < src.rows; ++r) {
      const double* lr = ld.data() + ((r + 1) * tgt.cols - 1) * cfg.vocab;
      const int best = static_cast<int>(std::max_element(lr, lr + cfg.vocab) - lr);
      prefixes[r].push_back(done[r] ? kEos : best);
      if (done[r]) continue;
      if (best == kEos) {
        done[r] = true;
      } else {
        out[r].push_back(best);
        all_done = false;
      }
    }
    if (all_done) break;
  }
  return out;
}

double length_normalized(double log_prob, std::size_t length, double alpha) {
  if (length == 0 || alpha == 0.0) return log_prob;
  return log_prob / std::pow(static_cast<double>(length), alpha);
}

Hypothesis beam_decode(const TransformerParams& params, const ModelConfig& cfg, const std::vector<int>& src,
                       std::size_t width, double lennorm_alpha, std::size_t max_steps) {
  if (width < 1) throw ConfigError("beam width must be at least 1");
  const TokenGrid src_grid = single_source(src);
  check_grid(src_grid, cfg, "source");
  NoGradGuard no_grad;
  max_steps = std::min(max_steps, cfg.max_len);

  struct Beam {
    std::vector<int> tokens;
    double log_prob;
  };
  std::vector<Beam> alive{{{}, 0.0}};
  std::vector<Hypothesis> finished;
  const Tensor memory = max_steps > 0 ? encode(params, cfg, src_grid) : Tensor();

  for (std::size_t step = 0; step < max_steps && !alive.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& b : alive) {
      std::vector<int> p{kBos};
      p.insert(p.end(), b.tokens.begin(), b.tokens.end());
      prefixes.push_back(std::move(p));
    }
    TokenGrid tgt = prefix_grid(prefixes);
    TokenGrid srcs;
    srcs.rows = alive.size();
    srcs.cols = src_grid.cols;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      srcs.ids.insert(srcs.ids.end(), src_grid.ids.begin(), src_grid.ids.end());
      srcs.mask.insert(srcs.mask.end(), src_grid.mask.begin(), src_grid.mask.end());
    }
    Tensor logits = decode(params, cfg, repeat_rows(memory, src_grid.cols, alive.size()), srcs, tgt);
    const auto lp = last_log_probs(logits, alive.size(), tgt.cols, cfg.vocab);

    struct Candidate {
      double log_prob;
      int token;
      std::size_t beam;
    };
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < alive.size(); ++b)
      for (std::size_t t = 0; t < cfg.vocab; ++t)
        cands.push_back({alive[b].log_prob + lp[b * cfg.vocab + t], static_cast<int>(t), b});
    // Same-length candidates, so ranking by raw log-prob equals ranking by normalized score.
    std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
      if (x.log_prob != y.log_prob) return x.log_prob > y.log_prob;
      if (x.token != y.token) return x.token < y.token;
      return x.beam < y.beam;
    });
    std::vector<Beam> next;
    for (std::size_t i = 0; i < std::min(width, cands.size()); ++i) {
      const auto& c = cands[i];
      if (c.token == kEos) {
        Hypothesis h{alive[c.beam].tokens, true, c.log_prob, 0.0};
        h.score = length_normalized(h.log_prob, h.tokens.size() + 1, lennorm_alpha);
        finished.push_back(std::move(h));
      } else {
        Beam nb{alive[c.beam].tokens, c.log_prob};
        nb.tokens.push_back(c.token);
        next.push_back(std::move(nb));
      }
    }
    alive = std::move(next);
  }

  std::vector<Hypothesis> pool = std::move(finished);
  for (auto& b : alive) {
    Hypothesis h{std::move(b.tokens), false, b.log_prob, 0.0};
    h.score = length_normalized(h.log_prob, h.tokens.size(), lennorm_alpha);
    pool.push_back(std::move(h));
  }
  // Finished hypotheses were appended in rank order, then alive beams in rank
  // order; the first maximum wins ties.
  Hypothesis best = pool.front();
  for (const auto& h : pool) {
    if (h.score > best.score) best = h;
  }
  return best;
}

double sequence_log_prob(const TransformerParams& params, const ModelConfig& cfg, const std::vector<int>& src,
                         const std::vector<int>& tokens, bool finished) {
  std::vector<int> out = tokens;
  if (finished) out.push_back(kEos);
  if (out.empty()) return 0.0;
  std::vector<int> in{kBos};
  in.insert(in.end(), out.begin(), out.end() - 1);
  NoGradGuard no_grad;
  Tensor logits = forward(params, cfg, single_source(src), TokenGrid::from_sequences({in}));
  auto ld = logits.data();
  double total = 0.0;
  for (std::size_t t = 0; t < out.size(); ++t) {
    const double* lr = ld.data() + t * cfg.vocab;
    const double mx = *std::max_element(lr, lr + cfg.vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < cfg.vocab; ++j) z += std::exp(lr[j] - mx);
    total += lr[out[t]] - mx - std::log(z);
  }
  return total;
}

}  // namespace wdistill
