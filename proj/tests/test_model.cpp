#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "checkpoint.hpp"
#include "error.hpp"
#include "model.hpp"
#include "ops.hpp"

using namespace wdistill;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.enc_depth = 2;
  cfg.dec_depth = 2;
  cfg.width = 8;
  cfg.ffn_hidden = 32;
  cfg.heads = 2;
  cfg.vocab = 7;
  cfg.max_len = 6;
  return cfg;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.dec_depth = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("weight keys round-trip through their string form") {
  for (const auto& key : enumerate_keys(tiny_config())) CHECK(WeightKey::parse(key.to_string()) == key);
  CHECK(WeightKey{Part::Encoder, 3, WeightClass::FfnW1}.to_string() == "encoder.l3.ffn.W1");
  CHECK(WeightKey{Part::Decoder, -1, WeightClass::OutputProj}.to_string() == "decoder.output_proj");
  CHECK_THROWS_AS(WeightKey::parse("encoder.l0.cross_attn.Wq"), ConfigError);
  CHECK_THROWS_AS(WeightKey::parse("encoder.embedding"), ConfigError);
}

TEST_CASE("key set matches the class inventory and the parameter formula") {
  const ModelConfig cfg = tiny_config();
  const auto keys = enumerate_keys(cfg);
  std::size_t cross = 0, total = 0;
  for (const auto& k : keys) {
    if (class_info(k.cls).decoder_only) CHECK(k.part == Part::Decoder);
    if (k.cls == WeightClass::CrossWq) ++cross;
    total += shape_size(class_shape(cfg, k.cls));
  }
  CHECK(cross == cfg.dec_depth);
  CHECK(total == param_count(cfg));

  // Base-size shapes, checked symbolically rather than against published totals.
  ModelConfig base;
  base.enc_depth = 6;
  base.dec_depth = 6;
  base.width = 512;
  base.ffn_hidden = 2048;
  base.heads = 8;
  base.vocab = 32000;
  base.max_len = 256;
  std::size_t base_total = 0;
  for (const auto& k : enumerate_keys(base)) base_total += shape_size(class_shape(base, k.cls));
  CHECK(base_total == param_count(base));
}

TEST_CASE("init_params: biases zero, gains one, Glorot bounds and moments") {
  ModelConfig cfg = tiny_config();
  cfg.width = 32;
  cfg.ffn_hidden = 128;
  cfg.heads = 4;
  cfg.enc_depth = 6;
  const auto p = init_params(cfg, 3);
  p.check_complete(cfg);
  for (const auto& [k, t] : p) {
    if (k.cls == WeightClass::FfnB1 || k.cls == WeightClass::SelfBq || k.cls == WeightClass::LnB1) {
      for (double v : t.data()) CHECK(v == 0.0);
    }
    if (k.cls == WeightClass::LnG1 || k.cls == WeightClass::FinalLnG) {
      for (double v : t.data()) CHECK(v == 1.0);
    }
  }
  // Uniform(-a, a): E|x| = a/2, Var|x| = a^2/12.
  const double a = std::sqrt(6.0 / (32.0 + 128.0));
  std::vector<double> samples;
  for (int l = 0; l < 6; ++l) {
    for (double v : p.at({Part::Encoder, l, WeightClass::FfnW1}).data()) {
      CHECK(std::abs(v) <= a);
      samples.push_back(std::abs(v));
    }
  }
  REQUIRE(samples.size() >= 10000);
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  const double sigma = std::sqrt(a * a / 12.0 / static_cast<double>(samples.size()));
  CHECK(std::abs(mean - a / 2.0) < 3.0 * sigma);

  const auto again = init_params(cfg, 3);
  for (const auto& [k, t] : p) CHECK(values(t) == values(again.at(k)));
}

TEST_CASE("forward shape and input validation") {
  const ModelConfig cfg = tiny_config();
  const auto p = init_params(cfg, 1);
  TokenGrid src = TokenGrid::from_sequences({{3, 4, 5}, {6, 3}});
  TokenGrid tgt = TokenGrid::from_sequences({{kBos, 5, 4}, {kBos, 3}});
  Tensor logits = forward(p, cfg, src, tgt);
  CHECK(logits.shape() == Shape{2, 3, cfg.vocab});

  TokenGrid bad = TokenGrid::from_sequences({{3, 99}});
  CHECK_THROWS_AS(forward(p, cfg, bad, TokenGrid::from_sequences({{kBos}})), ShapeError);
  TokenGrid too_long = TokenGrid::from_sequences({std::vector<int>(cfg.max_len + 1, 3)});
  CHECK_THROWS_AS(forward(p, cfg, too_long, TokenGrid::from_sequences({{kBos}})), ShapeError);
}

TEST_CASE("masked source positions do not influence logits") {
  const ModelConfig cfg = tiny_config();
  const auto p = init_params(cfg, 2);
  TokenGrid src = TokenGrid::from_sequences({{3, 4, 5, 6}, {6, 3}});
  TokenGrid tgt = TokenGrid::from_sequences({{kBos, 5, 4}, {kBos, 3, 4}});
  const auto base = values(forward(p, cfg, src, tgt));
  TokenGrid perturbed = src;
  perturbed.ids[1 * perturbed.cols + 3] = 5;  // row 1, column 3 is padding
  CHECK(values(forward(p, cfg, perturbed, tgt)) == base);
}

TEST_CASE("decoder is causal: later target tokens never affect earlier logits") {
  const ModelConfig cfg = tiny_config();
  const auto p = init_params(cfg, 4);
  TokenGrid src = TokenGrid::from_sequences({{3, 4, 5}});
  TokenGrid tgt = TokenGrid::from_sequences({{kBos, 3, 4, 5, 6}});
  const auto base = values(forward(p, cfg, src, tgt));
  const std::size_t v = cfg.vocab;
  for (std::size_t j = 1; j < tgt.cols; ++j) {
    TokenGrid changed = tgt;
    changed.ids[j] = changed.ids[j] == 6 ? 3 : 6;
    const auto out = values(forward(p, cfg, src, changed));
    for (std::size_t pos = 0; pos < j; ++pos)
      for (std::size_t k = 0; k < v; ++k) CHECK(out[pos * v + k] == base[pos * v + k]);
    bool changed_later = false;
    for (std::size_t k = j * v; k < out.size(); ++k) changed_later = changed_later || out[k] != base[k];
    CHECK(changed_later);
  }
}

TEST_CASE("forward is equivariant under batch permutation") {
  const ModelConfig cfg = tiny_config();
  const auto p = init_params(cfg, 5);
  std::vector<std::vector<int>> srcs{{3, 4, 5}, {6}, {5, 5, 4, 3}};
  std::vector<std::vector<int>> tgts{{kBos, 4}, {kBos, 6, 6}, {kBos}};
  const auto a = values(forward(p, cfg, TokenGrid::from_sequences(srcs), TokenGrid::from_sequences(tgts)));
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<std::vector<int>> ps, pt;
  for (auto i : perm) {
    ps.push_back(srcs[i]);
    pt.push_back(tgts[i]);
  }
  const auto b = values(forward(p, cfg, TokenGrid::from_sequences(ps), TokenGrid::from_sequences(pt)));
  const std::size_t row = 3 * cfg.vocab;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < row; ++k) CHECK(b[r * row + k] == doctest::Approx(a[perm[r] * row + k]).epsilon(1e-12));
}

TEST_CASE("greedy decoding") {
  const ModelConfig cfg = tiny_config();
  const auto p = init_params(cfg, 6);
  TokenGrid src = TokenGrid::from_sequences({{3, 4, 5}, {6, 6}});
  const auto none = greedy_decode(p, cfg, src, 0);
  REQUIRE(none.size() == 2);
  CHECK(none[0].empty());
  CHECK(none[1].empty());
  CHECK(greedy_decode(p, cfg, src, 4) == greedy_decode(p, cfg, src, 4));
  for (const auto& h : greedy_decode(p, cfg, src, 4)) CHECK(h.size() <= 4);
}

TEST_CASE("beam of width one without length normalization is greedy") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> sym(kFirstSymbol, 6);
  const ModelConfig cfg = tiny_config();
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto p = init_params(cfg, seed);
    std::vector<int> src(3);
    for (auto& s : src) s = sym(rng);
    const auto greedy = greedy_decode(p, cfg, TokenGrid::from_sequences({src}), cfg.max_len)[0];
    const auto beam = beam_decode(p, cfg, src, 1, 0.0, cfg.max_len);
    CHECK(beam.tokens == greedy);
  }
  CHECK_THROWS_AS(beam_decode(init_params(cfg, 0), cfg, {3}, 0, 0.0, 3), ConfigError);
}

namespace {

// Every sequence of length <= max_steps: those that end in EOS, plus the
// unfinished ones of exactly max_steps tokens.
Hypothesis exhaustive_best(const TransformerParams& p, const ModelConfig& cfg, const std::vector<int>& src,
                           std::size_t max_steps, double alpha) {
  Hypothesis best;
  bool have = false;
  std::vector<std::vector<int>> frontier{{}};
  for (std::size_t len = 0; len <= max_steps; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : frontier) {
      if (len < max_steps) {
        const double lp = sequence_log_prob(p, cfg, src, prefix, true);
        const double score = length_normalized(lp, prefix.size() + 1, alpha);
        if (!have || score > best.score) best = {prefix, true, lp, score}, have = true;
        for (int t = 0; t < static_cast<int>(cfg.vocab); ++t) {
          if (t == kEos) continue;
          auto n = prefix;
          n.push_back(t);
          next.push_back(std::move(n));
        }
      } else {
        const double lp = sequence_log_prob(p, cfg, src, prefix, false);
        const double score = length_normalized(lp, prefix.size(), alpha);
        if (!have || score > best.score) best = {prefix, false, lp, score}, have = true;
      }
    }
    frontier = std::move(next);
  }
  return best;
}

}  // namespace

TEST_CASE("beam of width V over two steps equals exhaustive search") {
  ModelConfig cfg = tiny_config();
  cfg.vocab = 5;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto p = init_params(cfg, 100 + seed);
    for (double alpha : {0.0, 0.6, 1.0}) {
      const auto oracle = exhaustive_best(p, cfg, {3, 4}, 2, alpha);
      const auto beam = beam_decode(p, cfg, {3, 4}, cfg.vocab, alpha, 2);
      CHECK(beam.tokens == oracle.tokens);
      CHECK(beam.finished == oracle.finished);
      CHECK(beam.score == doctest::Approx(oracle.score).epsilon(1e-9));
    }
  }
}

TEST_CASE("beam scores are consistent with teacher-forced scoring") {
  const ModelConfig cfg = tiny_config();
  const auto p = init_params(cfg, 9);
  const auto h = beam_decode(p, cfg, {3, 5, 6}, 3, 0.6, 5);
  const double lp = sequence_log_prob(p, cfg, {3, 5, 6}, h.tokens, h.finished);
  CHECK(h.log_prob == doctest::Approx(lp).epsilon(1e-9));
}

TEST_CASE("beam search does not score below greedy") {
  ModelConfig cfg = tiny_config();
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> sym(kFirstSymbol, static_cast<int>(cfg.vocab) - 1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = init_params(cfg, 500 + seed);
    std::vector<int> src(4);
    for (auto& s : src) s = sym(rng);
    const auto greedy = beam_decode(p, cfg, src, 1, 0.0, cfg.max_len);
    for (std::size_t width : {2u, 4u}) {
      const auto beam = beam_decode(p, cfg, src, width, 0.0, cfg.max_len);
      CHECK(beam.score >= greedy.score - 1e-12);
    }
  }
}

TEST_CASE("attention rows stay normalized after masking") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<double> scores(2 * 4 * 4);
  for (auto& s : scores) s = u(rng);
  std::vector<std::uint8_t> allowed(scores.size());
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) allowed[(g * 4 + i) * 4 + j] = j <= i && j < 3;
  Tensor y = ops::masked_softmax(Tensor::from_data({2, 4, 4}, scores), allowed);
  for (std::size_t r = 0; r < 8; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += y.at(r * 4 + j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("model checkpoints round-trip bit-exactly") {
  const ModelConfig cfg = tiny_config();
  const auto dir = std::filesystem::temp_directory_path() / "wdistill_model_ckpt";
  std::filesystem::create_directories(dir);
  const auto p = init_params(cfg, 13);
  save_model(dir / "a.ckpt", cfg, p, {{"note", "x"}});
  const auto loaded = load_model(dir / "a.ckpt");
  CHECK(loaded.config == cfg);
  CHECK(loaded.meta["note"] == "x");
  save_model(dir / "b.ckpt", loaded.config, loaded.params, loaded.meta);
  CHECK(file_digest(dir / "a.ckpt") == file_digest(dir / "b.ckpt"));
  for (const auto& [k, t] : p) CHECK(values(loaded.params.at(k)) == values(t));
  CHECK_THROWS_AS(load_model(dir / "missing.ckpt"), IoError);
  std::filesystem::remove_all(dir);
}
