#include <doctest.h>

#include <filesystem>
#include <random>

#include "checkpoint.hpp"
#include "error.hpp"
#include "generator.hpp"
#include "gradcheck.hpp"
#include "ops.hpp"
#include "oracles.hpp"

using namespace wdistill;
using wdistill::testing::max_abs_diff;
using wdistill::testing::random_tensor;

namespace {

ModelConfig make(std::size_t enc, std::size_t dec, std::size_t width, std::size_t heads = 2) {
  ModelConfig cfg;
  cfg.enc_depth = enc;
  cfg.dec_depth = dec;
  cfg.width = width;
  cfg.ffn_hidden = 4 * width;
  cfg.heads = heads;
  cfg.vocab = 7;
  cfg.max_len = 5;
  return cfg;
}

GeneratorParams random_params(std::size_t it, std::size_t ot, std::size_t lt, std::size_t is, std::size_t os,
                              std::mt19937_64& rng) {
  GeneratorParams gp;
  gp.w_in = random_tensor({it, is}, rng);
  gp.w_out = random_tensor({ot, os}, rng);
  gp.w_layer = random_tensor({lt, 1}, rng);
  gp.scale = random_tensor({is, os}, rng);
  gp.shift = random_tensor({is, os}, rng);
  return gp;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("transform_subset shapes follow the contraction order") {
  std::mt19937_64 rng(1);
  GeneratorParams gp;
  gp.w_in = Tensor::zeros({512, 256}, true);
  gp.w_out = Tensor::zeros({2048, 1024}, true);
  gp.w_layer = Tensor::zeros({3, 1}, true);
  gp.scale = Tensor::full({256, 1024}, 1.0, true);
  gp.shift = Tensor::zeros({256, 1024}, true);
  Tensor x = Tensor::zeros({512, 2048, 3});
  Tensor a = ops::mode_product(x, *gp.w_in, 0);
  CHECK(a.shape() == Shape{256, 2048, 3});
  Tensor b = ops::mode_product(a, *gp.w_out, 1);
  CHECK(b.shape() == Shape{256, 1024, 3});
  Tensor c = ops::mode_product(b, *gp.w_layer, 2);
  CHECK(c.shape() == Shape{256, 1024, 1});
  Tensor s = transform_subset(x, gp);
  CHECK(s.shape() == Shape{256, 1024});
  for (double v : s.data()) CHECK(v == 0.0);
}

TEST_CASE("transform_subset matches the index-sum oracle") {
  std::mt19937_64 rng(2);
  GeneratorParams gp = random_params(8, 16, 3, 4, 8, rng);
  Tensor x = random_tensor({8, 16, 3}, rng, false, -2, 2);
  const auto got = values(transform_subset(x, gp));
  CHECK(max_abs_diff(got, testing::naive_subset(x, gp)) <= 1e-12);
  CHECK(max_abs_diff(got, testing::fused_subset(x, gp)) <= 1e-12);
}

TEST_CASE("transform_subset on random shapes") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> d(1, 16);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t it = d(rng), ot = 2 * d(rng), lt = 1 + trial % 4;
    const std::size_t is = 1 + d(rng) % it, os = 1 + d(rng) % ot;
    GeneratorParams gp = random_params(it, ot, lt, is, os, rng);
    Tensor x = random_tensor({it, ot, lt}, rng, false);
    CHECK(max_abs_diff(values(transform_subset(x, gp)), testing::naive_subset(x, gp)) <= 1e-12);
  }
}

TEST_CASE("transform_subset rejects mismatched shapes") {
  std::mt19937_64 rng(4);
  GeneratorParams gp = random_params(8, 16, 3, 4, 8, rng);
  CHECK_THROWS_AS(transform_subset(Tensor::zeros({8, 16, 2}), gp), ShapeError);
  CHECK_THROWS_AS(transform_subset(Tensor::zeros({7, 16, 3}), gp), ShapeError);
  CHECK_THROWS_AS(transform_subset(Tensor::zeros({8, 16}), gp), ShapeError);
}

TEST_CASE("transform_vector") {
  std::mt19937_64 rng(5);
  GeneratorParams gp;
  gp.w_out = random_tensor({6, 3}, rng);
  gp.w_layer = random_tensor({2, 1}, rng);
  gp.scale = random_tensor({3}, rng);
  gp.shift = random_tensor({3}, rng);
  Tensor x = random_tensor({6, 2}, rng, false);
  CHECK(max_abs_diff(values(transform_vector(x, gp)), testing::naive_vector(x, gp)) <= 1e-12);

  GeneratorParams init;
  init.w_out = random_tensor({6, 3}, rng);
  init.w_layer = random_tensor({2, 1}, rng);
  init.scale = Tensor::full({3}, 1.0, true);
  init.shift = Tensor::zeros({3}, true);
  const Tensor zero_bias = transform_vector(Tensor::zeros({6, 2}), init);
  for (double v : zero_bias.data()) CHECK(v == 0.0);

  GeneratorParams same;
  same.w_layer = random_tensor({2, 1}, rng);
  same.scale = random_tensor({6}, rng);
  same.shift = random_tensor({6}, rng);
  CHECK(max_abs_diff(values(transform_vector(x, same)), testing::naive_vector(x, same)) <= 1e-12);
}

TEST_CASE("a zero teacher subset yields the shift exactly") {
  std::mt19937_64 rng(6);
  GeneratorParams gp = random_params(4, 6, 2, 3, 5, rng);
  CHECK(values(transform_subset(Tensor::zeros({4, 6, 2}), gp)) == values(gp.shift));
}

TEST_CASE("at initialization the student weight is tanh of the contraction") {
  const auto teacher = make(2, 2, 16);
  const auto student = make(2, 1, 8);
  const Generator gen = Generator::build(teacher, student, ClassSelection::all(), {}, 7);
  const auto tp = init_params(teacher, 1);
  const auto sources = gen.stack_sources(tp);
  const auto generated = gen.generate(sources);
  for (const auto& [k, e] : gen.entries()) {
    for (double v : e.params.scale.data()) CHECK(v == 1.0);
    for (double v : e.params.shift.data()) CHECK(v == 0.0);
    const Tensor& src = sources.at(k);
    const auto expected = class_info(k.cls).is_vector ? testing::naive_vector(src, e.params)
                                                      : testing::naive_subset(src, e.params);
    CHECK(max_abs_diff(values(generated.at(k)), expected) <= 1e-12);
  }
}

TEST_CASE("build: entries, shapes and same-shape shortcut") {
  const auto teacher = make(2, 2, 16);
  const auto student = make(2, 1, 8);
  const Generator gen = Generator::build(teacher, student, ClassSelection::all(), {}, 7);
  const auto keys = enumerate_keys(student);
  CHECK(gen.entries().size() == keys.size());
  for (const auto& k : keys) {
    REQUIRE(gen.generates(k));
    const auto& e = gen.entries().at(k);
    const auto& info = class_info(k.cls);
    CHECK(e.params.scale.shape() == class_shape(student, k.cls));
    CHECK(e.params.w_layer.has_value());
    CHECK(e.params.w_layer->dim(0) == e.plan.span());
    CHECK(e.params.w_in.has_value() == (!info.is_vector && info.rows != AxisKind::Vocab &&
                                        info.rows != AxisKind::Positions));
    CHECK(e.params.w_out.has_value() == (info.cols != AxisKind::Vocab));
  }
  const auto dec_w1 = gen.entries().at({Part::Decoder, 0, WeightClass::FfnW1});
  CHECK(dec_w1.plan.source_layers == std::vector<int>{0, 1});
  CHECK(dec_w1.params.w_in->shape() == Shape{16, 8});
  CHECK(dec_w1.params.w_out->shape() == Shape{64, 32});

  // Same widths and depths: only the scale and shift remain.
  const Generator same = Generator::build(teacher, teacher, ClassSelection::all(), {}, 7);
  for (const auto& [k, e] : same.entries()) {
    CHECK_FALSE(e.params.w_in.has_value());
    CHECK_FALSE(e.params.w_out.has_value());
    CHECK_FALSE(e.params.w_layer.has_value());
  }
  // Same widths but deeper teacher: the layer axis still needs W_L.
  const Generator shallow = Generator::build(teacher, make(2, 1, 16), ClassSelection::all(), {}, 7);
  const auto& e = shallow.entries().at({Part::Decoder, 0, WeightClass::SelfWq});
  CHECK(e.params.w_layer.has_value());

  CHECK_THROWS_AS(Generator::build(make(3, 2, 16), student, ClassSelection::all(), {}, 7), ConfigError);
  auto other_vocab = student;
  other_vocab.vocab = 9;
  CHECK_THROWS_AS(Generator::build(teacher, other_vocab, ClassSelection::all(), {}, 7), ConfigError);
}

TEST_CASE("build is deterministic in the seed") {
  const auto teacher = make(2, 2, 16);
  const auto student = make(2, 1, 8);
  const auto a = Generator::build(teacher, student, ClassSelection::all(), {}, 7);
  const auto b = Generator::build(teacher, student, ClassSelection::all(), {}, 7);
  const auto c = Generator::build(teacher, student, ClassSelection::all(), {}, 8);
  bool differs = false;
  auto ta = a.trainable(), tb = b.trainable(), tc = c.trainable();
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(values(ta[i]) == values(tb[i]));
    differs = differs || values(ta[i]) != values(tc[i]);
  }
  CHECK(differs);
}

TEST_CASE("selection controls which keys are generated") {
  const auto teacher = make(2, 2, 16);
  const auto student = make(2, 1, 8);
  const auto enc =
      Generator::build(teacher, student, ClassSelection::parse(std::vector<std::string>{"encoder"}), {}, 7);
  for (const auto& k : enumerate_keys(student)) {
    const bool expected = k.part == Part::Encoder && k.cls != WeightClass::Embed && k.cls != WeightClass::PosEmbed;
    CHECK(enc.generates(k) == expected);
  }
  const auto gen = enc.generate(init_params(teacher, 2));
  for (const auto& [k, t] : gen) CHECK(k.part == Part::Encoder);

  CHECK(Generator::build(teacher, student, ClassSelection::none(), {}, 7).entries().empty());
  CHECK(ClassSelection::parse(std::vector<std::string>{"decoder", "output"}).label() == "decoder+output");
  CHECK(ClassSelection::parse(std::vector<std::string>{"all"}).label() == "all");
  CHECK(ClassSelection::parse(std::vector<std::string>{"none"}).label() == "none");
  CHECK_THROWS_AS(ClassSelection::parse(std::vector<std::string>{"attention"}), ConfigError);

  GeneratorOptions no_vectors;
  no_vectors.transfer_vectors = false;
  const auto matrices_only = Generator::build(teacher, student, ClassSelection::all(), no_vectors, 7);
  for (const auto& [k, e] : matrices_only.entries()) CHECK_FALSE(class_info(k.cls).is_vector);
  GeneratorOptions no_ln;
  no_ln.transfer_layernorm = false;
  bool has_bias = false;
  const auto without_ln = Generator::build(teacher, student, ClassSelection::all(), no_ln, 7);
  for (const auto& [k, e] : without_ln.entries()) {
    CHECK_FALSE(class_info(k.cls).is_layernorm);
    has_bias = has_bias || k.cls == WeightClass::FfnB1;
  }
  CHECK(has_bias);
}

TEST_CASE("gradients reach every generator parameter and never the teacher") {
  const auto teacher = make(2, 2, 8);
  const auto student = make(2, 1, 4);
  const Generator gen = Generator::build(teacher, student, ClassSelection::all(), {}, 3);
  auto tp = init_params(teacher, 4).clone(true);
  const auto sources = gen.stack_sources(tp);
  TokenGrid src = TokenGrid::from_sequences({{3, 4, 5}, {6, 5}});
  TokenGrid tgt_in = TokenGrid::from_sequences({{kBos, 5, 4}, {kBos, 5}});
  TokenGrid tgt_out = TokenGrid::from_sequences({{5, 4, 3}, {5, 6}});
  auto loss = [&] {
    const auto sp = gen.generate(sources);
    Tensor logits = forward(sp, student, src, tgt_in);
    std::vector<double> onehot(logits.size(), 0.0);
    for (std::size_t i = 0; i < tgt_out.ids.size(); ++i) onehot[i * student.vocab + tgt_out.ids[i]] = 1.0;
    const Shape flat{tgt_out.ids.size(), student.vocab};
    return ops::softmax_cross_entropy(ops::reshape(logits, flat), Tensor::from_data(flat, onehot), tgt_out.mask);
  };
  loss().backward();
  for (const auto& t : gen.trainable()) CHECK(t.has_grad());
  for (const auto& [k, t] : tp) {
    if (t.has_grad())
      for (double g : t.grad()) CHECK(g == 0.0);
  }
}

TEST_CASE("finite-difference check of a full toy generator") {
  const auto teacher = make(2, 2, 4);
  const auto student = make(2, 1, 2, 1);
  const Generator gen = Generator::build(teacher, student, ClassSelection::all(), {}, 5);
  const auto sources = gen.stack_sources(init_params(teacher, 6));
  // Perturb scale and shift away from their constant init so every path is exercised.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const auto& [k, e] : gen.entries()) {
    for (auto& v : Tensor(e.params.scale).mutable_data()) v += u(rng);
    for (auto& v : Tensor(e.params.shift).mutable_data()) v += u(rng) * 0.1;
  }
  TokenGrid src = TokenGrid::from_sequences({{3, 4, 5}});
  TokenGrid tgt_in = TokenGrid::from_sequences({{kBos, 5, 4}});
  auto loss = [&] {
    Tensor logits = forward(gen.generate(sources), student, src, tgt_in);
    return ops::sum(ops::tanh(logits));
  };
  CHECK(testing::max_grad_error(loss, gen.trainable()) < 1e-4);
}

TEST_CASE("generator checkpoints round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "wdistill_gen_ckpt";
  std::filesystem::create_directories(dir);
  const Generator gen =
      Generator::build(make(2, 2, 16), make(2, 1, 8), ClassSelection::parse(std::vector<std::string>{"encoder"}), {}, 9);
  gen.save(dir / "a.ckpt");
  const Generator loaded = Generator::load(dir / "a.ckpt");
  loaded.save(dir / "b.ckpt");
  CHECK(file_digest(dir / "a.ckpt") == file_digest(dir / "b.ckpt"));
  CHECK(loaded.entries().size() == gen.entries().size());
  auto ta = gen.trainable(), tb = loaded.trainable();
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(values(ta[i]) == values(tb[i]));

  const ModelConfig cfg = make(1, 1, 4);
  save_model(dir / "model.ckpt", cfg, init_params(cfg, 1), {});
  CHECK_THROWS_AS(Generator::load(dir / "model.ckpt"), IoError);
  std::filesystem::remove_all(dir);
}
