#include <doctest.h>

#include <cmath>
#include <random>

#include "error.hpp"
#include "metrics.hpp"
#include "oracles.hpp"

using namespace wdistill;

TEST_CASE("BLEU of identical corpora is 100") {
  const std::vector<std::vector<int>> refs{{3, 4, 5, 6, 7}, {8, 9, 3, 4}, {5, 5, 5, 5, 5, 5}};
  CHECK(corpus_bleu(refs, refs) == 100.0);
  auto more = refs;
  more.push_back({3, 3, 4, 4});
  CHECK(corpus_bleu(more, more) == 100.0);
}

TEST_CASE("BLEU edge cases") {
  const std::vector<std::vector<int>> refs{{3, 4, 5, 6}, {7, 8, 9, 3}};
  CHECK(corpus_bleu({{}, {}}, refs) == 0.0);
  CHECK(corpus_bleu({{3, 4, 5, 6}, {9, 9, 9, 9}}, refs) < 100.0);
  CHECK_THROWS_AS(corpus_bleu({{3}}, refs), ShapeError);
  CHECK_THROWS_AS(corpus_bleu({{3}}, {{}}), ShapeError);
}

TEST_CASE("BLEU on a hand-built pair of sentences") {
  // Hyp 1 has 7 tokens (6 unigram matches, one repeated 5 clipped), hyp 2 is short.
  const std::vector<std::vector<int>> hyps{{3, 4, 5, 5, 6, 7, 8}, {9, 10, 11, 12}};
  const std::vector<std::vector<int>> refs{{3, 4, 5, 6, 7, 8, 9}, {9, 10, 11, 12, 13}};
  // Matches / totals by order: 1: (6+4)/11, 2: (5+3)/9, 3: (3+2)/7, 4: (1+1)/5.
  const double by_hand =
      100.0 * std::exp(1.0 - 12.0 / 11.0) *
      std::exp((std::log(10.0 / 11.0) + std::log(8.0 / 9.0) + std::log(5.0 / 7.0) + std::log(2.0 / 5.0)) / 4.0);
  CHECK(std::abs(corpus_bleu(hyps, refs) - by_hand) < 1e-6);
  CHECK(std::abs(corpus_bleu(hyps, refs) - testing::brute_force_bleu(hyps, refs)) < 1e-6);
}

TEST_CASE("BLEU agrees with the brute-force tally on random corpora") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> tok(3, 6), len(4, 9);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::vector<int>> hyps(5), refs(5);
    for (std::size_t i = 0; i < 5; ++i) {
      for (int k = len(rng); k > 0; --k) refs[i].push_back(tok(rng));
      for (int k = len(rng); k > 0; --k) hyps[i].push_back(tok(rng));
    }
    CHECK(std::abs(corpus_bleu(hyps, refs) - testing::brute_force_bleu(hyps, refs)) < 1e-9);
  }
}

TEST_CASE("token accuracy") {
  const std::vector<int> gold{3, 4, 5, 6};
  const std::vector<std::uint8_t> mask{1, 1, 1, 0};
  CHECK(token_accuracy(gold, gold, mask) == 1.0);
  CHECK(token_accuracy(std::vector<int>{4, 5, 6, 6}, gold, mask) == 0.0);
  CHECK(token_accuracy(std::vector<int>{3, 5, 5, 0}, gold, mask) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(token_accuracy(std::vector<int>{3}, gold, mask), ShapeError);
}

TEST_CASE("argmax accuracy of random logits is one in four") {
  const std::size_t n = 40000, v = 4;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> g(0, 3);
  std::vector<double> logits(n * v);
  for (auto& x : logits) x = z(rng);
  TokenGrid gold;
  gold.rows = 1;
  gold.cols = n;
  gold.ids.resize(n);
  gold.mask.assign(n, 1);
  for (auto& id : gold.ids) id = g(rng);
  const double acc = token_accuracy(Tensor::from_data({1, n, v}, logits), gold);
  const double sigma = std::sqrt(0.25 * 0.75 / static_cast<double>(n));
  CHECK(std::abs(acc - 0.25) < 3.0 * sigma);
}

TEST_CASE("decode benchmark reports each repeat") {
  ModelConfig cfg;
  cfg.width = 8;
  cfg.ffn_hidden = 16;
  cfg.heads = 2;
  cfg.max_len = 6;
  const auto p = init_params(cfg, 1);
  const auto sources = gen_synthetic(Task::Reverse, 20, 2, 5, cfg.vocab, 1).sources();
  const auto r = bench_decode(p, cfg, sources, 5);
  CHECK(r.per_run.size() == 5);
  CHECK(r.sentences == 20);
  CHECK(r.median > 0.0);
  for (double s : r.per_run) CHECK(s > 0.0);
  CHECK_THROWS_AS(bench_decode(p, cfg, {}, 5), ConfigError);
  CHECK_THROWS_AS(bench_decode(p, cfg, sources, 0), ConfigError);
}

TEST_CASE("evaluation report") {
  ModelConfig cfg;
  cfg.width = 8;
  cfg.ffn_hidden = 16;
  cfg.heads = 2;
  cfg.max_len = 8;
  const auto p = init_params(cfg, 2);
  const auto corpus = gen_synthetic(Task::Copy, 30, 2, 5, cfg.vocab, 2);
  const auto report = evaluate(p, cfg, corpus);
  CHECK(report.token_accuracy >= 0.0);
  CHECK(report.token_accuracy <= 1.0);
  CHECK(report.bleu >= 0.0);
  CHECK(report.bleu <= 100.0);
  CHECK(report.sentences_per_second > 0.0);
  CHECK(report.params_count == param_count(cfg));
  const auto j = report.to_json();
  CHECK(j.at("config").at("model").at("width") == 8);
  CHECK(corpus_loss(p, cfg, corpus) > 0.0);
}
