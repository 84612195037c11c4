#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "data.hpp"
#include "model.hpp"

namespace wdistill {

// Fraction of unmasked positions where predicted == gold.
double token_accuracy(std::span<const int> predicted, std::span<const int> gold, std::span<const std::uint8_t> mask);
// Same, taking the argmax over the last axis of logits ([rows, cols, vocab]).
double token_accuracy(const Tensor& logits, const TokenGrid& gold);
std::vector<int> argmax_rows(const Tensor& logits);

// Corpus-level BLEU in [0, 100]: clipped n-gram counts summed over the corpus,
// geometric mean of the n-gram precisions, brevity penalty. No smoothing.
double corpus_bleu(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs,
                   std::size_t max_n = 4);

struct BenchResult {
  std::vector<double> per_run;  // sentences per second
  double median = 0.0;
  std::size_t sentences = 0;
};

// Greedy-decodes the sample `repeats` times after one untimed warm-up pass.
BenchResult bench_decode(const TransformerParams& params, const ModelConfig& cfg,
                         const std::vector<std::vector<int>>& sources, std::size_t repeats,
                         std::size_t batch_size = 25);

struct EvalReport {
  double token_accuracy = 0.0;
  double bleu = 0.0;
  double sentences_per_second = 0.0;
  std::size_t params_count = 0;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Teacher-forced token accuracy plus BLEU and throughput of a greedy decode
// over the corpus.
EvalReport evaluate(const TransformerParams& params, const ModelConfig& cfg, const Corpus& corpus,
                    std::size_t batch_size = 64);

// Mean ground-truth cross-entropy over a corpus, no gradient.
double corpus_loss(const TransformerParams& params, const ModelConfig& cfg, const Corpus& corpus,
                   std::size_t batch_size = 64);

}  // namespace wdistill
