#include "metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include "checkpoint.hpp"
#include "error.hpp"
#include "ops.hpp"

namespace wdistill {

double token_accuracy(std::span<const int> predicted, std::span<const int> gold, std::span<const std::uint8_t> mask) {
  if (predicted.size() != gold.size() || mask.size() != gold.size()) {
    throw ShapeError("token_accuracy: prediction, gold and mask sizes differ");
  }
  std::size_t total = 0, hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!mask[i]) continue;
    ++total;
    if (predicted[i] == gold[i]) ++hit;
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t v = logits.shape().back();
  auto d = logits.data();
  std::vector<int> out(logits.size() / v);
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* row = d.data() + r * v;
    out[r] = static_cast<int>(std::max_element(row, row + v) - row);
  }
  return out;
}

double token_accuracy(const Tensor& logits, const TokenGrid& gold) {
  if (logits.size() / logits.shape().back() != gold.ids.size()) {
    throw ShapeError("token_accuracy: logits " + shape_to_string(logits.shape()) + " do not cover a " +
                     std::to_string(gold.rows) + "x" + std::to_string(gold.cols) + " grid");
  }
  const auto pred = argmax_rows(logits);
  return token_accuracy(pred, gold.ids, gold.mask);
}

namespace {

using NgramCounts = std::map<std::vector<int>, std::size_t>;

NgramCounts ngrams(const std::vector<int>& seq, std::size_t n) {
  NgramCounts counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) ++counts[std::vector<int>(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs,
                   std::size_t max_n) {
  if (hyps.size() != refs.size()) {
    throw ShapeError("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses for " +
                     std::to_string(refs.size()) + " references");
  }
  if (refs.empty()) throw ShapeError("corpus_bleu: empty reference set");
  if (max_n == 0) throw ConfigError("corpus_bleu: max_n must be positive");
  std::vector<std::size_t> matched(max_n, 0), proposed(max_n, 0);
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    if (refs[s].empty()) throw ShapeError("corpus_bleu: reference " + std::to_string(s) + " is empty");
    hyp_len += hyps[s].size();
    ref_len += refs[s].size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto h = ngrams(hyps[s], n);
      const auto r = ngrams(refs[s], n);
      for (const auto& [gram, count] : h) {
        proposed[n - 1] += count;
        auto it = r.find(gram);
        if (it != r.end()) matched[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_precision = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (matched[n] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matched[n]) / static_cast<double>(proposed[n]));
  }
  log_precision /= static_cast<double>(max_n);
  const double bp = hyp_len < ref_len ? 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len) : 0.0;
  return 100.0 * std::exp(log_precision + bp);
}

namespace {

std::vector<std::vector<int>> decode_all(const TransformerParams& params, const ModelConfig& cfg,
                                         const std::vector<std::vector<int>>& sources, std::size_t batch_size) {
  std::vector<std::vector<int>> out;
  out.reserve(sources.size());
  for (std::size_t start = 0; start < sources.size(); start += batch_size) {
    std::vector<std::vector<int>> chunk(sources.begin() + start,
                                        sources.begin() + std::min(sources.size(), start + batch_size));
    for (auto& h : greedy_decode(params, cfg, TokenGrid::from_sequences(chunk), cfg.max_len)) {
      out.push_back(std::move(h));
    }
  }
  return out;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

BenchResult bench_decode(const TransformerParams& params, const ModelConfig& cfg,
                         const std::vector<std::vector<int>>& sources, std::size_t repeats, std::size_t batch_size) {
  if (sources.empty()) throw ConfigError("bench_decode: empty sample");
  if (repeats == 0) throw ConfigError("bench_decode: repeats must be at least 1");
  if (batch_size == 0) throw ConfigError("bench_decode: batch size must be at least 1");
  decode_all(params, cfg, sources, batch_size);
  BenchResult res;
  res.sentences = sources.size();
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    decode_all(params, cfg, sources, batch_size);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    res.per_run.push_back(static_cast<double>(sources.size()) / std::max(dt.count(), 1e-9));
  }
  res.median = median_of(res.per_run);
  return res;
}

nlohmann::json EvalReport::to_json() const {
  return {{"token_accuracy", token_accuracy},
          {"bleu", bleu},
          {"sentences_per_second", sentences_per_second},
          {"params_count", params_count},
          {"config", config}};
}

std::string EvalReport::csv_header() { return "token_accuracy,bleu,sentences_per_second,params_count"; }

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << token_accuracy << ',' << bleu << ',' << sentences_per_second << ',' << params_count;
  return os.str();
}

EvalReport evaluate(const TransformerParams& params, const ModelConfig& cfg, const Corpus& corpus,
                    std::size_t batch_size) {
  if (corpus.empty()) throw ConfigError("evaluate: empty corpus");
  NoGradGuard no_grad;
  std::size_t total = 0, hit = 0;
  for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
    std::vector<SequencePair> part(corpus.pairs.begin() + start,
                                   corpus.pairs.begin() + std::min(corpus.size(), start + batch_size));
    Batch b = Batch::from_pairs(part);
    const auto pred = argmax_rows(forward(params, cfg, b.src, b.tgt_in));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (!b.tgt_out.mask[i]) continue;
      ++total;
      if (pred[i] == b.tgt_out.ids[i]) ++hit;
    }
  }
  EvalReport rep;
  rep.token_accuracy = static_cast<double>(hit) / static_cast<double>(total);
  const auto sources = corpus.sources();
  const auto t0 = std::chrono::steady_clock::now();
  const auto hyps = decode_all(params, cfg, sources, batch_size);
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  rep.sentences_per_second = static_cast<double>(sources.size()) / std::max(dt.count(), 1e-9);
  rep.bleu = corpus_bleu(hyps, corpus.references());
  rep.params_count = params.total_elements();
  rep.config = {{"model", model_config_to_json(cfg)}, {"eval_sentences", corpus.size()}};
  return rep;
}

double corpus_loss(const TransformerParams& params, const ModelConfig& cfg, const Corpus& corpus,
                   std::size_t batch_size) {
  if (corpus.empty()) throw ConfigError("corpus_loss: empty corpus");
  NoGradGuard no_grad;
  double weighted = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
    std::vector<SequencePair> part(corpus.pairs.begin() + start,
                                   corpus.pairs.begin() + std::min(corpus.size(), start + batch_size));
    Batch b = Batch::from_pairs(part);
    Tensor logits = forward(params, cfg, b.src, b.tgt_in);
    const std::size_t n = b.tgt_out.ids.size();
    std::vector<double> onehot(n * cfg.vocab, 0.0);
    std::size_t active = 0;
    for (std::size_t i = 0; i < n; ++i) {
      onehot[i * cfg.vocab + static_cast<std::size_t>(b.tgt_out.ids[i])] = 1.0;
      active += b.tgt_out.mask[i];
    }
    const double loss = ops::softmax_cross_entropy(ops::reshape(logits, {n, cfg.vocab}),
                                                   Tensor::from_data({n, cfg.vocab}, std::move(onehot)),
                                                   b.tgt_out.mask)
                            .item();
    weighted += loss * static_cast<double>(active);
    tokens += active;
  }
  return weighted / static_cast<double>(tokens);
}

}  // namespace wdistill
