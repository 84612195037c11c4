#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "model.hpp"

namespace wdistill {

enum class Task : std::uint8_t { Copy, Reverse, Sort, File };

const char* task_name(Task task);
Task task_from_name(const std::string& name);

struct SequencePair {
  std::vector<int> src;
  std::vector<int> tgt;  // ends with EOS

  bool operator==(const SequencePair&) const = default;
  auto operator<=>(const SequencePair&) const = default;
};

struct Corpus {
  Task task = Task::File;
  std::size_t vocab = 0;
  std::vector<SequencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  std::vector<std::vector<int>> sources() const;
  // Targets with the trailing EOS removed.
  std::vector<std::vector<int>> references() const;
  void validate() const;
};

// Symbols are drawn uniformly from [kFirstSymbol, vocab); lengths uniformly
// from [min_len, max_len].
Corpus gen_synthetic(Task task, std::size_t n, std::size_t min_len, std::size_t max_len, std::size_t vocab,
                     std::uint64_t seed);

// One pair per line: space-separated source ids, a tab, space-separated
// target ids. A missing trailing EOS on the target is appended on load.
Corpus load_tsv(const std::filesystem::path& path, std::size_t vocab);
void save_tsv(const std::filesystem::path& path, const Corpus& corpus);

// Decoder input is BOS followed by the target shifted right; the output grid
// is the target itself. All three grids share the padding layout of their
// own sequences.
struct Batch {
  TokenGrid src;
  TokenGrid tgt_in;
  TokenGrid tgt_out;
  std::vector<std::size_t> pair_index;  // positions in the originating pair list

  std::size_t rows() const { return src.rows; }
  static Batch from_pairs(const std::vector<SequencePair>& pairs, std::vector<std::size_t> pair_index = {});
};

class BatchStream {
 public:
  // Pairs whose source or target exceeds max_len are dropped (and counted).
  // Throws ConfigError if nothing survives or batch_size is zero.
  BatchStream(const Corpus& corpus, std::size_t batch_size, std::size_t max_len, std::uint64_t seed);

  std::size_t dropped() const { return dropped_; }
  const std::vector<SequencePair>& kept() const { return kept_; }
  std::size_t batches_per_epoch() const;

  // Shuffled with a seed derived from (seed, epoch).
  std::vector<Batch> epoch(std::size_t index) const;
  // Corpus order, no shuffling.
  std::vector<Batch> in_order() const;

 private:
  std::vector<Batch> chunk(const std::vector<std::size_t>& order) const;

  std::vector<SequencePair> kept_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t dropped_ = 0;
};

}  // namespace wdistill
