#include "data.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "error.hpp"

namespace wdistill {

const char* task_name(Task task) {
  switch (task) {
    case Task::Copy: return "copy";
    case Task::Reverse: return "reverse";
    case Task::Sort: return "sort";
    case Task::File: return "file";
  }
  return "?";
}

Task task_from_name(const std::string& name) {
  for (Task t : {Task::Copy, Task::Reverse, Task::Sort, Task::File}) {
    if (name == task_name(t)) return t;
  }
  throw ConfigError("unknown task '" + name + "'");
}

std::vector<std::vector<int>> Corpus::sources() const {
  std::vector<std::vector<int>> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.src);
  return out;
}

std::vector<std::vector<int>> Corpus::references() const {
  std::vector<std::vector<int>> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.emplace_back(p.tgt.begin(), p.tgt.end() - 1);
  return out;
}

void Corpus::validate() const {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.tgt.empty() || p.tgt.back() != kEos) {
      throw ConfigError("pair " + std::to_string(i) + ": target does not end with EOS");
    }
    if (p.src.empty()) throw ConfigError("pair " + std::to_string(i) + ": empty source");
    for (const auto* seq : {&p.src, &p.tgt}) {
      for (int id : *seq) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
          throw ConfigError("pair " + std::to_string(i) + ": id " + std::to_string(id) + " outside vocab " +
                            std::to_string(vocab));
        }
      }
    }
  }
}

Corpus gen_synthetic(Task task, std::size_t n, std::size_t min_len, std::size_t max_len, std::size_t vocab,
                     std::uint64_t seed) {
  if (task == Task::File) throw ConfigError("file corpora are loaded, not generated");
  if (min_len == 0 || min_len > max_len) throw ConfigError("invalid length range");
  if (vocab < static_cast<std::size_t>(kFirstSymbol) + 2) {
    throw ConfigError("vocab " + std::to_string(vocab) + " leaves fewer than two symbols after the reserved ids");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len_dist(min_len, max_len);
  std::uniform_int_distribution<int> sym_dist(kFirstSymbol, static_cast<int>(vocab) - 1);
  Corpus c{task, vocab, {}};
  c.pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SequencePair p;
    p.src.resize(len_dist(rng));
    for (auto& s : p.src) s = sym_dist(rng);
    p.tgt = p.src;
    if (task == Task::Reverse) std::reverse(p.tgt.begin(), p.tgt.end());
    if (task == Task::Sort) std::sort(p.tgt.begin(), p.tgt.end());
    p.tgt.push_back(kEos);
    c.pairs.push_back(std::move(p));
  }
  return c;
}

namespace {

std::vector<int> parse_ids(const std::string& text, const std::string& where) {
  std::istringstream is(text);
  std::vector<int> ids;
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      ids.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw IoError(where + ": bad token '" + tok + "'");
    }
  }
  return ids;
}

void write_ids(std::ostream& os, const std::vector<int>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? " " : "") << ids[i];
}

}  // namespace

Corpus load_tsv(const std::filesystem::path& path, std::size_t vocab) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open corpus " + path.string());
  Corpus c{Task::File, vocab, {}};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (tab == std::string::npos) throw IoError(where + ": missing tab separator");
    SequencePair p{parse_ids(line.substr(0, tab), where), parse_ids(line.substr(tab + 1), where)};
    if (p.tgt.empty() || p.tgt.back() != kEos) p.tgt.push_back(kEos);
    c.pairs.push_back(std::move(p));
  }
  c.validate();
  return c;
}

void save_tsv(const std::filesystem::path& path, const Corpus& corpus) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write corpus " + path.string());
  for (const auto& p : corpus.pairs) {
    write_ids(os, p.src);
    os << '\t';
    write_ids(os, p.tgt);
    os << '\n';
  }
}

Batch Batch::from_pairs(const std::vector<SequencePair>& pairs, std::vector<std::size_t> pair_index) {
  std::vector<std::vector<int>> src, tgt_in, tgt_out;
  for (const auto& p : pairs) {
    src.push_back(p.src);
    std::vector<int> in{kBos};
    in.insert(in.end(), p.tgt.begin(), p.tgt.end() - 1);
    tgt_in.push_back(std::move(in));
    tgt_out.push_back(p.tgt);
  }
  if (pair_index.empty()) {
    for (std::size_t i = 0; i < pairs.size(); ++i) pair_index.push_back(i);
  }
  return {TokenGrid::from_sequences(src), TokenGrid::from_sequences(tgt_in), TokenGrid::from_sequences(tgt_out),
          std::move(pair_index)};
}

BatchStream::BatchStream(const Corpus& corpus, std::size_t batch_size, std::size_t max_len, std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  for (const auto& p : corpus.pairs) {
    if (p.src.size() > max_len || p.tgt.size() > max_len) {
      ++dropped_;
    } else {
      kept_.push_back(p);
    }
  }
  if (dropped_ > 0) spdlog::warn("dropped {} of {} pairs longer than {} tokens", dropped_, corpus.size(), max_len);
  if (kept_.empty()) throw ConfigError("corpus is empty after length filtering");
}

std::size_t BatchStream::batches_per_epoch() const { return (kept_.size() + batch_size_ - 1) / batch_size_; }

std::vector<Batch> BatchStream::chunk(const std::vector<std::size_t>& order) const {
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    std::vector<SequencePair> part;
    std::vector<std::size_t> index;
    for (std::size_t i = start; i < std::min(order.size(), start + batch_size_); ++i) {
      part.push_back(kept_[order[i]]);
      index.push_back(order[i]);
    }
    out.push_back(Batch::from_pairs(part, std::move(index)));
  }
  return out;
}

std::vector<Batch> BatchStream::epoch(std::size_t index) const {
  std::vector<std::size_t> order(kept_.size());
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return chunk(order);
}

std::vector<Batch> BatchStream::in_order() const {
  std::vector<std::size_t> order(kept_.size());
  std::iota(order.begin(), order.end(), 0);
  return chunk(order);
}

}  // namespace wdistill
