// Apache License, Version 2.0, refer to LICENSE.txt

// Bag-of-words corpora partitioned into epochs.
//
// docword: three header lines D, V, NNZ, then NNZ lines "docID wordID count"
// with 1-based ids and docID non-decreasing. vocab: one token per line.
// epochs: lines "docID epochIndex", epoch 0-based, one per document.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dhnrm/random.hpp"

namespace dhnrm {

/// Malformed or inconsistent input; message carries file and line.
class corpus_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Document {
  std::size_t id = 0;  // 1-based id in the source file
  std::size_t epoch = 0;
  std::vector<std::pair<int, int>> entries;  // (0-based word, count), file order

  long length() const {
    long n = 0;
    for (const auto& e : entries) n += e.second;
    return n;
  }
  /// Word indices with multiplicity, in file order.
  std::vector<int> tokens() const {
    std::vector<int> out;
    for (const auto& [w, c] : entries) out.insert(out.end(), static_cast<std::size_t>(c), w);
    return out;
  }
};

struct Corpus {
  std::vector<std::string> vocabulary;
  std::size_t num_epochs = 0;
  std::vector<Document> documents;

  std::size_t vocab_size() const { return vocabulary.size(); }

  std::vector<std::size_t> docs_in_epoch(std::size_t m) const {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < documents.size(); ++d)
      if (documents[d].epoch == m) out.push_back(d);
    return out;
  }

  long total_words() const {
    long n = 0;
    for (const auto& d : documents) n += d.length();
    return n;
  }

  /// FNV-1a over the vocabulary, used to match checkpoints to corpora.
  std::uint64_t vocab_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& w : vocabulary) {
      for (unsigned char c : w) h = (h ^ c) * 1099511628211ULL;
      h = (h ^ 0x0a) * 1099511628211ULL;
    }
    return h;
  }
};

namespace detail {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw corpus_error("cannot open " + path);
  return in;
}

[[noreturn]] inline void fail_at(const std::string& path, std::size_t line, const std::string& msg) {
  throw corpus_error(path + ":" + std::to_string(line) + ": " + msg);
}

// Whitespace-separated nonnegative integers; exactly `n` of them.
inline std::vector<long long> parse_ints(const std::string& text, std::size_t n,
                                         const std::string& path, std::size_t line) {
  std::istringstream is(text);
  std::vector<long long> out;
  std::string tok;
  while (is >> tok) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(tok, &used);
    } catch (const std::exception&) {
      fail_at(path, line, "expected integer, got '" + tok + "'");
    }
    if (used != tok.size()) fail_at(path, line, "expected integer, got '" + tok + "'");
    out.push_back(v);
  }
  if (out.size() != n)
    fail_at(path, line, "expected " + std::to_string(n) + " fields, got " + std::to_string(out.size()));
  return out;
}

inline bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace detail

inline Corpus load_corpus(const std::string& docword_path, const std::string& vocab_path,
                          const std::string& epochs_path) {
  Corpus c;
  {
    auto in = detail::open_input(vocab_path);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      c.vocabulary.push_back(line);
    }
  }

  auto in = detail::open_input(docword_path);
  std::string line;
  std::size_t lineno = 0;
  long long header[3];
  for (int h = 0; h < 3; ++h) {
    if (!std::getline(in, line)) detail::fail_at(docword_path, lineno + 1, "truncated header");
    ++lineno;
    header[h] = detail::parse_ints(line, 1, docword_path, lineno)[0];
    if (header[h] < 0) detail::fail_at(docword_path, lineno, "negative header value");
  }
  const long long D = header[0], V = header[1], nnz = header[2];
  if (static_cast<long long>(c.vocabulary.size()) != V)
    throw corpus_error(docword_path + ": header V=" + std::to_string(V) + " but " + vocab_path +
                       " has " + std::to_string(c.vocabulary.size()) + " tokens");
  c.documents.resize(static_cast<std::size_t>(D));
  for (std::size_t d = 0; d < c.documents.size(); ++d) c.documents[d].id = d + 1;

  long long seen = 0, last_doc = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    auto f = detail::parse_ints(line, 3, docword_path, lineno);
    if (f[0] < 1 || f[0] > D)
      detail::fail_at(docword_path, lineno, "document id " + std::to_string(f[0]) + " out of range");
    if (f[1] < 1 || f[1] > V)
      detail::fail_at(docword_path, lineno, "word id " + std::to_string(f[1]) + " out of range");
    if (f[2] < 1) detail::fail_at(docword_path, lineno, "count must be positive");
    if (f[0] < last_doc) detail::fail_at(docword_path, lineno, "document ids not ascending");
    last_doc = f[0];
    c.documents[f[0] - 1].entries.emplace_back(static_cast<int>(f[1] - 1), static_cast<int>(f[2]));
    ++seen;
  }
  if (seen != nnz)
    throw corpus_error(docword_path + ": header NNZ=" + std::to_string(nnz) + " but found " +
                       std::to_string(seen) + " entries");

  auto ein = detail::open_input(epochs_path);
  std::vector<bool> labelled(c.documents.size(), false);
  lineno = 0;
  while (std::getline(ein, line)) {
    ++lineno;
    if (detail::blank(line)) continue;
    auto f = detail::parse_ints(line, 2, epochs_path, lineno);
    if (f[0] < 1 || f[0] > D)
      detail::fail_at(epochs_path, lineno, "document id " + std::to_string(f[0]) + " out of range");
    if (f[1] < 0) detail::fail_at(epochs_path, lineno, "negative epoch");
    if (labelled[f[0] - 1])
      detail::fail_at(epochs_path, lineno, "document " + std::to_string(f[0]) + " labelled twice");
    labelled[f[0] - 1] = true;
    c.documents[f[0] - 1].epoch = static_cast<std::size_t>(f[1]);
    c.num_epochs = std::max(c.num_epochs, static_cast<std::size_t>(f[1]) + 1);
  }
  for (std::size_t d = 0; d < labelled.size(); ++d)
    if (!labelled[d])
      throw corpus_error(epochs_path + ": document " + std::to_string(d + 1) + " has no epoch label");
  return c;
}

/// Canonical form: documents renumbered 1..D in stored order.
inline void write_corpus(const Corpus& c, const std::string& docword_path,
                         const std::string& vocab_path, const std::string& epochs_path) {
  std::ofstream dw(docword_path), vo(vocab_path), ep(epochs_path);
  if (!dw || !vo || !ep) throw corpus_error("cannot write corpus near " + docword_path);
  std::size_t nnz = 0;
  for (const auto& d : c.documents) nnz += d.entries.size();
  dw << c.documents.size() << '\n' << c.vocabulary.size() << '\n' << nnz << '\n';
  for (std::size_t d = 0; d < c.documents.size(); ++d)
    for (const auto& [w, n] : c.documents[d].entries) dw << d + 1 << ' ' << w + 1 << ' ' << n << '\n';
  for (const auto& w : c.vocabulary) vo << w << '\n';
  for (std::size_t d = 0; d < c.documents.size(); ++d)
    ep << d + 1 << ' ' << c.documents[d].epoch << '\n';
}

/// Per-epoch document split: floor(fraction * n_m) documents of epoch m go
/// to the test side, chosen by a seeded shuffle. Both sides keep file order.
inline std::pair<Corpus, Corpus> split(const Corpus& c, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split: test fraction must lie in [0, 1)");
  std::vector<bool> to_test(c.documents.size(), false);
  Rng base(seed, 0x5b117);
  for (std::size_t m = 0; m < c.num_epochs; ++m) {
    auto idx = c.docs_in_epoch(m);
    Rng rng = base.substream(m);
    for (std::size_t i = idx.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
      std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
    const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * idx.size()));
    for (std::size_t i = 0; i < n_test; ++i) to_test[idx[i]] = true;
  }
  Corpus train, test;
  train.vocabulary = test.vocabulary = c.vocabulary;
  train.num_epochs = test.num_epochs = c.num_epochs;
  for (std::size_t d = 0; d < c.documents.size(); ++d)
    (to_test[d] ? test : train).documents.push_back(c.documents[d]);
  return {std::move(train), std::move(test)};
}

}  // namespace dhnrm
