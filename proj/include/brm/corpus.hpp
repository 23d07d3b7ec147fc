#pragma once

// CoNLL-U ingestion, tree validation, projectivity and k-fold splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "brm/error.hpp"
#include "brm/random.hpp"

namespace brm {

struct Token {
  int id = 0;  // 1-based position in the sentence
  std::string form;
  std::string lemma = "_";
  std::string upos = "_";
  std::string xpos = "_";
  std::string feats = "_";
  int head = 0;  // 0 = root
  std::string deprel = "_";
  std::string deps = "_";
  std::string misc = "_";

  bool operator==(const Token&) const = default;
};

struct Sentence {
  std::vector<std::string> comments;  // "# ..." lines, verbatim
  std::vector<Token> tokens;

  int n() const { return static_cast<int>(tokens.size()); }
  bool operator==(const Sentence&) const = default;
};

struct CorpusSplit {
  int fold_id = 0;
  std::vector<std::size_t> train;  // indices into the source corpus
  std::vector<std::size_t> dev;
  std::vector<std::size_t> test;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  long long v = 0;
  for (char ch : s) {
    if (ch < '0' || ch > '9') return false;
    v = v * 10 + (ch - '0');
    if (v > 1'000'000'000) return false;
  }
  out = static_cast<int>(v);
  return true;
}

}  // namespace detail

// Throws ValidationError unless ids are 1..n, heads are in [0, n], no token
// heads itself and the head relation is acyclic.
inline void validate(const Sentence& s) {
  const int n = s.n();
  for (int i = 0; i < n; ++i) {
    const Token& t = s.tokens[i];
    if (t.id != i + 1)
      throw ValidationError("token ids must be contiguous from 1 (got " +
                            std::to_string(t.id) + " at position " +
                            std::to_string(i + 1) + ")");
    if (t.head < 0 || t.head > n)
      throw ValidationError("head " + std::to_string(t.head) +
                            " out of range for token " + std::to_string(t.id));
    if (t.head == t.id)
      throw ValidationError("token " + std::to_string(t.id) + " heads itself");
  }
  // Walk up from every token; a path longer than n means a cycle.
  for (int i = 1; i <= n; ++i) {
    int cur = i;
    for (int steps = 0; cur != 0; ++steps) {
      if (steps > n)
        throw ValidationError("cycle through token " + std::to_string(i));
      cur = s.tokens[cur - 1].head;
    }
  }
}

inline std::vector<Sentence> parse_conllu(std::istream& in) {
  std::vector<Sentence> out;
  Sentence cur;
  std::size_t block_start = 0;
  auto flush = [&] {
    if (!cur.tokens.empty()) {
      try {
        validate(cur);
      } catch (const ValidationError& e) {
        throw ValidationError("sentence starting at line " +
                              std::to_string(block_start) + ": " + e.what());
      }
      out.push_back(std::move(cur));
    }
    cur = Sentence{};
    block_start = 0;
  };

  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (line.empty()) {
      flush();
      continue;
    }
    if (block_start == 0) block_start = lineno;
    if (line.front() == '#') {
      cur.comments.emplace_back(line);
      continue;
    }
    auto cols = detail::split_tabs(line);
    if (cols.size() != 10)
      throw ParseError(lineno, "expected 10 tab-separated columns, got " +
                                   std::to_string(cols.size()));
    // Multiword ranges ("3-4") and empty nodes ("5.1") are not words.
    if (cols[0].find_first_of("-.") != std::string_view::npos) continue;

    Token t;
    if (!detail::parse_int(cols[0], t.id))
      throw ParseError(lineno, "non-integer ID '" + std::string(cols[0]) + "'");
    if (!detail::parse_int(cols[6], t.head))
      throw ParseError(lineno,
                       "non-integer HEAD '" + std::string(cols[6]) + "'");
    t.form = cols[1];
    t.lemma = cols[2];
    t.upos = cols[3];
    t.xpos = cols[4];
    t.feats = cols[5];
    t.deprel = cols[7];
    t.deps = cols[8];
    t.misc = cols[9];
    cur.tokens.push_back(std::move(t));
  }
  flush();
  return out;
}

inline std::vector<Sentence> parse_conllu(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_conllu(in);
}

inline void write_conllu(std::ostream& out, const std::vector<Sentence>& corpus) {
  for (const auto& s : corpus) {
    for (const auto& c : s.comments) out << c << '\n';
    for (const auto& t : s.tokens) {
      out << t.id << '\t' << t.form << '\t' << t.lemma << '\t' << t.upos << '\t'
          << t.xpos << '\t' << t.feats << '\t' << t.head << '\t' << t.deprel
          << '\t' << t.deps << '\t' << t.misc << '\n';
    }
    out << '\n';
  }
}

inline std::string to_conllu(const std::vector<Sentence>& corpus) {
  std::ostringstream out;
  write_conllu(out, corpus);
  return out.str();
}

inline std::vector<int> heads_of(const Sentence& s) {
  std::vector<int> h;
  h.reserve(s.tokens.size());
  for (const auto& t : s.tokens) h.push_back(t.head);
  return h;
}

// True iff no two arcs cross when drawn above the sentence with the root at
// position 0. Arcs (a,b) and (c,d), normalised so a<b and c<d, cross iff
// a<c<b<d or c<a<d<b.
inline bool is_projective(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  std::vector<std::pair<int, int>> arcs;
  arcs.reserve(n);
  for (int d = 1; d <= n; ++d) {
    int h = heads[d - 1];
    arcs.emplace_back(std::min(h, d), std::max(h, d));
  }
  for (std::size_t i = 0; i < arcs.size(); ++i) {
    for (std::size_t j = i + 1; j < arcs.size(); ++j) {
      auto [a, b] = arcs[i];
      auto [c, d] = arcs[j];
      if ((a < c && c < b && b < d) || (c < a && a < d && d < b)) return false;
    }
  }
  return true;
}

inline bool is_projective(const Sentence& s) { return is_projective(heads_of(s)); }

struct Proportions {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

// Shuffles sentence indices with `seed`, partitions them into `folds`
// near-equal contiguous chunks, and for fold f takes the test set from the
// start of chunk f, the dev set from what follows (cyclically), and leaves
// the rest for training.
inline std::vector<CorpusSplit> kfold_split(std::size_t corpus_size, int folds,
                                            std::uint64_t seed,
                                            Proportions p = {}) {
  if (folds < 2) throw UsageError("kfold_split: folds must be >= 2");
  if (std::abs(p.train + p.dev + p.test - 1.0) > 1e-9 || p.train < 0 ||
      p.dev < 0 || p.test < 0)
    throw UsageError("kfold_split: proportions must be non-negative and sum to 1");
  if (corpus_size < static_cast<std::size_t>(folds))
    throw UsageError("kfold_split: corpus has " + std::to_string(corpus_size) +
                     " sentences, fewer than " + std::to_string(folds) + " folds");
  const double cover = p.test * folds;
  if (cover > 1.0 + 1e-9)
    throw UsageError("kfold_split: test proportion exceeds 1/folds, test sets would overlap");

  std::vector<std::size_t> order(corpus_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n = corpus_size;
  const auto rounded = [n](double frac) {
    return static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
  };
  std::vector<std::size_t> chunk_start(folds + 1);
  for (int f = 0; f <= folds; ++f) chunk_start[f] = n * f / folds;

  std::vector<CorpusSplit> out;
  for (int f = 0; f < folds; ++f) {
    const std::size_t chunk = chunk_start[f + 1] - chunk_start[f];
    std::size_t n_test = cover >= 1.0 - 1e-9 ? chunk : std::min(chunk, rounded(p.test));
    std::size_t n_dev = std::min(rounded(p.dev), n - n_test);
    CorpusSplit split;
    split.fold_id = f;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t idx = order[(chunk_start[f] + i) % n];
      if (i < n_test)
        split.test.push_back(idx);
      else if (i < n_test + n_dev)
        split.dev.push_back(idx);
      else
        split.train.push_back(idx);
    }
    out.push_back(std::move(split));
  }
  return out;
}

template <typename T>
std::vector<T> select(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items.at(i));
  return out;
}

// 64-bit FNV-1a, used to fingerprint corpora in run manifests.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace brm
