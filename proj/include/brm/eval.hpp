#pragma once

// UPOS accuracy, UAS, paired bootstrap resampling and statistics about the
// BACK actions found in decode traces.

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "brm/corpus.hpp"
#include "brm/error.hpp"
#include "brm/machine.hpp"
#include "brm/random.hpp"

namespace brm {

struct Metrics {
  long tokens = 0;
  long upos_correct = 0;
  long uas_correct = 0;

  double upos() const { return tokens ? static_cast<double>(upos_correct) / tokens : 0.0; }
  double uas() const { return tokens ? static_cast<double>(uas_correct) / tokens : 0.0; }

  Metrics& operator+=(const Metrics& o) {
    tokens += o.tokens;
    upos_correct += o.upos_correct;
    uas_correct += o.uas_correct;
    return *this;
  }
};

inline Metrics score_sentence(const Sentence& pred, const Sentence& gold) {
  if (pred.n() != gold.n())
    throw ValidationError("misaligned sentences: " + std::to_string(pred.n()) + " vs " + std::to_string(gold.n()) +
                          " tokens");
  Metrics m;
  for (int i = 0; i < gold.n(); ++i) {
    if (pred.tokens[i].form != gold.tokens[i].form)
      throw ValidationError("misaligned token " + std::to_string(i + 1) + ": '" + pred.tokens[i].form + "' vs '" +
                            gold.tokens[i].form + "'");
    ++m.tokens;
    m.upos_correct += pred.tokens[i].upos == gold.tokens[i].upos;
    m.uas_correct += pred.tokens[i].head == gold.tokens[i].head;
  }
  return m;
}

inline std::vector<Metrics> score_sentences(const std::vector<Sentence>& pred, const std::vector<Sentence>& gold) {
  if (pred.size() != gold.size())
    throw ValidationError("misaligned corpora: " + std::to_string(pred.size()) + " vs " +
                          std::to_string(gold.size()) + " sentences");
  std::vector<Metrics> out;
  out.reserve(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    try {
      out.push_back(score_sentence(pred[i], gold[i]));
    } catch (const ValidationError& e) {
      throw ValidationError("sentence " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

inline Metrics score(const std::vector<Sentence>& pred, const std::vector<Sentence>& gold) {
  Metrics total;
  for (const auto& m : score_sentences(pred, gold)) total += m;
  return total;
}

enum class MetricKind { Upos, Uas };

inline MetricKind parse_metric(std::string_view s) {
  if (s == "upos") return MetricKind::Upos;
  if (s == "uas") return MetricKind::Uas;
  throw UsageError("unknown metric '" + std::string(s) + "' (expected upos or uas)");
}

inline long correct_of(const Metrics& m, MetricKind k) { return k == MetricKind::Upos ? m.upos_correct : m.uas_correct; }

struct BootstrapResult {
  double score_a = 0.0;
  double score_b = 0.0;
  double p_value = 1.0;  // fraction of resamples where B >= A
  int resamples = 0;
};

// Paired bootstrap over sentences: resample the test set with replacement and
// count how often system B does at least as well as system A.
inline BootstrapResult paired_bootstrap(const std::vector<Sentence>& pred_a, const std::vector<Sentence>& pred_b,
                                        const std::vector<Sentence>& gold, MetricKind metric, int resamples = 10000,
                                        std::uint64_t seed = 1) {
  if (resamples < 1) throw UsageError("paired_bootstrap: resamples must be positive");
  auto a = score_sentences(pred_a, gold);
  auto b = score_sentences(pred_b, gold);
  BootstrapResult r;
  r.resamples = resamples;
  Metrics ta, tb;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ta += a[i];
    tb += b[i];
  }
  r.score_a = metric == MetricKind::Upos ? ta.upos() : ta.uas();
  r.score_b = metric == MetricKind::Upos ? tb.upos() : tb.uas();
  if (gold.empty()) return r;
  Rng rng(seed);
  long b_wins = 0;
  for (int s = 0; s < resamples; ++s) {
    long ca = 0, cb = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const std::size_t j = rng.below(gold.size());
      ca += correct_of(a[j], metric);
      cb += correct_of(b[j], metric);
    }
    // Token totals are identical for both systems, so counts compare directly.
    b_wins += cb >= ca;
  }
  r.p_value = static_cast<double>(b_wins) / resamples;
  return r;
}

// Per-sentence action trail with the reward of every action attached (as
// produced by an annotated decode). An action is correct when its reward is
// zero; BACK and NOBACK are not task predictions.
struct BackStats {
  long n_actions = 0;
  long n_errors = 0;          // incorrect TAG / parsing actions
  long n_error_segments = 0;  // word-level: segments holding at least one error
  long n_backs = 0;
  long backs_after_error = 0;
  long recalled_segments = 0;
  long cc = 0, ee = 0, ce = 0, ec = 0;
  bool defined = false;  // false when there are no BACK actions

  double b_prec() const { return n_backs ? static_cast<double>(backs_after_error) / n_backs : 0.0; }
  double b_rec() const { return n_error_segments ? static_cast<double>(recalled_segments) / n_error_segments : 0.0; }
  double ratio(long count) const { return n_backs ? static_cast<double>(count) / n_backs : 0.0; }

  BackStats& operator+=(const BackStats& o) {
    n_actions += o.n_actions;
    n_errors += o.n_errors;
    n_error_segments += o.n_error_segments;
    n_backs += o.n_backs;
    backs_after_error += o.backs_after_error;
    recalled_segments += o.recalled_segments;
    cc += o.cc;
    ee += o.ee;
    ce += o.ce;
    ec += o.ec;
    defined = n_backs > 0;
    return *this;
  }
};

namespace detail {

inline bool is_task_action(ActionKind k) { return k != ActionKind::Back && k != ActionKind::NoBack; }

}  // namespace detail

// A segment starts at a NOBACK and runs up to the next NOBACK or BACK of the
// trail. A BACK retracts exactly one segment (its `undone` list starts with
// that segment's NOBACK); its "before" state is whether that segment held an
// error, its "after" state is the next segment starting at the same word.
inline BackStats back_stats(const std::vector<Action>& history) {
  BackStats s;
  s.n_actions = static_cast<long>(history.size());
  const std::size_t h = history.size();
  // segment_error[i] for every NOBACK index i.
  std::vector<int> segment_error(h, 0);
  for (std::size_t i = 0; i < h; ++i) {
    if (history[i].kind != ActionKind::NoBack) continue;
    for (std::size_t j = i + 1; j < h && detail::is_task_action(history[j].kind); ++j)
      if (history[j].reward < 0) segment_error[i] = 1;
  }
  for (const auto& a : history)
    if (detail::is_task_action(a.kind) && a.reward < 0) ++s.n_errors;
  for (std::size_t i = 0; i < h; ++i)
    if (history[i].kind == ActionKind::NoBack) s.n_error_segments += segment_error[i];

  for (std::size_t i = 0; i < h; ++i) {
    const Action& a = history[i];
    if (a.kind != ActionKind::Back) continue;
    if (a.undone.empty() || history[a.undone.front()].kind != ActionKind::NoBack)
      throw ValidationError("back_stats: BACK at " + std::to_string(i) + " carries no undo record");
    const std::size_t seg = a.undone.front();
    const int word = history[seg].prev_word_index;
    const bool before_error = segment_error[seg];
    ++s.n_backs;
    if (before_error) {
      ++s.backs_after_error;
      ++s.recalled_segments;
    }
    std::size_t next = h;
    for (std::size_t j = i + 1; j < h; ++j)
      if (history[j].kind == ActionKind::NoBack && history[j].prev_word_index == word) {
        next = j;
        break;
      }
    const bool after_error = next < h ? segment_error[next] != 0 : before_error;
    if (!before_error && !after_error) ++s.cc;
    if (before_error && after_error) ++s.ee;
    if (!before_error && after_error) ++s.ce;
    if (before_error && !after_error) ++s.ec;
  }
  s.defined = s.n_backs > 0;
  return s;
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"tokens", m.tokens}, {"upos", m.upos()}, {"uas", m.uas()}, {"upos_correct", m.upos_correct},
          {"uas_correct", m.uas_correct}};
}

inline nlohmann::json to_json(const BackStats& s) {
  return {{"n_actions", s.n_actions},
          {"n_errors_actions", s.n_errors},
          {"n_errors_words", s.n_error_segments},
          {"n_backs", s.n_backs},
          {"b_prec", s.b_prec()},
          {"b_rec", s.b_rec()},
          {"defined", s.defined},
          {"cc", s.ratio(s.cc)},
          {"ee", s.ratio(s.ee)},
          {"ce", s.ratio(s.ce)},
          {"ec", s.ratio(s.ec)}};
}

namespace detail {

inline std::string percent(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(2) << 100.0 * v;
  return o.str();
}

}  // namespace detail

inline std::string metrics_table(const std::vector<std::pair<std::string, Metrics>>& rows) {
  std::ostringstream o;
  o << std::left << std::setw(24) << "system" << std::right << std::setw(10) << "UPOS" << std::setw(10) << "UAS"
    << std::setw(10) << "tokens" << '\n';
  for (const auto& [name, m] : rows)
    o << std::left << std::setw(24) << name << std::right << std::setw(10) << detail::percent(m.upos())
      << std::setw(10) << detail::percent(m.uas()) << std::setw(10) << m.tokens << '\n';
  return o.str();
}

inline std::string back_stats_table(const BackStats& s) {
  std::ostringstream o;
  auto row = [&](const std::string& k, const std::string& v) { o << std::left << std::setw(12) << k << std::right
                                                                  << std::setw(12) << v << '\n'; };
  row("actions", std::to_string(s.n_actions));
  row("errors", std::to_string(s.n_errors));
  row("err.words", std::to_string(s.n_error_segments));
  row("backs", std::to_string(s.n_backs));
  row("bPrec", detail::percent(s.b_prec()));
  row("bRec", detail::percent(s.b_rec()));
  row("C->C", detail::percent(s.ratio(s.cc)));
  row("E->E", detail::percent(s.ratio(s.ee)));
  row("C->E", detail::percent(s.ratio(s.ce)));
  row("E->C", detail::percent(s.ratio(s.ec)));
  if (!s.defined) o << "(no BACK actions: ratios undefined, reported as 0)\n";
  return o.str();
}

}  // namespace brm
