#pragma once

// Static oracle (canonical gold action sequence) and dynamic oracle
// (per-action gold-arc loss) for tagging and arc-eager parsing.

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "brm/corpus.hpp"
#include "brm/error.hpp"
#include "brm/machine.hpp"

namespace brm {

// Gold annotation in machine terms. Both vectors are indexed by word-1.
struct Gold {
  std::vector<int> tags;
  std::vector<int> heads;

  int n() const { return static_cast<int>(heads.size()); }
  int head(int word) const { return heads[word - 1]; }
  int tag(int word) const { return tags[word - 1]; }
};

struct OracleVerdict {
  int loss = 0;  // gold arcs that become unbuildable
  bool optimal = true;
};

// Number of gold arcs that are built or can still be built by some legal
// continuation. Arc-eager is arc-decomposable, so this is a per-arc test:
// an unattached stack word can only get its governor from the buffer (LEFT),
// and a buffer word can get it from the buffer or from the stack (RIGHT).
// The root sits after the last word.
inline int reachable_gold_arcs(const Configuration& c, const Gold& gold) {
  const int n = c.n;
  std::vector<char> in_stack(n + 2, 0);
  for (int s : c.stack) in_stack[s] = 1;
  const int wi = c.word_index;
  int count = 0;
  for (int d = 1; d <= n; ++d) {
    const int h = gold.head(d);
    const TapeCell& g = c.gov_tape[d];
    if (g.has_value()) {
      count += g.value == h;
      continue;
    }
    const int hpos = h == 0 ? n + 1 : h;
    if (in_stack[d])
      count += hpos >= wi;
    else if (d >= wi)
      count += hpos >= wi || in_stack[hpos];
  }
  return count;
}

// Loss of `a` in `c` against the gold arcs. `c` is taken by value as
// scratch space.
inline OracleVerdict dynamic_oracle(Configuration c, const Action& a, const Gold& gold, const Machine& m) {
  switch (a.kind) {
    case ActionKind::Tag:
      return {0, a.tag == gold.tag(c.word_index)};
    case ActionKind::NoBack:
      return {0, true};
    case ActionKind::Back:
      return {0, false};
    default:
      break;
  }
  const int before = reachable_gold_arcs(c, gold);
  apply_in_place(c, a, m);
  const int loss = before - reachable_gold_arcs(c, gold);
  return {loss, loss == 0};
}

// The action the dynamic oracle trains towards: NOBACK in the BACK state,
// the gold tag in the POS state, and the zero-loss parsing action with
// priority LEFT > RIGHT > REDUCE > SHIFT.
inline Action oracle_action(const Configuration& c, const Gold& gold, const Machine& m) {
  switch (c.state) {
    case State::Back:
      return Action::noback();
    case State::Pos:
      return Action::tag_as(gold.tag(c.word_index));
    case State::Synt:
      break;
  }
  Configuration scratch = c;
  const int before = reachable_gold_arcs(c, gold);
  std::optional<Action> best;
  int best_loss = std::numeric_limits<int>::max();
  for (Action a : {Action::left(), Action::right(), Action::reduce(), Action::shift()}) {
    if (!is_legal(c, m, a)) continue;
    apply_in_place(scratch, a, m);
    const int loss = before - reachable_gold_arcs(scratch, gold);
    undo_in_place(scratch, m);
    if (loss < best_loss) {
      best_loss = loss;
      best = a;
      if (loss == 0) break;
    }
  }
  if (!best) throw IllegalAction("oracle_action: no legal parsing action");
  return *best;
}

// Canonical eager arc-eager derivation of the gold annotation. For the parser
// machine the input tape is filled with the gold tags.
inline std::vector<Action> static_oracle(const Gold& gold, const Machine& m) {
  const int n = gold.n();
  if (m.parses() && !is_projective(gold.heads))
    throw ValidationError("static_oracle: sentence is not projective");

  Configuration c = initial_config(m, n, m.task == Task::Parser ? std::span<const int>(gold.tags)
                                                                : std::span<const int>{});
  std::vector<Action> out;
  auto has_buffer_relation = [&](int s) {
    for (int w = c.word_index; w <= n; ++w)
      if (gold.head(w) == s || gold.head(s) == w) return true;
    return false;
  };
  while (!c.terminal) {
    Action a;
    switch (c.state) {
      case State::Back:
        a = Action::noback();
        break;
      case State::Pos:
        a = Action::tag_as(gold.tag(c.word_index));
        break;
      case State::Synt: {
        const int b = c.word_index;
        const bool has_top = !c.stack.empty();
        const int s = has_top ? c.stack_top() : 0;
        const bool s_headed = has_top && c.gov_tape[s].has_value();
        const int front_as_head = b <= n ? b : 0;
        if (has_top && !s_headed && gold.head(s) == front_as_head)
          a = Action::left();
        else if (has_top && b <= n && gold.head(b) == s)
          a = Action::right();
        else if (s_headed && !has_buffer_relation(s))
          a = Action::reduce();
        else if (b <= n)
          a = Action::shift();
        else
          throw ValidationError("static_oracle: gold tree is not derivable");
        break;
      }
    }
    out.push_back(a);
    apply_in_place(c, a, m);
  }
  return out;
}

}  // namespace brm
