#pragma once

// Reading-machine configurations, the action inventory with exact apply/undo
// semantics, and the BACK mechanism with its per-word budget.
//
// Positions are 1-based throughout: tapes and back counts are sized n+1 and
// slot 0 is unused. The root is addressed as governor 0. In the syntactic
// state the buffer front is `word_index`; once every word has been read
// (word_index == n+1) the front is the root, so LEFT attaches the stack top
// to the root and the remaining stack is flushed before the final decision.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "brm/error.hpp"

namespace brm {

enum class Task : std::uint8_t { Tagger, Parser, TagParser };
enum class State : std::uint8_t { Back, Pos, Synt };
enum class ActionKind : std::uint8_t { Tag, Left, Right, Shift, Reduce, Back, NoBack };

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::Tagger: return "tagger";
    case Task::Parser: return "parser";
    case Task::TagParser: return "tagparser";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "tagger") return Task::Tagger;
  if (s == "parser") return Task::Parser;
  if (s == "tagparser") return Task::TagParser;
  throw UsageError("unknown machine kind '" + std::string(s) + "'");
}

inline std::string_view to_string(State s) {
  switch (s) {
    case State::Back: return "BACK";
    case State::Pos: return "POS";
    case State::Synt: return "SYNT";
  }
  return "?";
}

struct TapeCell {
  enum class Kind : std::uint8_t { Empty, Value, Erased };
  Kind kind = Kind::Empty;
  int value = 0;

  static TapeCell empty() { return {}; }
  static TapeCell of(int v) { return {Kind::Value, v}; }
  static TapeCell erased() { return {Kind::Erased, 0}; }

  bool has_value() const { return kind == Kind::Value; }
  bool operator==(const TapeCell&) const = default;
};

// Machine topology plus the BACK budget k and the size of the tag inventory.
struct Machine {
  Task task = Task::Tagger;
  bool backtracking = true;
  int k = 1;
  int tag_count = 0;

  bool tags() const { return task != Task::Parser; }
  bool parses() const { return task != Task::Tagger; }
  State task_state() const { return tags() ? State::Pos : State::Synt; }
  State initial_state() const { return backtracking ? State::Back : task_state(); }
};

struct Action {
  ActionKind kind = ActionKind::NoBack;
  int tag = -1;  // TAG only

  // Undo payload, written by apply.
  State prev_state = State::Back;
  int prev_word_index = 0;
  int prev_frontier = 0;
  TapeCell prev_cell;  // TAG: pos cell; LEFT: gov cell of the popped word; RIGHT: gov cell of the pushed word
  int popped = 0;      // LEFT / REDUCE
  std::vector<std::size_t> undone;  // BACK: history indices it retracted, in application order

  // Training-time reward attached when the action was applied.
  double reward = 0.0;

  static Action tag_as(int p) { return Action{ActionKind::Tag, p}; }
  static Action left() { return Action{ActionKind::Left}; }
  static Action right() { return Action{ActionKind::Right}; }
  static Action shift() { return Action{ActionKind::Shift}; }
  static Action reduce() { return Action{ActionKind::Reduce}; }
  static Action back() { return Action{ActionKind::Back}; }
  static Action noback() { return Action{ActionKind::NoBack}; }

  // Same decision, ignoring payload and reward.
  bool same_as(const Action& o) const { return kind == o.kind && tag == o.tag; }
  bool operator==(const Action&) const = default;
};

inline bool is_parse_action(ActionKind k) {
  return k == ActionKind::Left || k == ActionKind::Right || k == ActionKind::Shift ||
         k == ActionKind::Reduce;
}
inline bool is_push(ActionKind k) { return k == ActionKind::Right || k == ActionKind::Shift; }
inline bool is_pop(ActionKind k) { return k == ActionKind::Left || k == ActionKind::Reduce; }

inline std::string describe(const Action& a, std::span<const std::string> tag_names = {}) {
  switch (a.kind) {
    case ActionKind::Tag:
      if (a.tag >= 0 && static_cast<std::size_t>(a.tag) < tag_names.size())
        return "TAG(" + tag_names[a.tag] + ")";
      return "TAG(" + std::to_string(a.tag) + ")";
    case ActionKind::Left: return "LEFT";
    case ActionKind::Right: return "RIGHT";
    case ActionKind::Shift: return "SHIFT";
    case ActionKind::Reduce: return "REDUCE";
    case ActionKind::Back: return "BACK";
    case ActionKind::NoBack: return "NOBACK";
  }
  return "?";
}

// Inverse of describe(). TAG arguments are looked up in tag_names, falling
// back to a numeric id.
inline Action parse_action(std::string_view s, std::span<const std::string> tag_names = {}) {
  if (s == "LEFT") return Action::left();
  if (s == "RIGHT") return Action::right();
  if (s == "SHIFT") return Action::shift();
  if (s == "REDUCE") return Action::reduce();
  if (s == "BACK") return Action::back();
  if (s == "NOBACK") return Action::noback();
  if (s.starts_with("TAG(") && s.ends_with(")")) {
    auto arg = s.substr(4, s.size() - 5);
    for (std::size_t i = 0; i < tag_names.size(); ++i)
      if (tag_names[i] == arg) return Action::tag_as(static_cast<int>(i));
    int v = 0;
    bool numeric = !arg.empty();
    for (char ch : arg) {
      if (ch < '0' || ch > '9') numeric = false;
      else v = v * 10 + (ch - '0');
    }
    if (numeric) return Action::tag_as(v);
  }
  throw ValidationError("unknown action '" + std::string(s) + "'");
}

struct Configuration {
  int n = 0;
  State state = State::Back;
  int word_index = 1;
  int frontier = 1;  // rightmost word_index ever reached
  bool terminal = false;
  std::vector<int> stack;
  std::vector<TapeCell> pos_tape;  // [1..n]
  std::vector<TapeCell> gov_tape;  // [1..n], governor index, 0 = root
  std::vector<int> back_counts;    // [1..n]
  std::vector<Action> history;     // every applied action, in order, including retracted ones
  std::vector<std::size_t> live;   // indices into history of actions currently in effect

  int stack_top() const { return stack.back(); }
  bool operator==(const Configuration&) const = default;
};

// Upper bound on the number of actions for a sentence of length n. For
// backtracking machines these are 3nk+2n / 4nk+3n / 5nk+4n; machines
// without a BACK state need one action per word and task step.
inline long max_actions(int n, int k, Task task, bool backtracking = true) {
  const long nn = n, kk = k;
  if (!backtracking) {
    switch (task) {
      case Task::Tagger: return nn;
      case Task::Parser: return 2 * nn;
      case Task::TagParser: return 3 * nn;
    }
  }
  switch (task) {
    case Task::Tagger: return 3 * nn * kk + 2 * nn;
    case Task::Parser: return 4 * nn * kk + 3 * nn;
    case Task::TagParser: return 5 * nn * kk + 4 * nn;
  }
  return 0;
}

inline long max_actions(int n, const Machine& m) { return max_actions(n, m.k, m.task, m.backtracking); }

namespace detail {

// Actions still needed to finish from the given position if no further BACK
// is taken. Exact for arc-eager (every word is pushed and popped once) except
// for the final NOBACK, which is always counted.
inline long remaining_bound(const Machine& m, int n, State state, int word_index,
                            std::size_t stack_size) {
  const long bt = m.backtracking ? 1 : 0;
  const long per_word = bt + (m.tags() ? 1 : 0) + (m.parses() ? 1 : 0);
  long total = 0;
  if (word_index <= n) {
    long done = 0;
    if (state == State::Pos) done = bt;
    if (state == State::Synt) done = bt + (m.task == Task::TagParser ? 1 : 0);
    total += (n - word_index + 1) * per_word - done;
  }
  if (m.parses())
    total += static_cast<long>(stack_size) + (word_index <= n ? n - word_index + 1 : 0);
  return total + bt;
}

inline int budget_cell(const Configuration& c) { return std::min(c.word_index, c.n); }

inline std::optional<std::size_t> last_live_noback(const Configuration& c) {
  for (std::size_t i = c.live.size(); i-- > 0;)
    if (c.history[c.live[i]].kind == ActionKind::NoBack) return i;
  return std::nullopt;
}

}  // namespace detail

// Why BACK is not legal in `c`, or nullopt when it is.
inline std::optional<std::string> back_blocked(const Configuration& c, const Machine& m) {
  if (!m.backtracking) return "machine has no BACK state";
  if (c.state != State::Back) return "BACK is only predicted in the BACK state";
  const int cell = detail::budget_cell(c);
  if (cell < 1) return "empty sentence";
  if (c.back_counts[cell] >= m.k) return "back budget exhausted at word " + std::to_string(cell);
  auto nb = detail::last_live_noback(c);
  if (!nb) return "nothing to undo";
  // Keep the closed-form action bound a guarantee: a BACK is allowed only
  // if re-reading without further BACKs still fits.
  long stack_size = static_cast<long>(c.stack.size());
  for (std::size_t i = *nb; i < c.live.size(); ++i) {
    ActionKind k = c.history[c.live[i]].kind;
    if (is_push(k)) --stack_size;
    if (is_pop(k)) ++stack_size;
  }
  const int wi_after = c.history[c.live[*nb]].prev_word_index;
  long need = static_cast<long>(c.history.size()) + 1 +
              detail::remaining_bound(m, c.n, State::Back, wi_after, static_cast<std::size_t>(stack_size));
  if (need > max_actions(c.n, m)) return "action bound would be exceeded";
  return std::nullopt;
}

namespace detail {

inline bool compute_terminal(const Configuration& c, const Machine& m) {
  if (c.word_index <= c.n || !c.stack.empty()) return false;
  if (!m.backtracking) return true;
  if (c.state != State::Back) return false;
  if (!c.history.empty() && c.history.back().kind == ActionKind::NoBack) return true;
  return back_blocked(c, m).has_value();
}

// A word's segment just ended: hand control to the BACK state, or straight to
// the next task step for machines without one.
inline void end_segment(Configuration& c, const Machine& m) {
  if (m.backtracking)
    c.state = State::Back;
  else
    c.state = m.task_state();
}

inline void after_advance(Configuration& c, const Machine& m) {
  c.frontier = std::max(c.frontier, c.word_index);
  if (m.parses() && c.word_index == c.n + 1 && !c.stack.empty()) {
    c.state = State::Synt;  // flush the stack against the root
    return;
  }
  end_segment(c, m);
}

inline void after_pop(Configuration& c, const Machine& m) {
  if (c.word_index == c.n + 1 && c.stack.empty()) end_segment(c, m);
}

// Effects of a non-BACK action. Shared by apply and by the exact undo of a
// BACK, which re-performs what the BACK had retracted.
inline void perform(Configuration& c, const Action& a, const Machine& m) {
  switch (a.kind) {
    case ActionKind::Tag:
      c.pos_tape[c.word_index] = TapeCell::of(a.tag);
      if (m.task == Task::Tagger) {
        ++c.word_index;
        after_advance(c, m);
      } else {
        c.state = State::Synt;
      }
      break;
    case ActionKind::Left: {
      int top = c.stack.back();
      c.stack.pop_back();
      c.gov_tape[top] = TapeCell::of(c.word_index <= c.n ? c.word_index : 0);
      after_pop(c, m);
      break;
    }
    case ActionKind::Right:
      c.gov_tape[c.word_index] = TapeCell::of(c.stack.back());
      c.stack.push_back(c.word_index);
      ++c.word_index;
      after_advance(c, m);
      break;
    case ActionKind::Shift:
      c.stack.push_back(c.word_index);
      ++c.word_index;
      after_advance(c, m);
      break;
    case ActionKind::Reduce:
      c.stack.pop_back();
      after_pop(c, m);
      break;
    case ActionKind::NoBack:
      if (c.word_index <= c.n) c.state = m.task_state();
      break;
    case ActionKind::Back:
      break;
  }
}

// Reverts the structural effects of `a` using its payload. Exact mode
// restores tape cells and frontier; retract mode (used by BACK) marks written
// cells as erased and keeps the frontier.
inline void revert(Configuration& c, const Action& a, bool exact) {
  const TapeCell erased = TapeCell::erased();
  switch (a.kind) {
    case ActionKind::Tag:
      c.pos_tape[a.prev_word_index] = exact ? a.prev_cell : erased;
      break;
    case ActionKind::Left:
      c.gov_tape[a.popped] = exact ? a.prev_cell : erased;
      c.stack.push_back(a.popped);
      break;
    case ActionKind::Right:
      c.gov_tape[a.prev_word_index] = exact ? a.prev_cell : erased;
      c.stack.pop_back();
      break;
    case ActionKind::Shift:
      c.stack.pop_back();
      break;
    case ActionKind::Reduce:
      c.stack.push_back(a.popped);
      break;
    case ActionKind::NoBack:
    case ActionKind::Back:
      break;
  }
  c.word_index = a.prev_word_index;
  c.state = a.prev_state;
  if (exact) c.frontier = a.prev_frontier;
}

}  // namespace detail

inline Configuration initial_config(const Machine& m, int n, std::span<const int> input_tags = {}) {
  if (n < 0) throw UsageError("negative sentence length");
  Configuration c;
  c.n = n;
  c.state = m.initial_state();
  c.word_index = 1;
  c.frontier = 1;
  c.pos_tape.assign(n + 1, TapeCell::empty());
  c.gov_tape.assign(n + 1, TapeCell::empty());
  c.back_counts.assign(n + 1, 0);
  if (m.task == Task::Parser) {
    // The parser reads tags from an input tape.
    if (static_cast<int>(input_tags.size()) != n)
      throw UsageError("parser machine needs one input tag per word");
    for (int i = 1; i <= n; ++i) c.pos_tape[i] = TapeCell::of(input_tags[i - 1]);
  }
  c.terminal = detail::compute_terminal(c, m);
  return c;
}

// Reason `a` is illegal in `c`, or nullopt when legal.
inline std::optional<std::string> violation(const Configuration& c, const Machine& m, const Action& a) {
  if (c.terminal) return "configuration is terminal";
  switch (a.kind) {
    case ActionKind::Back:
      return back_blocked(c, m);
    case ActionKind::NoBack:
      if (c.state != State::Back) return "NOBACK is only predicted in the BACK state";
      return std::nullopt;
    case ActionKind::Tag:
      if (c.state != State::Pos) return "TAG requires the POS state";
      if (a.tag < 0 || a.tag >= m.tag_count) return "tag id out of range";
      return std::nullopt;
    default:
      break;
  }
  if (c.state != State::Synt) return "parsing actions require the SYNT state";
  const bool has_top = !c.stack.empty();
  switch (a.kind) {
    case ActionKind::Left:
      if (!has_top) return "LEFT on empty stack";
      if (c.gov_tape[c.stack_top()].has_value()) return "LEFT: stack top already has a governor";
      return std::nullopt;
    case ActionKind::Reduce:
      if (!has_top) return "REDUCE on empty stack";
      if (!c.gov_tape[c.stack_top()].has_value()) return "REDUCE: stack top has no governor";
      return std::nullopt;
    case ActionKind::Right:
      if (!has_top) return "RIGHT on empty stack";
      if (c.word_index > c.n) return "RIGHT with no word left to attach";
      return std::nullopt;
    case ActionKind::Shift:
      if (c.word_index > c.n) return "SHIFT with empty buffer";
      return std::nullopt;
    default:
      return "unknown action";
  }
}

inline bool is_legal(const Configuration& c, const Machine& m, const Action& a) {
  return !violation(c, m, a).has_value();
}

inline std::vector<Action> legal_actions(const Configuration& c, const Machine& m) {
  if (c.terminal) throw IllegalAction("legal_actions: configuration is terminal");
  std::vector<Action> out;
  switch (c.state) {
    case State::Back:
      if (!back_blocked(c, m)) out.push_back(Action::back());
      out.push_back(Action::noback());
      break;
    case State::Pos:
      for (int p = 0; p < m.tag_count; ++p) out.push_back(Action::tag_as(p));
      break;
    case State::Synt:
      for (Action a : {Action::left(), Action::right(), Action::shift(), Action::reduce()})
        if (!violation(c, m, a)) out.push_back(a);
      break;
  }
  return out;
}

// In-place apply. The stored history entry carries `a.reward`.
inline void apply_in_place(Configuration& c, Action a, const Machine& m) {
  if (auto why = violation(c, m, a)) throw IllegalAction(describe(a) + " illegal: " + *why);
  a.prev_state = c.state;
  a.prev_word_index = c.word_index;
  a.prev_frontier = c.frontier;
  a.undone.clear();
  a.popped = 0;
  a.prev_cell = TapeCell::empty();

  if (a.kind == ActionKind::Back) {
    ++c.back_counts[detail::budget_cell(c)];
    std::vector<std::size_t> undone;
    while (true) {
      std::size_t idx = c.live.back();
      c.live.pop_back();
      const Action& prev = c.history[idx];
      detail::revert(c, prev, /*exact=*/false);
      undone.push_back(idx);
      if (prev.kind == ActionKind::NoBack) break;
    }
    std::reverse(undone.begin(), undone.end());
    a.undone = std::move(undone);
    c.state = State::Back;
    c.history.push_back(std::move(a));
    c.terminal = detail::compute_terminal(c, m);
    return;
  }

  switch (a.kind) {
    case ActionKind::Tag: a.prev_cell = c.pos_tape[c.word_index]; break;
    case ActionKind::Left:
      a.popped = c.stack_top();
      a.prev_cell = c.gov_tape[a.popped];
      break;
    case ActionKind::Right: a.prev_cell = c.gov_tape[c.word_index]; break;
    case ActionKind::Reduce: a.popped = c.stack_top(); break;
    default: break;
  }
  detail::perform(c, a, m);
  c.live.push_back(c.history.size());
  c.history.push_back(std::move(a));
  c.terminal = detail::compute_terminal(c, m);
}

inline Configuration apply(Configuration c, const Action& a, const Machine& m) {
  apply_in_place(c, a, m);
  return c;
}

// Exact inverse of the last applied action.
inline void undo_in_place(Configuration& c, const Machine& m) {
  if (c.history.empty()) throw IllegalAction("undo: history is empty");
  const std::size_t idx = c.history.size() - 1;
  const Action& a = c.history[idx];
  if (a.kind == ActionKind::Back) {
    --c.back_counts[std::min(a.prev_word_index, c.n)];
    for (std::size_t u : a.undone) {
      detail::perform(c, c.history[u], m);
      c.live.push_back(u);
    }
    c.state = a.prev_state;
    c.word_index = a.prev_word_index;
    c.frontier = a.prev_frontier;
  } else {
    if (c.live.empty() || c.live.back() != idx)
      throw IllegalAction("undo: last history entry is not in effect");
    detail::revert(c, a, /*exact=*/true);
    c.live.pop_back();
  }
  c.history.pop_back();
  c.terminal = false;
}

inline Configuration undo(Configuration c, const Machine& m) {
  undo_in_place(c, m);
  return c;
}

// Checked form: `a` must be the decision recorded last in the history.
inline Configuration undo(Configuration c, const Action& a, const Machine& m) {
  if (c.history.empty()) throw IllegalAction("undo: history is empty");
  if (!c.history.back().same_as(a))
    throw IllegalAction("undo: " + describe(a) + " is not the last history entry (" +
                        describe(c.history.back()) + ")");
  undo_in_place(c, m);
  return c;
}

// Folds apply over a recorded history from the initial configuration.
inline Configuration replay(const Machine& m, int n, std::span<const Action> history,
                            std::span<const int> input_tags = {}) {
  Configuration c = initial_config(m, n, input_tags);
  for (const Action& a : history) {
    Action bare = Action{a.kind, a.tag};
    bare.reward = a.reward;
    apply_in_place(c, bare, m);
  }
  return c;
}

// Sum of rewards of the actions a BACK in `c` would retract.
inline double pending_back_reward_sum(const Configuration& c) {
  double sum = 0.0;
  auto nb = detail::last_live_noback(c);
  if (!nb) return 0.0;
  for (std::size_t i = *nb; i < c.live.size(); ++i) sum += c.history[c.live[i]].reward;
  return sum;
}

// Governor per word after decoding; unset cells fall back to the root.
inline std::vector<int> predicted_heads(const Configuration& c) {
  std::vector<int> out(c.n, 0);
  for (int i = 1; i <= c.n; ++i)
    if (c.gov_tape[i].has_value()) out[i - 1] = c.gov_tape[i].value;
  return out;
}

}  // namespace brm
