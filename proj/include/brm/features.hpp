#pragma once

// Configuration -> fixed slot layout of embedding symbols.
//
// Four embedding spaces (words, POS tags, letters, actions). Every slot holds
// either a real symbol or one of the reserved unavailability symbols from
// vocab.hpp; backtracking machines add a scalar "BACK allowed" input.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "brm/corpus.hpp"
#include "brm/machine.hpp"
#include "brm/oracle.hpp"
#include "brm/vocab.hpp"

namespace brm {

enum class Space : std::uint8_t { Word = 0, Pos = 1, Letter = 2, Action = 3 };
inline constexpr int kSpaceCount = 4;

inline constexpr int kWindow = 2;        // [-2, +2] around the current word
inline constexpr int kStackDepth = 3;    // topmost stack elements described
inline constexpr int kHistoryLength = 10;
inline constexpr int kAffixLength = 4;

struct Slot {
  Space space;
  std::string name;
};

struct FeatureLayout {
  std::vector<Slot> slots;
  bool back_flag = false;

  static FeatureLayout for_machine(const Machine& m) {
    FeatureLayout l;
    for (int off = -kWindow; off <= kWindow; ++off) {
      l.slots.push_back({Space::Word, "form[" + std::to_string(off) + "]"});
      l.slots.push_back({Space::Pos, "pos[" + std::to_string(off) + "]"});
    }
    if (m.parses()) {
      for (int j = 0; j < kStackDepth; ++j) {
        const std::string s = "s" + std::to_string(j);
        l.slots.push_back({Space::Word, s + ".form"});
        l.slots.push_back({Space::Pos, s + ".pos"});
        l.slots.push_back({Space::Pos, s + ".gov.pos"});
        l.slots.push_back({Space::Pos, s + ".ldep.pos"});
        l.slots.push_back({Space::Pos, s + ".rdep.pos"});
      }
    }
    for (int j = 0; j < kHistoryLength; ++j)
      l.slots.push_back({Space::Action, "hist[" + std::to_string(j) + "]"});
    for (int j = 0; j < kAffixLength; ++j) l.slots.push_back({Space::Letter, "prefix[" + std::to_string(j) + "]"});
    for (int j = 0; j < kAffixLength; ++j) l.slots.push_back({Space::Letter, "suffix[" + std::to_string(j) + "]"});
    l.back_flag = m.backtracking;
    return l;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& s : slots) out.push_back(s.name);
    if (back_flag) out.push_back("back_allowed");
    return out;
  }
};

struct FeatureVector {
  std::vector<int> symbols;  // one per layout slot
  float back_allowed = 0.0f;
};

// A sentence pre-encoded against a vocabulary.
struct Instance {
  int n = 0;
  std::vector<int> form;                                // [1..n] word symbols
  std::vector<std::array<int, kAffixLength>> prefix;   // [1..n]
  std::vector<std::array<int, kAffixLength>> suffix;   // [1..n]
  std::vector<int> input_tags;                          // [0..n-1] tag ids from the UPOS column
  Gold gold;
};

inline Instance encode(const Sentence& s, const Vocabulary& v) {
  Instance in;
  in.n = s.n();
  in.form.assign(in.n + 1, kOutOfBounds);
  in.prefix.assign(in.n + 1, {});
  in.suffix.assign(in.n + 1, {});
  for (int i = 1; i <= in.n; ++i) {
    const Token& t = s.tokens[i - 1];
    in.form[i] = v.word_symbol(t.form);
    std::u32string letters = utf8_decode(t.form);
    const int len = static_cast<int>(letters.size());
    for (int j = 0; j < kAffixLength; ++j) {
      in.prefix[i][j] = j < len ? v.letter_symbol(letters[j]) : kNull;
      in.suffix[i][j] = j < len ? v.letter_symbol(letters[len - 1 - j]) : kNull;
    }
    in.input_tags.push_back(v.tags.id(t.upos));
    in.gold.tags.push_back(v.tags.id(t.upos));
    in.gold.heads.push_back(t.head);
  }
  return in;
}

inline Configuration initial_config(const Machine& m, const Instance& in) {
  return initial_config(m, in.n, m.task == Task::Parser ? std::span<const int>(in.input_tags)
                                                        : std::span<const int>{});
}

namespace detail {

inline int pos_symbol(const TapeCell& cell) {
  switch (cell.kind) {
    case TapeCell::Kind::Value: return Vocabulary::tag_symbol(cell.value);
    case TapeCell::Kind::Erased: return kErased;
    case TapeCell::Kind::Empty: return kNotSeen;  // not produced yet
  }
  return kNotSeen;
}

inline int action_symbol(const Action& a, int tag_count) {
  switch (a.kind) {
    case ActionKind::Tag: return kFirstSymbol + a.tag;
    case ActionKind::Left: return kFirstSymbol + tag_count;
    case ActionKind::Right: return kFirstSymbol + tag_count + 1;
    case ActionKind::Shift: return kFirstSymbol + tag_count + 2;
    case ActionKind::Reduce: return kFirstSymbol + tag_count + 3;
    case ActionKind::Back: return kFirstSymbol + tag_count + 4;
    case ActionKind::NoBack: return kFirstSymbol + tag_count + 5;
  }
  return kNull;
}

}  // namespace detail

inline FeatureVector extract_features(const Configuration& c, const Instance& in, const Machine& m) {
  FeatureVector f;
  f.symbols.reserve(64);
  const int n = c.n;

  for (int off = -kWindow; off <= kWindow; ++off) {
    const int p = c.word_index + off;
    // Past the frontier the machine cannot know where the sentence ends.
    if (p > c.frontier) {
      f.symbols.push_back(kNotSeen);
      f.symbols.push_back(kNotSeen);
    } else if (p < 1 || p > n) {
      f.symbols.push_back(kOutOfBounds);
      f.symbols.push_back(kOutOfBounds);
    } else {
      f.symbols.push_back(in.form[p]);
      f.symbols.push_back(detail::pos_symbol(c.pos_tape[p]));
    }
  }

  if (m.parses()) {
    const int depth = static_cast<int>(c.stack.size());
    for (int j = 0; j < kStackDepth; ++j) {
      if (j >= depth) {
        for (int r = 0; r < 5; ++r) f.symbols.push_back(kEmptyStack);
        continue;
      }
      const int s = c.stack[depth - 1 - j];
      f.symbols.push_back(in.form[s]);
      f.symbols.push_back(detail::pos_symbol(c.pos_tape[s]));
      const TapeCell& g = c.gov_tape[s];
      if (g.kind == TapeCell::Kind::Erased)
        f.symbols.push_back(kErased);
      else if (!g.has_value())
        f.symbols.push_back(kNoDepGov);
      else if (g.value == 0)
        f.symbols.push_back(kOutOfBounds);  // the root has no tag
      else
        f.symbols.push_back(detail::pos_symbol(c.pos_tape[g.value]));
      int leftmost = 0, rightmost = 0;
      for (int d = 1; d <= n; ++d) {
        if (!(c.gov_tape[d].has_value() && c.gov_tape[d].value == s)) continue;
        if (d < s && leftmost == 0) leftmost = d;
        if (d > s) rightmost = d;
      }
      f.symbols.push_back(leftmost ? detail::pos_symbol(c.pos_tape[leftmost]) : kNoDepGov);
      f.symbols.push_back(rightmost ? detail::pos_symbol(c.pos_tape[rightmost]) : kNoDepGov);
    }
  }

  const int h = static_cast<int>(c.history.size());
  for (int j = 0; j < kHistoryLength; ++j)
    f.symbols.push_back(j < h ? detail::action_symbol(c.history[h - 1 - j], m.tag_count) : kNull);

  const bool in_sentence = c.word_index >= 1 && c.word_index <= n;
  for (int j = 0; j < kAffixLength; ++j)
    f.symbols.push_back(in_sentence ? in.prefix[c.word_index][j] : kOutOfBounds);
  for (int j = 0; j < kAffixLength; ++j)
    f.symbols.push_back(in_sentence ? in.suffix[c.word_index][j] : kOutOfBounds);

  if (m.backtracking)
    f.back_allowed = (!c.terminal && c.state == State::Back && !back_blocked(c, m)) ? 1.0f : 0.0f;
  return f;
}

// Decision heads: one per task state. Output indices within each head:
// tagger = tag id; parser = LEFT, RIGHT, SHIFT, REDUCE; back = BACK, NOBACK.
struct HeadLayout {
  int tag = -1, parse = -1, back = -1;
  std::vector<int> sizes;

  static HeadLayout for_machine(const Machine& m) {
    HeadLayout h;
    if (m.tags()) {
      h.tag = static_cast<int>(h.sizes.size());
      h.sizes.push_back(m.tag_count);
    }
    if (m.parses()) {
      h.parse = static_cast<int>(h.sizes.size());
      h.sizes.push_back(4);
    }
    if (m.backtracking) {
      h.back = static_cast<int>(h.sizes.size());
      h.sizes.push_back(2);
    }
    return h;
  }

  int head_for(State s) const {
    switch (s) {
      case State::Back: return back;
      case State::Pos: return tag;
      case State::Synt: return parse;
    }
    return -1;
  }

  static int output_index(const Action& a) {
    switch (a.kind) {
      case ActionKind::Tag: return a.tag;
      case ActionKind::Left: return 0;
      case ActionKind::Right: return 1;
      case ActionKind::Shift: return 2;
      case ActionKind::Reduce: return 3;
      case ActionKind::Back: return 0;
      case ActionKind::NoBack: return 1;
    }
    return -1;
  }
};

}  // namespace brm
