#pragma once

// Human-readable and JSON renderings of a decode: tapes, BACK counters and
// the actions taken between two visits of the BACK state.

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "brm/corpus.hpp"
#include "brm/machine.hpp"
#include "brm/vocab.hpp"

namespace brm {

namespace detail {

inline std::string cell_text(const TapeCell& c, const std::vector<std::string>* names) {
  switch (c.kind) {
    case TapeCell::Kind::Empty: return "";
    case TapeCell::Kind::Erased: return "#";
    case TapeCell::Kind::Value: return names ? names->at(c.value) : std::to_string(c.value);
  }
  return "";
}

inline void render_block(std::ostringstream& o, const Configuration& c, const Sentence& s, const Machine& m,
                         const std::vector<std::string>& tag_names, const std::vector<std::string>& since) {
  std::vector<std::size_t> width(c.n + 1, 1);
  for (int w = 1; w <= c.n; ++w) {
    width[w] = std::max<std::size_t>(width[w], s.tokens[w - 1].form.size() + (w == c.word_index ? 2 : 0));
    width[w] = std::max(width[w], cell_text(c.pos_tape[w], &tag_names).size());
    width[w] = std::max(width[w], cell_text(c.gov_tape[w], nullptr).size());
  }
  auto row = [&](const std::string& label, auto cell) {
    o << std::left << std::setw(6) << label;
    for (int w = 1; w <= c.n; ++w) o << ' ' << std::setw(static_cast<int>(width[w])) << cell(w);
    o << '\n';
  };
  o << "state " << to_string(c.state) << "  word " << c.word_index << (c.terminal ? "  (terminal)" : "") << '\n';
  if (m.parses()) row("gov", [&](int w) { return cell_text(c.gov_tape[w], nullptr); });
  row("pos", [&](int w) { return cell_text(c.pos_tape[w], &tag_names); });
  row("words", [&](int w) {
    const std::string& f = s.tokens[w - 1].form;
    return w == c.word_index ? "[" + f + "]" : f;
  });
  if (m.backtracking) row("backs", [&](int w) { return std::to_string(c.back_counts[w]); });
  if (m.parses()) {
    o << "stack ";
    for (int x : c.stack) o << ' ' << x;
    o << '\n';
  }
  o << "since";
  for (const auto& a : since) o << ' ' << a;
  o << "\n\n";
}

}  // namespace detail

// Replays `history` and prints one block each time the machine reaches the
// BACK state (or starts a new word, for machines without one), plus the
// final configuration.
inline std::string render_trace(const Machine& m, const Sentence& s, const std::vector<int>& input_tags,
                                const std::vector<Action>& history, const std::vector<std::string>& tag_names) {
  std::ostringstream o;
  Configuration c = initial_config(m, s.n(), m.task == Task::Parser ? std::span<const int>(input_tags)
                                                                    : std::span<const int>{});
  std::vector<std::string> since;
  int last_word = 0;
  for (const Action& a : history) {
    const bool visit = m.backtracking ? c.state == State::Back : c.word_index != last_word;
    if (visit) {
      detail::render_block(o, c, s, m, tag_names, since);
      since.clear();
      last_word = c.word_index;
    }
    since.push_back(describe(a, tag_names));
    apply_in_place(c, a, m);
  }
  detail::render_block(o, c, s, m, tag_names, since);
  return o.str();
}

inline nlohmann::json trace_json(const Machine& m, const Sentence& s, const std::vector<int>& input_tags,
                                 const Configuration& final, const std::vector<std::string>& tag_names,
                                 bool annotated, int index) {
  nlohmann::json actions = nlohmann::json::array();
  for (const Action& a : final.history) {
    nlohmann::json ja = {{"action", describe(a, tag_names)}, {"word", a.prev_word_index}};
    if (annotated) ja["reward"] = a.reward;
    actions.push_back(std::move(ja));
  }
  std::vector<std::string> forms;
  for (const auto& t : s.tokens) forms.push_back(t.form);
  std::vector<int> counts(final.back_counts.begin() + 1, final.back_counts.end());
  return {{"sentence", index},
          {"n", s.n()},
          {"forms", forms},
          {"machine",
           {{"task", std::string(to_string(m.task))},
            {"backtracking", m.backtracking},
            {"k", m.k},
            {"tag_count", m.tag_count}}},
          {"tags", tag_names},
          {"input_tags", input_tags},
          {"annotated", annotated},
          {"actions", actions},
          {"back_counts", counts}};
}

// Rebuilds the full action records (undo payloads included) of a JSON trace
// by replaying it, keeping the recorded rewards.
struct LoadedTrace {
  Machine machine;
  bool annotated = false;
  std::vector<Action> history;
};

inline LoadedTrace load_trace(const nlohmann::json& j) {
  try {
    LoadedTrace t;
    const auto& jm = j.at("machine");
    t.machine = Machine{parse_task(jm.at("task").get<std::string>()), jm.at("backtracking").get<bool>(),
                        jm.at("k").get<int>(), jm.at("tag_count").get<int>()};
    t.annotated = j.at("annotated").get<bool>();
    const auto names = j.at("tags").get<std::vector<std::string>>();
    const auto input_tags = j.at("input_tags").get<std::vector<int>>();
    const int n = j.at("n").get<int>();
    std::vector<Action> decisions;
    for (const auto& ja : j.at("actions")) {
      Action a = parse_action(ja.at("action").get<std::string>(), names);
      if (t.annotated) a.reward = ja.at("reward").get<double>();
      decisions.push_back(a);
    }
    Configuration c = replay(t.machine, n, decisions,
                             t.machine.task == Task::Parser ? std::span<const int>(input_tags)
                                                            : std::span<const int>{});
    t.history = std::move(c.history);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed trace: ") + e.what());
  }
}

}  // namespace brm
