#pragma once

// Random legal walks through machine configurations.

#include <vector>

#include "brm/machine.hpp"
#include "brm/random.hpp"

namespace brm::testing {

inline Action random_legal(const Configuration& c, const Machine& m, Rng& rng) {
  auto legal = legal_actions(c, m);
  return legal[rng.below(legal.size())];
}

inline std::vector<int> random_tags(int n, int tag_count, Rng& rng) {
  std::vector<int> t(n);
  for (auto& x : t) x = static_cast<int>(rng.below(static_cast<std::size_t>(tag_count)));
  return t;
}

// Applies up to `steps` random legal actions (fewer if the walk terminates).
inline Configuration random_walk(const Machine& m, int n, int steps, Rng& rng,
                                 const std::vector<int>& input_tags = {}) {
  Configuration c = initial_config(m, n, input_tags);
  for (int i = 0; i < steps && !c.terminal; ++i) apply_in_place(c, random_legal(c, m, rng), m);
  return c;
}

inline Machine machine(Task task, bool backtracking, int k, int tag_count = 3) {
  Machine m;
  m.task = task;
  m.backtracking = backtracking;
  m.k = k;
  m.tag_count = tag_count;
  return m;
}

}  // namespace brm::testing
