#pragma once

// Immediate rewards for tagging, parsing and BACK/NOBACK actions.

#include <cmath>
#include <numeric>
#include <span>
#include <string>

#include "brm/error.hpp"
#include "brm/machine.hpp"
#include "brm/oracle.hpp"

namespace brm {

// Reward for an action that cannot be executed, e.g. popping an empty stack.
inline constexpr double kIllegalReward = -1.5;

inline double tag_reward(int predicted, int gold) { return predicted == gold ? 0.0 : -1.0; }

inline double parse_reward(const Configuration& c, const Action& a, const Gold& gold, const Machine& m) {
  if (!is_legal(c, m, a)) return kIllegalReward;
  return -static_cast<double>(dynamic_oracle(c, a, gold, m).loss);
}

// phi(E): -1 when the undone actions were all correct, ln(E+1) otherwise.
inline double back_reward_from_errors(double errors) {
  if (errors < 0 || !std::isfinite(errors))
    throw Error("back_reward: negative error mass " + std::to_string(errors) +
                " (reward bookkeeping is inconsistent)");
  return errors == 0.0 ? -1.0 : std::log(errors + 1.0);
}

inline double back_reward(std::span<const double> undone_rewards) {
  const double sum = std::accumulate(undone_rewards.begin(), undone_rewards.end(), 0.0);
  return back_reward_from_errors(-sum);
}

inline double noback_reward() { return 0.0; }

// Reward of `a` in `c`, dispatching on the action class. Illegal actions of
// any class get kIllegalReward.
inline double reward(const Configuration& c, const Action& a, const Gold& gold, const Machine& m) {
  if (!is_legal(c, m, a)) return kIllegalReward;
  switch (a.kind) {
    case ActionKind::Tag:
      return tag_reward(a.tag, gold.tag(c.word_index));
    case ActionKind::NoBack:
      return noback_reward();
    case ActionKind::Back:
      return back_reward_from_errors(-pending_back_reward_sum(c));
    default:
      return parse_reward(c, a, gold, m);
  }
}

}  // namespace brm
