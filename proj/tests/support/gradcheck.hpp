#pragma once

// Central finite-difference check of QNetwork gradients.

#include <cmath>
#include <functional>

#include "brm/network.hpp"

namespace brm::testing {

struct GradCheckResult {
  double relative_error = 0.0;
  double analytic_norm = 0.0;
};

inline NetworkDims small_dims(Rng& rng, bool back_flag, std::vector<int> heads) {
  NetworkDims d;
  d.vocab = {kFirstSymbol + 5, kFirstSymbol + 4, kFirstSymbol + 6, kFirstSymbol + 7};
  d.word_dim = 3 + static_cast<int>(rng.below(3));
  d.embed_dim = 2 + static_cast<int>(rng.below(3));
  d.hidden = 8;
  d.dropout = 0.0;
  const int slots = 3 + static_cast<int>(rng.below(5));
  for (int i = 0; i < slots; ++i) d.slots.push_back(static_cast<Space>(rng.below(kSpaceCount)));
  d.back_flag = back_flag;
  d.heads = std::move(heads);
  return d;
}

inline FeatureVector random_features(const NetworkDims& d, Rng& rng) {
  FeatureVector f;
  for (Space s : d.slots) f.symbols.push_back(static_cast<int>(rng.below(d.vocab[static_cast<int>(s)])));
  f.back_allowed = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  return f;
}

// `loss(net, dq)` runs a forward pass, returns the loss and fills dL/dq.
// `dropout_seed` fixes the dropout masks so that every evaluation sees the
// same ones.
inline GradCheckResult check_gradients(QNetwork<double>& net, const FeatureVector& f, int head,
                                       const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& loss,
                                       bool train, std::uint64_t dropout_seed, double step = 1e-6) {
  using Net = QNetwork<double>;
  auto eval = [&](Net::Cache* cache, Eigen::VectorXd* dq) {
    net.reseed_dropout(dropout_seed);
    Eigen::VectorXd q = net.forward(f, head, train, cache);
    Eigen::VectorXd g;
    double l = loss(q, g);
    if (dq) *dq = g;
    return l;
  };
  Net::Cache cache;
  Eigen::VectorXd dq;
  eval(&cache, &dq);
  auto analytic = net.dense(net.backward(cache, dq));

  double diff2 = 0, a2 = 0, n2 = 0;
  auto tensors = net.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto& param = *tensors[t].second;
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double saved = param.data()[i];
      param.data()[i] = saved + step;
      const double up = eval(nullptr, nullptr);
      param.data()[i] = saved - step;
      const double down = eval(nullptr, nullptr);
      param.data()[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[t].data()[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  GradCheckResult r;
  r.analytic_norm = std::sqrt(a2);
  const double denom = std::sqrt(a2) + std::sqrt(n2);
  r.relative_error = denom < 1e-12 ? 0.0 : std::sqrt(diff2) / denom;
  return r;
}

inline auto smooth_l1_loss(int action, double target) {
  return [action, target](const Eigen::VectorXd& q, Eigen::VectorXd& dq) {
    dq = Eigen::VectorXd::Zero(q.size());
    dq(action) = smooth_l1_grad(q(action), target);
    return smooth_l1(q(action), target);
  };
}

inline auto cross_entropy_loss(int gold) {
  return [gold](const Eigen::VectorXd& q, Eigen::VectorXd& dq) {
    dq = QNetwork<double>::softmax(q);
    dq(gold) -= 1.0;
    return QNetwork<double>::cross_entropy(q, gold);
  };
}

// Runs `instances` random small-network checks alternating the two losses,
// with and without dropout. Returns the worst relative error.
inline double worst_gradient_error(int instances, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0;
  for (int i = 0; i < instances; ++i) {
    std::vector<int> heads = {2 + static_cast<int>(rng.below(4)), 2};
    NetworkDims d = small_dims(rng, rng.bernoulli(0.5), heads);
    const bool train = i % 2 == 1;
    if (train) d.dropout = 0.3;
    QNetwork<double> net(d, rng.next());
    FeatureVector f = random_features(d, rng);
    const int head = static_cast<int>(rng.below(heads.size()));
    const int action = static_cast<int>(rng.below(static_cast<std::size_t>(heads[head])));
    GradCheckResult r;
    if (i % 4 < 2) {
      // Targets far enough away to exercise both smooth-L1 branches.
      const double target = rng.uniform(-3, 3);
      r = check_gradients(net, f, head, smooth_l1_loss(action, target), train, rng.next());
    } else {
      r = check_gradients(net, f, head, cross_entropy_loss(action), train, rng.next());
    }
    worst = std::max(worst, r.relative_error);
  }
  return worst;
}

}  // namespace brm::testing
