#pragma once

// Multi-head MLP Q-function: per-slot embeddings, one hidden ReLU layer and a
// linear decision head per machine state. Outputs are raw Q-values.
//
//   x = concat(embeddings) [+ back flag] -> dropout -> W1 x + b1 -> dropout
//     -> ReLU -> W_head h + b_head

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "brm/error.hpp"
#include "brm/features.hpp"
#include "brm/random.hpp"

namespace brm {

struct NetworkDims {
  std::array<int, kSpaceCount> vocab{};  // table rows per space
  int word_dim = 300;
  int embed_dim = 128;  // POS, letter and action spaces
  int hidden = 3200;
  double dropout = 0.3;
  std::vector<Space> slots;
  bool back_flag = false;
  std::vector<int> heads;

  int dim_of(Space s) const { return s == Space::Word ? word_dim : embed_dim; }
  int input_dim() const {
    int d = back_flag ? 1 : 0;
    for (Space s : slots) d += dim_of(s);
    return d;
  }

  static NetworkDims make(const FeatureLayout& layout, const HeadLayout& heads, const Vocabulary& v) {
    NetworkDims d;
    d.vocab = {v.word_space_size(), v.tag_space_size(), v.letter_space_size(), v.action_space_size()};
    for (const auto& s : layout.slots) d.slots.push_back(s.space);
    d.back_flag = layout.back_flag;
    d.heads = heads.sizes;
    return d;
  }
};

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise.
inline double smooth_l1(double x, double y) {
  const double d = std::abs(x - y);
  return d < 1.0 ? 0.5 * d * d : d - 0.5;
}
inline double smooth_l1_grad(double x, double y) {
  const double d = x - y;
  return d > 1.0 ? 1.0 : (d < -1.0 ? -1.0 : d);
}

template <typename Scalar>
class QNetwork {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Cache {
    int head = -1;
    std::vector<int> symbols;
    Vec x;       // input after dropout
    Vec x_mask;  // empty without dropout; otherwise keep/(1-p)
    Vec z;       // pre-activation, after hidden dropout
    Vec z_mask;
    Vec h;
    Vec q;
  };

  // Gradient of a scalar loss for one sample. The W1 gradient is the rank-1
  // product dz * x^T and is never materialized.
  struct Gradients {
    int head = -1;
    Vec dz;  // also the b1 gradient
    Vec x;
    Mat d_head_w;
    Vec d_head_b;
    // (space, row) -> gradient of that embedding row, summed over slots.
    std::map<std::pair<int, int>, Vec> embed;

    bool finite() const {
      if (!dz.allFinite() || !d_head_w.allFinite() || !d_head_b.allFinite()) return false;
      for (const auto& [key, g] : embed)
        if (!g.allFinite()) return false;
      return true;
    }
  };

  QNetwork() = default;

  QNetwork(NetworkDims dims, std::uint64_t seed) : dims_(std::move(dims)), rng_(seed ^ 0xD40F0D15ULL) {
    Rng init(seed);
    for (int s = 0; s < kSpaceCount; ++s) {
      const int dim = dims_.dim_of(static_cast<Space>(s));
      emb_[s] = random_matrix(dims_.vocab[s], dim, std::sqrt(3.0 / dim), init);
    }
    const int in = dims_.input_dim(), hid = dims_.hidden;
    w1_ = random_matrix(hid, in, std::sqrt(6.0 / (in + hid)), init);
    b1_ = Mat::Zero(hid, 1);
    for (int size : dims_.heads) {
      head_w_.push_back(random_matrix(size, hid, std::sqrt(6.0 / (hid + size)), init));
      head_b_.push_back(Mat::Zero(size, 1));
    }
  }

  const NetworkDims& dims() const { return dims_; }
  int head_count() const { return static_cast<int>(head_w_.size()); }

  // Every parameter tensor in serialization order.
  std::vector<std::pair<std::string, Mat*>> tensors() {
    static const char* kSpaceNames[] = {"word", "pos", "letter", "action"};
    std::vector<std::pair<std::string, Mat*>> out;
    for (int s = 0; s < kSpaceCount; ++s) out.emplace_back(std::string("emb.") + kSpaceNames[s], &emb_[s]);
    out.emplace_back("w1", &w1_);
    out.emplace_back("b1", &b1_);
    for (std::size_t i = 0; i < head_w_.size(); ++i) {
      out.emplace_back("head" + std::to_string(i) + ".w", &head_w_[i]);
      out.emplace_back("head" + std::to_string(i) + ".b", &head_b_[i]);
    }
    return out;
  }
  std::vector<std::pair<std::string, const Mat*>> tensors() const {
    std::vector<std::pair<std::string, const Mat*>> out;
    for (auto& [name, t] : const_cast<QNetwork*>(this)->tensors()) out.emplace_back(name, t);
    return out;
  }

  Mat& embedding(Space s) { return emb_[static_cast<int>(s)]; }
  Mat& head_weights(int head) { return head_w_.at(head); }
  Mat& head_bias(int head) { return head_b_.at(head); }

  void reseed_dropout(std::uint64_t seed) { rng_.seed(seed); }

  bool operator==(const QNetwork& o) const {
    auto a = tensors();
    auto b = o.tensors();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].second->rows() != b[i].second->rows() || a[i].second->cols() != b[i].second->cols() ||
          *a[i].second != *b[i].second)
        return false;
    return true;
  }

  Vec forward(const FeatureVector& f, int head, bool train = false, Cache* cache = nullptr) {
    check_input(f, head);
    Vec x(dims_.input_dim());
    int off = 0;
    for (std::size_t i = 0; i < dims_.slots.size(); ++i) {
      const int s = static_cast<int>(dims_.slots[i]);
      const int dim = static_cast<int>(emb_[s].cols());
      x.segment(off, dim) = emb_[s].row(f.symbols[i]).transpose();
      off += dim;
    }
    if (dims_.back_flag) x(off) = static_cast<Scalar>(f.back_allowed);

    const bool drop = train && dims_.dropout > 0.0;
    Vec x_mask, z_mask;
    if (drop) {
      x_mask = dropout_mask(x.size());
      x.array() *= x_mask.array();
    }
    Vec z = w1_ * x + b1_.col(0);
    if (drop) {
      z_mask = dropout_mask(z.size());
      z.array() *= z_mask.array();
    }
    Vec h = z.cwiseMax(Scalar(0));
    Vec q = head_w_[head] * h + head_b_[head].col(0);
    if (cache) {
      cache->head = head;
      cache->symbols = f.symbols;
      cache->x = std::move(x);
      cache->x_mask = std::move(x_mask);
      cache->z = std::move(z);
      cache->z_mask = std::move(z_mask);
      cache->h = std::move(h);
      cache->q = q;
    }
    return q;
  }

  // Backpropagates dL/dq through the cached forward pass.
  Gradients backward(const Cache& c, const Vec& dq) const {
    Gradients g;
    g.head = c.head;
    g.d_head_b = dq;
    g.d_head_w = dq * c.h.transpose();
    Vec dh = head_w_[c.head].transpose() * dq;
    Vec dz = (c.z.array() > Scalar(0)).select(dh, Vec::Zero(dh.size()));
    if (c.z_mask.size()) dz.array() *= c.z_mask.array();
    g.dz = dz;
    g.x = c.x;
    Vec dx = w1_.transpose() * dz;
    if (c.x_mask.size()) dx.array() *= c.x_mask.array();
    int off = 0;
    for (std::size_t i = 0; i < dims_.slots.size(); ++i) {
      const int s = static_cast<int>(dims_.slots[i]);
      const int dim = static_cast<int>(emb_[s].cols());
      auto key = std::make_pair(s, c.symbols[i]);
      auto it = g.embed.find(key);
      if (it == g.embed.end())
        g.embed.emplace(key, dx.segment(off, dim));
      else
        it->second += dx.segment(off, dim);
      off += dim;
    }
    return g;
  }

  // Gradients laid out like tensors(); only sensible for small networks.
  std::vector<Mat> dense(const Gradients& g) const {
    std::vector<Mat> out;
    for (int s = 0; s < kSpaceCount; ++s) out.push_back(Mat::Zero(emb_[s].rows(), emb_[s].cols()));
    for (const auto& [key, v] : g.embed) out[key.first].row(key.second) += v.transpose();
    out.push_back(g.dz * g.x.transpose());
    out.push_back(g.dz);
    for (std::size_t i = 0; i < head_w_.size(); ++i) {
      if (static_cast<int>(i) == g.head) {
        out.push_back(g.d_head_w);
        out.push_back(g.d_head_b);
      } else {
        out.push_back(Mat::Zero(head_w_[i].rows(), head_w_[i].cols()));
        out.push_back(Mat::Zero(head_b_[i].rows(), 1));
      }
    }
    return out;
  }

  void step(const Gradients& g, double lr, const OptimizerConfig& opt = {}) {
    if (!g.finite()) throw Error("non-finite gradient in network update");
    const Scalar a = static_cast<Scalar>(lr);
    if (opt.kind == OptimizerKind::Sgd) {
      w1_.noalias() -= (a * g.dz) * g.x.transpose();
      b1_.col(0) -= a * g.dz;
      head_w_[g.head] -= a * g.d_head_w;
      head_b_[g.head].col(0) -= a * g.d_head_b;
      for (const auto& [key, v] : g.embed) emb_[key.first].row(key.second) -= a * v.transpose();
      return;
    }
    adam_step(g, lr, opt);
  }

  // One smooth-L1 step pulling Q(f, action) towards `target`. Returns the
  // loss before the step.
  double td_update(const FeatureVector& f, int head, int action, double target, double lr,
                   const OptimizerConfig& opt = {}) {
    if (!std::isfinite(target)) throw Error("td_update: non-finite target");
    Cache cache;
    Vec q = forward(f, head, /*train=*/true, &cache);
    const double pred = static_cast<double>(q(action));
    const double loss = smooth_l1(pred, target);
    if (!std::isfinite(loss)) throw Error("td_update: non-finite loss");
    Vec dq = Vec::Zero(q.size());
    dq(action) = static_cast<Scalar>(smooth_l1_grad(pred, target));
    if (dq(action) != Scalar(0)) step(backward(cache, dq), lr, opt);
    return loss;
  }

  // One cross-entropy step treating the head as a softmax classifier.
  double supervised_update(const FeatureVector& f, int head, int gold, double lr,
                           const OptimizerConfig& opt = {}) {
    Cache cache;
    Vec q = forward(f, head, /*train=*/true, &cache);
    Vec p = softmax(q);
    const double loss = -std::log(std::max(static_cast<double>(p(gold)), 1e-300));
    if (!std::isfinite(loss)) throw Error("supervised_update: non-finite loss");
    Vec dq = p;
    dq(gold) -= Scalar(1);
    step(backward(cache, dq), lr, opt);
    return loss;
  }

  static Vec softmax(const Vec& q) {
    Vec e = (q.array() - q.maxCoeff()).exp();
    return e / e.sum();
  }

  static double cross_entropy(const Vec& q, int gold) {
    const double mx = static_cast<double>(q.maxCoeff());
    double sum = 0;
    for (int i = 0; i < q.size(); ++i) sum += std::exp(static_cast<double>(q(i)) - mx);
    return -(static_cast<double>(q(gold)) - mx - std::log(sum));
  }

  // Initializes word embeddings from "word v1 v2 ..." lines for the given
  // word symbols. Returns the number of rows set.
  int load_pretrained(const std::map<int, std::vector<float>>& rows) {
    int set = 0;
    Mat& E = emb_[static_cast<int>(Space::Word)];
    for (const auto& [sym, v] : rows) {
      if (static_cast<int>(v.size()) != E.cols())
        throw ValidationError("pretrained vector has dimension " + std::to_string(v.size()) +
                              ", expected " + std::to_string(E.cols()));
      if (sym < 0 || sym >= E.rows()) continue;
      for (int j = 0; j < E.cols(); ++j) E(sym, j) = static_cast<Scalar>(v[j]);
      ++set;
    }
    return set;
  }

 private:
  void check_input(const FeatureVector& f, int head) const {
    if (head < 0 || head >= head_count())
      throw ValidationError("forward: head " + std::to_string(head) + " out of range");
    if (f.symbols.size() != dims_.slots.size())
      throw ValidationError("forward: feature vector has " + std::to_string(f.symbols.size()) +
                            " slots, network expects " + std::to_string(dims_.slots.size()));
    for (std::size_t i = 0; i < f.symbols.size(); ++i) {
      const int s = static_cast<int>(dims_.slots[i]);
      if (f.symbols[i] < 0 || f.symbols[i] >= emb_[s].rows())
        throw ValidationError("forward: symbol " + std::to_string(f.symbols[i]) + " outside table of slot " +
                              std::to_string(i));
    }
  }

  static Mat random_matrix(int rows, int cols, double scale, Rng& rng) {
    Mat m(rows, cols);
    for (int j = 0; j < cols; ++j)
      for (int i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(rng.uniform(-scale, scale));
    return m;
  }

  Vec dropout_mask(Eigen::Index size) {
    const double p = dims_.dropout;
    const Scalar keep = static_cast<Scalar>(1.0 / (1.0 - p));
    Vec m(size);
    for (Eigen::Index i = 0; i < size; ++i) m(i) = rng_.uniform() < p ? Scalar(0) : keep;
    return m;
  }

  // Adam with dense moments for the dense layers and lazily updated moments
  // for the embedding rows touched by this sample.
  void adam_step(const Gradients& g, double lr, const OptimizerConfig& opt) {
    if (adam_m_.empty()) {
      for (auto& [name, t] : tensors()) {
        adam_m_.push_back(Mat::Zero(t->rows(), t->cols()));
        adam_v_.push_back(Mat::Zero(t->rows(), t->cols()));
      }
    }
    ++adam_t_;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(adam_t_));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(adam_t_));
    const Scalar b1 = static_cast<Scalar>(opt.beta1), b2 = static_cast<Scalar>(opt.beta2);
    const Scalar step = static_cast<Scalar>(lr * std::sqrt(c2) / c1);
    const Scalar eps = static_cast<Scalar>(opt.eps);
    auto update = [&](auto&& param, auto&& m, auto&& v, const auto& grad) {
      m = b1 * m + (Scalar(1) - b1) * grad;
      v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
      param.array() -= step * m.array() / (v.array().sqrt() + eps);
    };
    for (const auto& [key, grad] : g.embed)
      update(emb_[key.first].row(key.second), adam_m_[key.first].row(key.second),
             adam_v_[key.first].row(key.second), grad.transpose());
    const int w1_index = kSpaceCount;
    Mat dw1 = g.dz * g.x.transpose();
    update(w1_, adam_m_[w1_index], adam_v_[w1_index], dw1);
    update(b1_, adam_m_[w1_index + 1], adam_v_[w1_index + 1], Mat(g.dz));
    const int hw = w1_index + 2 + 2 * g.head;
    update(head_w_[g.head], adam_m_[hw], adam_v_[hw], g.d_head_w);
    update(head_b_[g.head], adam_m_[hw + 1], adam_v_[hw + 1], Mat(g.d_head_b));
  }

  NetworkDims dims_;
  Rng rng_;
  std::array<Mat, kSpaceCount> emb_;
  Mat w1_, b1_;
  std::vector<Mat> head_w_, head_b_;
  std::vector<Mat> adam_m_, adam_v_;
  long adam_t_ = 0;
};

// r + gamma * max over legal next actions; r alone at terminal configurations.
template <typename Scalar>
double q_target(double r, const Configuration& next, const Instance& in, const Machine& m,
                QNetwork<Scalar>& net, const HeadLayout& heads, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw UsageError("gamma must lie in [0, 1]");
  if (next.terminal || gamma == 0.0) return r;
  const auto q = net.forward(extract_features(next, in, m), heads.head_for(next.state));
  double best = -std::numeric_limits<double>::infinity();
  for (const Action& a : legal_actions(next, m))
    best = std::max(best, static_cast<double>(q(HeadLayout::output_index(a))));
  return r + gamma * best;
}

}  // namespace brm
