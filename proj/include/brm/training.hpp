#pragma once

// Training regimes (supervised, Q-learning, Q-learning with BACK), greedy
// decoding and the run configuration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "brm/corpus.hpp"
#include "brm/error.hpp"
#include "brm/eval.hpp"
#include "brm/features.hpp"
#include "brm/machine.hpp"
#include "brm/network.hpp"
#include "brm/oracle.hpp"
#include "brm/random.hpp"
#include "brm/reward.hpp"
#include "brm/vocab.hpp"

namespace brm {

enum class Regime { Sup, Rl, RlBacktrack };

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::Sup: return "sup";
    case Regime::Rl: return "rl";
    case Regime::RlBacktrack: return "rl-backtrack";
  }
  return "?";
}

inline Regime parse_regime(std::string_view s) {
  if (s == "sup") return Regime::Sup;
  if (s == "rl") return Regime::Rl;
  if (s == "rl-backtrack" || s == "rl_backtrack") return Regime::RlBacktrack;
  throw UsageError("unknown regime '" + std::string(s) + "' (expected sup, rl or rl-backtrack)");
}

// Exploration probabilities for epoch t (1-based):
//   epsilon(t) = eps_floor + eps_amp * exp(-eps_rate * (t - 1))   random legal action
//   beta(t)    = beta_amp * exp(-beta_rate * (t - 1))             oracle action
// Both are clamped so that epsilon + beta <= 1.
struct Schedule {
  double eps_floor = 0.1;
  double eps_amp = 0.5;
  double eps_rate = 0.25;
  double beta_amp = 0.3;
  double beta_rate = 0.5;

  double epsilon(int t) const {
    return std::clamp(eps_floor + eps_amp * std::exp(-eps_rate * (t - 1)), 0.0, 1.0);
  }
  double beta(int t) const {
    return std::clamp(beta_amp * std::exp(-beta_rate * (t - 1)), 0.0, 1.0 - epsilon(t));
  }
};

struct TrainConfig {
  Task task = Task::Tagger;
  Regime regime = Regime::Sup;
  int k = -1;       // -1: 1 for rl-backtrack, 0 otherwise
  int epochs = -1;  // -1: 300 for the tagparser, 200 otherwise
  double alpha = 0.01;
  double gamma = 0.9;
  std::uint64_t seed = 1;
  int batch_size = 1;  // supervised only; Q-learning updates are online
  int hidden = 3200;
  int embed_dim = 128;
  int word_dim = 300;
  double dropout = 0.3;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  Schedule schedule;
  int static_epochs = 2;  // supervised: epochs on static-oracle data
  int dynamic_every = 2;  // supervised: re-collect dynamic-oracle data this often
  std::optional<double> stop_at;  // stop once the dev score reaches this value
  std::string pretrained;         // word vectors, one "word v1 ... vd" per line

  // Fills in the regime-dependent defaults and checks every field.
  TrainConfig resolved() const {
    TrainConfig c = *this;
    if (c.k < 0) c.k = c.regime == Regime::RlBacktrack ? 1 : 0;
    if (c.epochs < 0) c.epochs = c.task == Task::TagParser ? 300 : 200;
    c.validate();
    return c;
  }

  void validate() const {
    if (regime != Regime::RlBacktrack && k > 0)
      throw UsageError("k = " + std::to_string(k) + " requires the rl-backtrack regime");
    if (epochs < 1) throw UsageError("epochs must be at least 1");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw UsageError("alpha must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw UsageError("gamma must lie in [0, 1]");
    if (batch_size < 1) throw UsageError("batch_size must be at least 1");
    if (hidden < 1 || embed_dim < 1 || word_dim < 1) throw UsageError("layer sizes must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
    if (static_epochs < 0 || dynamic_every < 1) throw UsageError("bad supervised schedule");
  }

  bool backtracking() const { return regime == Regime::RlBacktrack; }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {
      {"task", std::string(to_string(c.task))},
      {"regime", std::string(to_string(c.regime))},
      {"k", c.k},
      {"epochs", c.epochs},
      {"alpha", c.alpha},
      {"gamma", c.gamma},
      {"seed", c.seed},
      {"batch_size", c.batch_size},
      {"hidden", c.hidden},
      {"embed_dim", c.embed_dim},
      {"word_dim", c.word_dim},
      {"dropout", c.dropout},
      {"optimizer", c.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
      {"schedule",
       {{"eps_floor", c.schedule.eps_floor},
        {"eps_amp", c.schedule.eps_amp},
        {"eps_rate", c.schedule.eps_rate},
        {"beta_amp", c.schedule.beta_amp},
        {"beta_rate", c.schedule.beta_rate}}},
      {"static_epochs", c.static_epochs},
      {"dynamic_every", c.dynamic_every},
      {"pretrained", c.pretrained},
  };
  j["stop_at"] = c.stop_at ? nlohmann::json(*c.stop_at) : nlohmann::json(nullptr);
  return j;
}

// Reads the fields present in `j` on top of `base`. Unknown keys are errors so
// that typos do not silently fall back to defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  static const std::vector<std::string> known = {
      "task",   "regime",  "k",         "epochs",  "alpha",     "gamma",         "seed",          "batch_size",
      "hidden", "embed_dim", "word_dim", "dropout", "optimizer", "schedule", "static_epochs", "dynamic_every",
      "stop_at", "pretrained"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw UsageError("unknown config key '" + key + "'");
  try {
    if (j.contains("task")) base.task = parse_task(j["task"].get<std::string>());
    if (j.contains("regime")) base.regime = parse_regime(j["regime"].get<std::string>());
    if (j.contains("k")) base.k = j["k"].get<int>();
    if (j.contains("epochs")) base.epochs = j["epochs"].get<int>();
    if (j.contains("alpha")) base.alpha = j["alpha"].get<double>();
    if (j.contains("gamma")) base.gamma = j["gamma"].get<double>();
    if (j.contains("seed")) base.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("batch_size")) base.batch_size = j["batch_size"].get<int>();
    if (j.contains("hidden")) base.hidden = j["hidden"].get<int>();
    if (j.contains("embed_dim")) base.embed_dim = j["embed_dim"].get<int>();
    if (j.contains("word_dim")) base.word_dim = j["word_dim"].get<int>();
    if (j.contains("dropout")) base.dropout = j["dropout"].get<double>();
    if (j.contains("optimizer")) {
      const auto o = j["optimizer"].get<std::string>();
      if (o == "sgd")
        base.optimizer = OptimizerKind::Sgd;
      else if (o == "adam")
        base.optimizer = OptimizerKind::Adam;
      else
        throw UsageError("unknown optimizer '" + o + "'");
    }
    if (j.contains("schedule")) {
      const auto& s = j["schedule"];
      base.schedule.eps_floor = s.value("eps_floor", base.schedule.eps_floor);
      base.schedule.eps_amp = s.value("eps_amp", base.schedule.eps_amp);
      base.schedule.eps_rate = s.value("eps_rate", base.schedule.eps_rate);
      base.schedule.beta_amp = s.value("beta_amp", base.schedule.beta_amp);
      base.schedule.beta_rate = s.value("beta_rate", base.schedule.beta_rate);
    }
    if (j.contains("static_epochs")) base.static_epochs = j["static_epochs"].get<int>();
    if (j.contains("dynamic_every")) base.dynamic_every = j["dynamic_every"].get<int>();
    if (j.contains("stop_at"))
      base.stop_at = j["stop_at"].is_null() ? std::nullopt : std::optional<double>(j["stop_at"].get<double>());
    if (j.contains("pretrained")) base.pretrained = j["pretrained"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  }
  return base;
}

// Everything needed to decode: configuration, vocabulary, machine, layouts
// and weights.
struct Model {
  TrainConfig config;
  Vocabulary vocab;
  Machine machine;
  FeatureLayout layout;
  HeadLayout heads;
  QNetwork<float> net;

  static Model create(const TrainConfig& raw, Vocabulary vocab) {
    Model mdl;
    mdl.config = raw.resolved();
    mdl.vocab = std::move(vocab);
    mdl.machine = Machine{mdl.config.task, mdl.config.backtracking(), mdl.config.k, mdl.vocab.tags.size()};
    mdl.layout = FeatureLayout::for_machine(mdl.machine);
    mdl.heads = HeadLayout::for_machine(mdl.machine);
    NetworkDims d = NetworkDims::make(mdl.layout, mdl.heads, mdl.vocab);
    d.hidden = mdl.config.hidden;
    d.embed_dim = mdl.config.embed_dim;
    d.word_dim = mdl.config.word_dim;
    d.dropout = mdl.config.dropout;
    mdl.net = QNetwork<float>(d, mdl.config.seed);
    return mdl;
  }

  // The trained machine with a different BACK budget. Only backtracking
  // models have a BACK head, so k > 0 needs one.
  Machine machine_with_k(std::optional<int> k) const {
    Machine m = machine;
    if (!k) return m;
    if (*k < 0) throw UsageError("k must be non-negative");
    if (*k > 0 && !m.backtracking) throw UsageError("model was trained without BACK; k must be 0");
    m.k = *k;
    return m;
  }

  // The score used for checkpoint selection.
  double score(const Metrics& m) const { return machine.parses() ? m.uas() : m.upos(); }
  // Ties on the main score are broken by the other tape's accuracy.
  std::pair<double, double> score_key(const Metrics& m) const {
    return {score(m), machine.task == Task::TagParser ? m.upos() : 0.0};
  }

  OptimizerConfig optimizer() const {
    OptimizerConfig o;
    o.kind = config.optimizer;
    return o;
  }
};

// Reads "word v1 ... vd" lines (an optional "count dim" header line is
// skipped) for words in the vocabulary.
inline std::map<int, std::vector<float>> read_pretrained(const std::string& path, const Vocabulary& v) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pretrained vectors '" + path + "'");
  std::map<int, std::vector<float>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<float> vec;
    float x;
    while (ls >> x) vec.push_back(x);
    if (first && vec.size() == 1) {
      first = false;
      continue;
    }
    first = false;
    const int sym = v.word_symbol(word);
    if (sym != kUnknown) rows[sym] = std::move(vec);
  }
  return rows;
}

namespace detail {

inline Action greedy(QNetwork<float>& net, const HeadLayout& heads, const FeatureVector& f, State state,
                     const std::vector<Action>& legal) {
  const auto q = net.forward(f, heads.head_for(state));
  std::size_t best = 0;
  for (std::size_t i = 1; i < legal.size(); ++i)
    if (q(HeadLayout::output_index(legal[i])) > q(HeadLayout::output_index(legal[best]))) best = i;
  return legal[best];
}

}  // namespace detail

// Exploration policy for one training step: a uniformly random legal action
// with probability epsilon, the oracle action with probability beta, the
// greedy action otherwise. A single legal action is returned without
// consulting the network.
inline Action select_action(Model& model, const Machine& m, const Configuration& c, const Instance& in,
                            double epsilon, double beta, Rng& rng) {
  const auto legal = legal_actions(c, m);
  if (legal.empty()) throw IllegalAction("select_action: no legal action");
  if (legal.size() == 1) return legal.front();
  const double u = rng.uniform();
  if (u < epsilon) return legal[rng.below(legal.size())];
  if (u < epsilon + beta) return oracle_action(c, in.gold, m);
  return detail::greedy(model.net, model.heads, extract_features(c, in, m), c.state, legal);
}

struct DecodeResult {
  Configuration final;
  std::vector<int> tags;   // per word, tag ids (input tags for the parser)
  std::vector<int> heads;  // per word, 0 = root (0 everywhere for the tagger)
  int backs = 0;
};

// Greedy decoding with dropout off. With `annotate` every action carries the
// reward it would receive against the instance's gold annotation.
inline DecodeResult decode(Model& model, const Machine& m, const Instance& in, bool annotate = false) {
  Configuration c = initial_config(m, in);
  const long cap = max_actions(in.n, m);
  while (!c.terminal) {
    if (static_cast<long>(c.history.size()) >= cap)
      throw Error("decode: exceeded the action bound of " + std::to_string(cap));
    const auto legal = legal_actions(c, m);
    Action a = legal.size() == 1 ? legal.front()
                                 : detail::greedy(model.net, model.heads, extract_features(c, in, m), c.state, legal);
    if (annotate) a.reward = reward(c, a, in.gold, m);
    apply_in_place(c, a, m);
  }
  DecodeResult r;
  r.final = std::move(c);
  for (int w = 1; w <= in.n; ++w) {
    const TapeCell& cell = r.final.pos_tape[w];
    r.tags.push_back(cell.has_value() ? cell.value : TagSet::kUnk);
  }
  r.heads = m.parses() ? predicted_heads(r.final) : std::vector<int>(in.n, 0);
  for (const auto& a : r.final.history) r.backs += a.kind == ActionKind::Back;
  return r;
}

// Writes the predictions into a copy of the input sentence.
inline Sentence to_sentence(const DecodeResult& r, const Sentence& source, const Model& model, const Machine& m) {
  Sentence out = source;
  for (int i = 0; i < source.n(); ++i) {
    if (m.tags()) out.tokens[i].upos = model.vocab.tags.name(r.tags[i]);
    if (m.parses()) {
      out.tokens[i].head = r.heads[i];
      out.tokens[i].deprel = "_";
    }
  }
  return out;
}

inline Metrics score_decode(const DecodeResult& r, const Instance& in) {
  Metrics m;
  for (int i = 0; i < in.n; ++i) {
    ++m.tokens;
    m.upos_correct += r.tags[i] == in.gold.tags[i];
    m.uas_correct += r.heads[i] == in.gold.heads[i];
  }
  return m;
}

struct EvalSummary {
  Metrics metrics;
  long backs = 0;
};

inline EvalSummary evaluate(Model& model, const Machine& m, const std::vector<Instance>& data) {
  EvalSummary s;
  for (const auto& in : data) {
    DecodeResult r = decode(model, m, in);
    s.metrics += score_decode(r, in);
    s.backs += r.backs;
  }
  return s;
}

struct EpochMetrics {
  int epoch = 0;
  double epsilon = 0.0;
  double beta = 0.0;
  double loss = 0.0;  // mean per update
  long updates = 0;
  long actions = 0;
  long backs = 0;    // BACK actions taken while training
  long aborted = 0;  // episodes stopped at the action bound
  Metrics dev;
  long dev_backs = 0;
  double dev_score = 0.0;
  bool best = false;

  bool operator==(const EpochMetrics& o) const {
    return epoch == o.epoch && epsilon == o.epsilon && beta == o.beta && loss == o.loss && updates == o.updates &&
           actions == o.actions && backs == o.backs && aborted == o.aborted && dev.tokens == o.dev.tokens &&
           dev.upos_correct == o.dev.upos_correct && dev.uas_correct == o.dev.uas_correct &&
           dev_backs == o.dev_backs && dev_score == o.dev_score && best == o.best;
  }
};

inline nlohmann::json to_json(const EpochMetrics& e) {
  return {{"epoch", e.epoch},     {"epsilon", e.epsilon}, {"beta", e.beta},       {"loss", e.loss},
          {"updates", e.updates}, {"actions", e.actions}, {"backs", e.backs},     {"aborted", e.aborted},
          {"dev", to_json(e.dev)}, {"dev_backs", e.dev_backs}, {"dev_score", e.dev_score}, {"best", e.best}};
}

struct TrainResult {
  Model model;  // best dev checkpoint (last epoch without a dev set)
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_score = 0.0;
  long aborted = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

namespace detail {

struct Sample {
  FeatureVector f;
  int head;
  int gold;
};

inline void collect_static(const Model& model, const std::vector<Instance>& data, std::vector<Sample>& out) {
  const Machine& m = model.machine;
  for (const auto& in : data) {
    if (m.parses() && !is_projective(in.gold.heads)) continue;
    Configuration c = initial_config(m, in);
    for (const Action& a : static_oracle(in.gold, m)) {
      if (legal_actions(c, m).size() > 1)
        out.push_back({extract_features(c, in, m), model.heads.head_for(c.state), HeadLayout::output_index(a)});
      apply_in_place(c, a, m);
    }
  }
}

// Follows the current greedy policy over `data` and labels every visited
// configuration with the dynamic oracle.
inline void collect_dynamic(Model& model, const std::vector<Instance>& data, std::vector<Sample>& out) {
  const Machine& m = model.machine;
  for (const auto& in : data) {
    Configuration c = initial_config(m, in);
    while (!c.terminal) {
      const auto legal = legal_actions(c, m);
      if (legal.size() == 1) {
        apply_in_place(c, legal.front(), m);
        continue;
      }
      FeatureVector f = extract_features(c, in, m);
      const Action gold = oracle_action(c, in.gold, m);
      const Action chosen = greedy(model.net, model.heads, f, c.state, legal);
      out.push_back({std::move(f), model.heads.head_for(c.state), HeadLayout::output_index(gold)});
      apply_in_place(c, chosen, m);
    }
  }
}

// One pass of cross-entropy updates. Within a batch every gradient is taken
// at the parameters from the start of the batch.
inline std::pair<double, long> supervised_epoch(Model& model, std::vector<Sample>& samples, Rng& rng) {
  rng.shuffle(samples);
  const OptimizerConfig opt = model.optimizer();
  const std::size_t bs = static_cast<std::size_t>(model.config.batch_size);
  double loss = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += bs) {
    const std::size_t end = std::min(samples.size(), start + bs);
    if (end - start == 1) {
      loss += model.net.supervised_update(samples[start].f, samples[start].head, samples[start].gold,
                                          model.config.alpha, opt);
      continue;
    }
    std::vector<QNetwork<float>::Gradients> grads;
    for (std::size_t i = start; i < end; ++i) {
      QNetwork<float>::Cache cache;
      auto q = model.net.forward(samples[i].f, samples[i].head, true, &cache);
      loss += QNetwork<float>::cross_entropy(q, samples[i].gold);
      auto dq = QNetwork<float>::softmax(q);
      dq(samples[i].gold) -= 1.0f;
      grads.push_back(model.net.backward(cache, dq));
    }
    const double lr = model.config.alpha / static_cast<double>(end - start);
    for (const auto& g : grads) model.net.step(g, lr, opt);
  }
  return {loss, static_cast<long>(samples.size())};
}

struct EpisodeStats {
  double loss = 0.0;
  long updates = 0;
  long actions = 0;
  long backs = 0;
  bool aborted = false;
};

// One Q-learning episode over a sentence with online smooth-L1 updates.
inline EpisodeStats rl_episode(Model& model, const Instance& in, double epsilon, double beta, Rng& rng) {
  const Machine& m = model.machine;
  const OptimizerConfig opt = model.optimizer();
  EpisodeStats s;
  Configuration c = initial_config(m, in);
  const long cap = max_actions(in.n, m);
  while (!c.terminal) {
    if (s.actions >= cap) {
      s.aborted = true;
      break;
    }
    FeatureVector f = extract_features(c, in, m);
    const int head = model.heads.head_for(c.state);
    Action a = select_action(model, m, c, in, epsilon, beta, rng);
    a.reward = reward(c, a, in.gold, m);
    apply_in_place(c, a, m);
    const double target = q_target(a.reward, c, in, m, model.net, model.heads, model.config.gamma);
    s.loss += model.net.td_update(f, head, HeadLayout::output_index(a), target, model.config.alpha, opt);
    ++s.updates;
    ++s.actions;
    s.backs += a.kind == ActionKind::Back;
  }
  return s;
}

}  // namespace detail

inline std::vector<Instance> encode_all(const std::vector<Sentence>& corpus, const Vocabulary& v) {
  std::vector<Instance> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(encode(s, v));
  return out;
}

// Trains a model from scratch. The vocabulary comes from `train` only.
inline TrainResult train(const TrainConfig& raw, const std::vector<Sentence>& train_set,
                         const std::vector<Sentence>& dev_set, const EpochCallback& on_epoch = {}) {
  if (train_set.empty()) throw UsageError("training corpus is empty");
  TrainResult result;
  Model model = Model::create(raw, Vocabulary::build(train_set));
  const TrainConfig& cfg = model.config;
  if (!cfg.pretrained.empty()) model.net.load_pretrained(read_pretrained(cfg.pretrained, model.vocab));

  const auto train_data = encode_all(train_set, model.vocab);
  const auto dev_data = encode_all(dev_set, model.vocab);

  std::vector<detail::Sample> samples;
  if (cfg.regime == Regime::Sup && cfg.static_epochs > 0) {
    detail::collect_static(model, train_data, samples);
    if (samples.empty())
      throw ValidationError(model.machine.parses() ? "no projective sentence to train the static oracle on"
                                                   : "no training configurations");
  }

  Rng run_rng(cfg.seed);
  std::pair<double, double> best_key{-1.0, -1.0};
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng = run_rng.fork(static_cast<std::uint64_t>(epoch));
    EpochMetrics em;
    em.epoch = epoch;
    double loss = 0.0;
    if (cfg.regime == Regime::Sup) {
      const int since = epoch - cfg.static_epochs - 1;
      if (since >= 0 && since % cfg.dynamic_every == 0) {
        samples.clear();
        detail::collect_dynamic(model, train_data, samples);
      }
      auto [l, u] = detail::supervised_epoch(model, samples, rng);
      loss = l;
      em.updates = u;
    } else {
      em.epsilon = cfg.schedule.epsilon(epoch);
      em.beta = cfg.schedule.beta(epoch);
      std::vector<std::size_t> order(train_data.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
      for (std::size_t i : order) {
        auto s = detail::rl_episode(model, train_data[i], em.epsilon, em.beta, rng);
        loss += s.loss;
        em.updates += s.updates;
        em.actions += s.actions;
        em.backs += s.backs;
        em.aborted += s.aborted;
      }
    }
    em.loss = em.updates ? loss / static_cast<double>(em.updates) : 0.0;
    result.aborted += em.aborted;

    if (!dev_data.empty()) {
      EvalSummary ev = evaluate(model, model.machine, dev_data);
      em.dev = ev.metrics;
      em.dev_backs = ev.backs;
      em.dev_score = model.score(ev.metrics);
    }
    if (dev_data.empty() || model.score_key(em.dev) > best_key) {
      em.best = true;
      if (!dev_data.empty()) best_key = model.score_key(em.dev);
      result.best_score = em.dev_score;
      result.best_epoch = epoch;
      result.model = model;
    }
    result.history.push_back(em);
    if (on_epoch) on_epoch(em);
    if (cfg.stop_at && !dev_data.empty() && em.dev_score >= *cfg.stop_at) break;
  }
  return result;
}

}  // namespace brm
