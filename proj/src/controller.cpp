#include "snag/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace snag {

namespace {

Tensor uniform_init(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  Tensor t = Tensor::zeros(rows, cols, true);
  std::uniform_real_distribution<double> u(-limit, limit);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

template <typename T>
std::size_t index_in(const std::vector<T>& v, T x) {
  auto it = std::find(v.begin(), v.end(), x);
  if (it == v.end()) throw InputError("genotype choice '" + std::string(to_string(x)) + "' is outside the search space");
  return static_cast<std::size_t>(it - v.begin());
}

}  // namespace

Controller::Controller(const SearchSpaceConfig& space, const ControllerConfig& cfg, std::uint64_t seed)
    : space_(canonicalize(space)), cfg_(cfg) {
  const std::size_t k = space_.layers;
  slot_sizes_.assign(k, space_.node_aggs.size());
  if (space_.layer_aggregation) {
    slot_sizes_.insert(slot_sizes_.end(), k - 1, 2);
    slot_sizes_.push_back(space_.layer_aggs.size());
  }
  Rng rng = make_rng({seed, stream::kControllerInit});
  const std::size_t h = cfg_.hidden, e = cfg_.embed;
  const double lim = 1.0 / std::sqrt(static_cast<double>(h));
  start_ = uniform_init(1, e, lim, rng);
  wx_ = uniform_init(e, 4 * h, lim, rng);
  wh_ = uniform_init(h, 4 * h, lim, rng);
  b_ = Tensor::zeros(1, 4 * h, true);
  for (std::size_t s = 0; s < slot_sizes_.size(); ++s) {
    const std::size_t a = slot_sizes_[s];
    // Zero heads: every slot starts uniform.
    head_w_.push_back(Tensor::zeros(h, a, true));
    head_b_.push_back(Tensor::zeros(1, a, true));
    // The last slot's choice feeds nothing, so it has no embedding table.
    if (s + 1 < slot_sizes_.size()) embed_.push_back(uniform_init(a, e, lim, rng));
  }
  adam_ = AdamState({.learning_rate = cfg_.lr}, parameters());
}

std::vector<Tensor> Controller::parameters() const {
  std::vector<Tensor> p{start_, wx_, wh_, b_};
  p.insert(p.end(), head_w_.begin(), head_w_.end());
  p.insert(p.end(), head_b_.begin(), head_b_.end());
  p.insert(p.end(), embed_.begin(), embed_.end());
  return p;
}

std::vector<Controller::StepOut> Controller::run(Tape& tape, std::span<const std::size_t> forced, Rng* rng,
                                                 std::vector<std::size_t>* chosen) const {
  std::vector<StepOut> out;
  LstmState state{Tensor::zeros(1, cfg_.hidden), Tensor::zeros(1, cfg_.hidden)};
  Tensor x = start_;
  for (std::size_t s = 0; s < slot_sizes_.size(); ++s) {
    state = lstm_cell(tape, x, state, wx_, wh_, b_);
    Tensor logits = tape.add_row(tape.matmul(state.h, head_w_[s]), head_b_[s]);
    StepOut step{tape.log_softmax(logits), tape.row_softmax(logits)};
    std::size_t a;
    if (!forced.empty()) {
      a = forced[s];
    } else {
      // Inverse-CDF draw; keeps sampling identical across standard libraries.
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(*rng);
      const auto p = step.probs.data();
      double acc = 0.0;
      a = p.size() - 1;
      for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) {
          a = i;
          break;
        }
      }
      chosen->push_back(a);
    }
    if (s + 1 < slot_sizes_.size()) x = tape.gather_rows(embed_[s], std::vector<Index>{static_cast<Index>(a)});
    out.push_back(std::move(step));
  }
  return out;
}

ControllerSample Controller::sample(Rng& rng) const {
  Tape tape(false);
  ControllerSample res;
  auto steps = run(tape, {}, &rng, &res.actions);
  for (std::size_t s = 0; s < steps.size(); ++s) {
    res.log_probs.push_back(steps[s].log_probs.data()[res.actions[s]]);
    const auto p = steps[s].probs.data();
    const auto lp = steps[s].log_probs.data();
    for (std::size_t i = 0; i < p.size(); ++i) res.entropy -= p[i] * lp[i];
  }
  res.genotype = genotype_of(res.actions);
  return res;
}

std::vector<std::size_t> Controller::actions_of(const Genotype& g) const {
  if (!contains(space_, g)) throw InputError("genotype " + encode(g) + " is outside the search space");
  std::vector<std::size_t> a;
  for (auto n : g.node_aggs) a.push_back(index_in(space_.node_aggs, n));
  if (space_.layer_aggregation) {
    for (bool b : g.skips) a.push_back(b ? 1 : 0);
    a.push_back(index_in(space_.layer_aggs, *g.layer_agg));
  }
  return a;
}

Genotype Controller::genotype_of(std::span<const std::size_t> actions) const {
  const std::size_t k = space_.layers;
  Genotype g;
  for (std::size_t l = 0; l < k; ++l) g.node_aggs.push_back(space_.node_aggs.at(actions[l]));
  if (space_.layer_aggregation) {
    for (std::size_t l = 0; l + 1 < k; ++l) g.skips.push_back(actions[k + l] == 1);
    g.layer_agg = space_.layer_aggs.at(actions[2 * k - 1]);
  } else {
    g.skips.assign(k - 1, false);
  }
  return g;
}

std::vector<std::vector<double>> Controller::slot_probabilities(const Genotype& g) const {
  Tape tape(false);
  const auto actions = actions_of(g);
  std::vector<std::vector<double>> out;
  for (const auto& s : run(tape, actions, nullptr, nullptr)) {
    out.emplace_back(s.probs.data().begin(), s.probs.data().end());
  }
  return out;
}

double Controller::log_prob(const Genotype& g) const {
  Tape tape(false);
  const auto actions = actions_of(g);
  const auto steps = run(tape, actions, nullptr, nullptr);
  double lp = 0.0;
  for (std::size_t s = 0; s < steps.size(); ++s) lp += steps[s].log_probs.data()[actions[s]];
  return lp;
}

Tensor Controller::surrogate(Tape& tape, std::span<const Episode> episodes) const {
  if (episodes.empty()) throw std::invalid_argument("reinforce update needs at least one episode");
  Tensor total;
  const double inv = 1.0 / static_cast<double>(episodes.size());
  for (const auto& ep : episodes) {
    const auto actions = actions_of(ep.genotype);
    const auto steps = run(tape, actions, nullptr, nullptr);
    const double adv = ep.reward - baseline_;
    for (std::size_t s = 0; s < steps.size(); ++s) {
      Tensor term = tape.scale(tape.element(steps[s].log_probs, 0, actions[s]), adv * inv);
      if (cfg_.entropy_weight != 0.0) {
        Tensor ent = tape.sum(tape.mul(steps[s].probs, steps[s].log_probs));  // -entropy
        term = tape.add(term, tape.scale(ent, -cfg_.entropy_weight * inv));
      }
      total = total.defined() ? tape.add(total, term) : term;
    }
  }
  return total;
}

void Controller::reinforce_update(std::span<const Episode> episodes) {
  auto params = parameters();
  for (auto& p : params) p.zero_grad();
  Tape tape;
  Tensor objective = tape.scale(surrogate(tape, episodes), -1.0);
  tape.backward(objective);
  adam_step(params, adam_);
  double mean = 0.0;
  for (const auto& ep : episodes) mean += ep.reward;
  mean /= static_cast<double>(episodes.size());
  baseline_ = cfg_.baseline_decay * baseline_ + (1.0 - cfg_.baseline_decay) * mean;
}

}  // namespace snag
