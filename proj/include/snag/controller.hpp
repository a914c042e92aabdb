#pragma once

// Recurrent policy over genotypes, trained with REINFORCE.
//
// Decision slots, in order: K node aggregators, K-1 skip bits, one layer
// aggregator (the last two groups are absent in the ablated space). The
// embedding of each chosen action is the LSTM input of the next slot; the
// first slot reads a learned start embedding.

#include <vector>

#include "snag/adam.hpp"
#include "snag/gnn.hpp"

namespace snag {

struct ControllerConfig {
  std::size_t hidden = 64;
  std::size_t embed = 32;
  double lr = 0.005;
  double entropy_weight = 1e-3;
  double baseline_decay = 0.95;
};

struct ControllerSample {
  Genotype genotype;
  std::vector<std::size_t> actions;
  std::vector<double> log_probs;  // one per slot
  double entropy = 0.0;           // summed over slots
};

struct Episode {
  Genotype genotype;
  double reward = 0.0;
};

class Controller {
 public:
  Controller(const SearchSpaceConfig& space, const ControllerConfig& cfg, std::uint64_t seed);

  const SearchSpaceConfig& space() const { return space_; }
  const ControllerConfig& config() const { return cfg_; }
  std::size_t num_slots() const { return slot_sizes_.size(); }
  const std::vector<std::size_t>& slot_sizes() const { return slot_sizes_; }

  ControllerSample sample(Rng& rng) const;

  // Slot actions of a genotype inside the space; throws InputError otherwise.
  std::vector<std::size_t> actions_of(const Genotype& g) const;
  Genotype genotype_of(std::span<const std::size_t> actions) const;

  // Teacher-forced per-slot probability vectors for the given genotype.
  std::vector<std::vector<double>> slot_probabilities(const Genotype& g) const;
  double log_prob(const Genotype& g) const;

  // Mean over episodes of sum_slots log p(a) * (R - baseline) plus
  // entropy_weight times the mean entropy, recorded on the tape.
  Tensor surrogate(Tape& tape, std::span<const Episode> episodes) const;

  // One Adam ascent step on the surrogate, then the baseline moves toward
  // the mean reward.
  void reinforce_update(std::span<const Episode> episodes);

  double baseline() const { return baseline_; }
  void set_baseline(double b) { baseline_ = b; }
  std::vector<Tensor> parameters() const;

 private:
  struct StepOut {
    Tensor log_probs;  // [1 x A]
    Tensor probs;      // [1 x A]
  };
  // Runs the recurrence; with `forced` actions teacher-forces, otherwise
  // samples from rng and appends to `chosen`.
  std::vector<StepOut> run(Tape& tape, std::span<const std::size_t> forced, Rng* rng,
                           std::vector<std::size_t>* chosen) const;

  SearchSpaceConfig space_;
  ControllerConfig cfg_;
  std::vector<std::size_t> slot_sizes_;
  Tensor start_;
  Tensor wx_, wh_, b_;
  std::vector<Tensor> head_w_, head_b_, embed_;
  AdamState adam_;
  double baseline_ = 0.0;
};

}  // namespace snag
