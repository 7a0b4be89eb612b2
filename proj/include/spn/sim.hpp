#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spn/network.hpp"
#include "spn/solvers.hpp"
#include "spn/state_space.hpp"

namespace spn {

// A (possibly stochastic) atomic policy. `step` is the 1-based atomic step
// within the time step; step-independent policies ignore it.
class AtomicPolicy {
 public:
  virtual ~AtomicPolicy() = default;
  // Fills probs (length J*J+1). Entries where mask is 0 must be zero.
  virtual void distribution(const SystemState& state, int step, std::span<const std::uint8_t> mask,
                            std::span<double> probs) const = 0;
  virtual std::string name() const = 0;
};

// Looks up enumerated states; one code table, or one per atomic step.
class TablePolicy : public AtomicPolicy {
 public:
  TablePolicy(const StateIndex& idx, std::vector<std::vector<int>> codes, std::string name = "table");
  void distribution(const SystemState& state, int step, std::span<const std::uint8_t> mask,
                    std::span<double> probs) const override;
  std::string name() const override { return name_; }

 private:
  const StateIndex& idx_;
  std::vector<std::vector<int>> codes_;
  std::string name_;
};

// Deterministic policy putting all mass on the most likely feasible action of
// `base` (smallest code on ties).
class ArgmaxPolicy : public AtomicPolicy {
 public:
  explicit ArgmaxPolicy(const AtomicPolicy& base) : base_(base) {}
  void distribution(const SystemState& state, int step, std::span<const std::uint8_t> mask,
                    std::span<double> probs) const override;
  std::string name() const override { return base_.name() + " (greedy)"; }

 private:
  const AtomicPolicy& base_;
};

// Evaluates `policy` at every enumerated state. With greedy set, each row is
// the indicator of the most likely action (smallest code on ties).
AtomicPolicyTable tabulate_policy(const AtomicPolicy& policy, const Instance& inst, const StateIndex& idx,
                                  int num_steps = 1, bool greedy = false);
std::vector<int> greedy_codes(const AtomicPolicyTable& table, int step = 0);

enum class RolloutMode { kKStep, kPassingLast };

std::string to_string(RolloutMode mode);
RolloutMode rollout_mode_from_string(const std::string& text);

struct SeedSpec {
  std::uint64_t master = 0;
  std::uint32_t round = 0;  // e.g. the training iteration

  // Trajectory m uses these streams under key `master`.
  std::uint64_t dynamics_stream(std::uint32_t m) const;
  std::uint64_t action_stream(std::uint32_t m) const;
};

struct TrajectoryBatch {
  int M = 0, T = 0, K = 0;
  int state_dim = 0;
  int num_atomic = 0;
  RolloutMode mode = RolloutMode::kKStep;
  std::uint64_t config_hash = 0;
  SeedSpec seeds;

  std::vector<int> states;             // M*T*(K+1)*state_dim; slot `steps` onward hold the post-decision state
  std::vector<int> actions;            // M*T*K, -1 past the last decision
  std::vector<double> rewards;         // M*T*K atomic rewards
  std::vector<double> holding;         // M*T, r_H of the post-decision state
  std::vector<double> log_probs;       // M*T*K
  std::vector<std::uint8_t> masks;     // M*T*K*num_atomic
  std::vector<int> steps;              // M*T decisions taken in the time step
  std::vector<int> final_states;       // M*state_dim, state after the last update

  std::size_t step_index(int m, int t, int k) const {
    return (static_cast<std::size_t>(m) * T + t) * K + k;
  }
  std::size_t time_index(int m, int t) const { return static_cast<std::size_t>(m) * T + t; }
  // k in [0, K]; k = K (or k = steps) is the post-decision state.
  std::span<const int> state(int m, int t, int k) const {
    return {states.data() + ((static_cast<std::size_t>(m) * T + t) * (K + 1) + k) * state_dim,
            static_cast<std::size_t>(state_dim)};
  }
  // First atomic state of the following time step.
  std::span<const int> next_state(int m, int t) const {
    if (t + 1 < T) return state(m, t + 1, 0);
    return {final_states.data() + static_cast<std::size_t>(m) * state_dim, static_cast<std::size_t>(state_dim)};
  }
  std::span<const std::uint8_t> mask(int m, int t, int k) const {
    return {masks.data() + step_index(m, t, k) * num_atomic, static_cast<std::size_t>(num_atomic)};
  }
  // Service rewards plus holding reward of one time step.
  double step_reward(int m, int t) const;
};

struct RolloutOptions {
  RolloutMode mode = RolloutMode::kKStep;
  int M = 1;
  int T = 1;
  SeedSpec seeds;
  int workers = 1;
  std::vector<int> initial;  // flattened start state; empty uses initial_state(cfg)
};

// Throws InfeasibleActionError when the policy puts more than 1e-12 mass on
// a masked action.
TrajectoryBatch rollout(const Instance& inst, const AtomicPolicy& policy, const RolloutOptions& opts);

double empirical_gain(const TrajectoryBatch& batch);
std::vector<double> trajectory_gains(const TrajectoryBatch& batch);

struct GainEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // across trajectories; batch-means over time when M = 1
};
GainEstimate gain_estimate(const TrajectoryBatch& batch);

void save_batch(const std::string& path, const TrajectoryBatch& batch);
TrajectoryBatch load_batch(const std::string& path);
std::string batch_summary_csv(const TrajectoryBatch& batch);

}  // namespace spn
