#pragma once

#include <string>
#include <vector>

#include "spn/state_space.hpp"

namespace spn {

struct SolveOptions {
  double tol = 1e-9;
  int max_iter = 200000;
  int reference = 0;  // state id pinned to h = 0
  // Damping factor used once the span stops shrinking.
  double damping = 0.999;
  int workers = 1;
};

struct SolveResult {
  double gain = 0.0;
  std::vector<double> h;  // relative values, h[reference] = 0

  // Original solver: index into the state's schedule list (kernels.sched_ptr).
  // Passing-last solver: atomic code per state.
  std::vector<int> policy;

  // Step-dependent atomic solver: tables for steps 1..K (index 0 is step 1).
  std::vector<std::vector<double>> step_values;
  std::vector<std::vector<int>> step_policy;

  int iterations = 0;
  double span = 0.0;
  bool damped = false;
};

// Relative value iteration on the joint-schedule MDP.
SolveResult solve_original_rvi(const KernelSet& kernels, const RewardTable& rewards, const SolveOptions& opts = {});

// Fixed-point iteration on the first-step relative values of the K-periodic
// atomic MDP, one backward composition of K atomic steps per sweep.
SolveResult solve_atomic_step_dependent(const KernelSet& kernels, const RewardTable& rewards, int num_servers,
                                        const SolveOptions& opts = {});

// Builds the passing-last relative values stratum by stratum (by idle server
// count) from the original solution and extracts the step-independent policy.
SolveResult solve_passing_last(const KernelSet& kernels, const RewardTable& rewards, double g_star,
                               const std::vector<double>& h_star);

// Largest value within tie_tol of the best wins the smallest index.
inline constexpr double kTieTolerance = 1e-10;

enum class PolicyKind { kJoint, kAtomicStepDependent, kAtomicStepIndependent };

// Atomic policy over enumerated states: probs[k][s * num_atomic + code].
// One table for step-independent policies, K tables for step-dependent ones.
struct AtomicPolicyTable {
  int num_atomic = 0;
  std::vector<std::vector<double>> probs;

  static AtomicPolicyTable deterministic(const std::vector<std::vector<int>>& codes, int num_atomic);
};

struct EvaluateOptions {
  int reference = 0;
  // For step-independent atomic policies: true rolls the passing-last
  // dynamics (first Pass ends the time step), false the K-step dynamics.
  bool passing_last = true;
  int workers = 1;
};

struct Evaluation {
  double gain = 0.0;
  std::vector<double> h;                          // relative values at the first atomic step
  std::vector<std::vector<double>> step_values;   // K-step dynamics: h_k for k = 1..K
  std::vector<double> stationary;                 // per-time-step chain, first atomic step
  int recurrent_classes = 0;
  double residual = 0.0;                          // max |g + h - r - Qh|
};

// Exact policy evaluation of a joint policy (schedule entry per state).
Evaluation evaluate_joint(const KernelSet& kernels, const RewardTable& rewards, const std::vector<int>& policy,
                          const EvaluateOptions& opts = {});

// Exact evaluation of an atomic policy table.
Evaluation evaluate_atomic(const KernelSet& kernels, const RewardTable& rewards, const AtomicPolicyTable& policy,
                           int num_servers, const EvaluateOptions& opts = {});

// Long-run gain from one start state; also defined when the policy has
// several recurrent classes.
double evaluate_atomic_from(const KernelSet& kernels, const RewardTable& rewards, const AtomicPolicyTable& policy,
                            int num_servers, int start, const EvaluateOptions& opts = {});

// Per-atomic-step average rewards of a K-step policy: entry l is the
// stationary expected reward collected at step l+1; the holding reward is
// counted at the last step. They sum to the per-time-step gain.
std::vector<double> per_step_gains(const KernelSet& kernels, const RewardTable& rewards,
                                   const AtomicPolicyTable& policy, int num_servers,
                                   const std::vector<double>& stationary_first_step);

// Maximum over states of |h(s) - max_a {r(s,a) - g + sum P h}|.
double original_bellman_residual(const KernelSet& kernels, const RewardTable& rewards, double gain,
                                 const std::vector<double>& h);
// Maximum over steps and states of the atomic optimality residuals.
double atomic_bellman_residual(const KernelSet& kernels, const RewardTable& rewards, double gain,
                               const std::vector<std::vector<double>>& step_values);

// Closed communicating classes of a row-stochastic chain given as adjacency.
int count_recurrent_classes(const SparseRows& chain);

// Exports "state_id,h" rows.
std::string value_table_csv(const std::vector<double>& h);

}  // namespace spn
