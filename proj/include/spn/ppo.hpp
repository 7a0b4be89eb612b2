#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spn/nn.hpp"
#include "spn/sim.hpp"

namespace spn {

struct TrainConfig {
  int iterations = 30;    // N
  int trajectories = 16;  // M
  int horizon = 2048;     // T
  double lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch = 512;
  double entropy_coef = 0.01;
  bool anneal_entropy = true;  // linearly to zero over the run
  double policy_lr = 3e-4;
  double critic_lr = 1e-3;
  int critic_epochs = 4;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  std::vector<int> hidden{64, 64};
  RolloutMode mode = RolloutMode::kKStep;
  std::uint64_t seed = 0;
  int workers = 1;
  // Upper bound on M * T * K decision slots held in memory.
  std::size_t max_decisions = 20'000'000;
};

// Throws FormatError naming the offending field.
void validate_train_config(const TrainConfig& cfg);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
// Missing fields keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& doc);

struct IterationReport {
  int iteration = 0;
  double gain = 0.0;  // empirical gain of the rollouts
  double critic_loss = 0.0;
  double surrogate = 0.0;  // after the update, on the whole batch
  double adv_mean = 0.0;   // before normalization
  double adv_max = 0.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;
  double wall_seconds = 0.0;  // not part of reports_csv
};

// One row per iteration; the comment line carries the config hash and seed.
std::string reports_csv(const std::vector<IterationReport>& reports, std::uint64_t config_hash, std::uint64_t seed);
std::string timing_csv(const std::vector<IterationReport>& reports);

// TD(lambda) targets for every decision slot (step_index layout; slots past
// the last decision of a time step are zero). critic_prev bootstraps at the
// first atomic step of later time steps.
std::vector<double> td_lambda_targets(const Instance& inst, const TrajectoryBatch& batch, const Mlp& critic_prev,
                                      double g_bar, double lambda, int workers = 1);

// Advantages for every decision slot (zero past the last decision).
std::vector<double> compute_advantages(const Instance& inst, const TrajectoryBatch& batch, const Mlp& critic,
                                       double g_bar, int workers = 1);

// Flat step_index positions of the recorded decisions, in (m, t, k) order.
std::vector<std::size_t> decision_slots(const TrajectoryBatch& batch);

// Shifts and scales the values at slots to zero mean and unit deviation.
void normalize_advantages(std::vector<double>& adv, std::span<const std::size_t> slots);

Eigen::MatrixXd critic_inputs(const Instance& inst, const TrajectoryBatch& batch, std::span<const std::size_t> slots);
PolicySamples policy_samples(const Instance& inst, const TrajectoryBatch& batch, std::span<const std::size_t> slots,
                             std::span<const double> adv);

struct FitOptions {
  int epochs = 4;
  int minibatch = 512;
  double max_grad_norm = 0.5;
};

struct CriticFit {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
};

// Minibatch descent on the mean squared error. Throws ConvergenceError when
// the loss stays above ten times its initial value for three epochs.
CriticFit fit_critic(const Eigen::MatrixXd& inputs, std::span<const double> targets, Mlp& critic, Adam& opt,
                     const FitOptions& opts, Philox& shuffle);

struct PpoOptions {
  double clip = 0.2;
  int epochs = 4;
  int minibatch = 512;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
};

// Minibatch ascent on the clipped surrogate plus entropy bonus. Returns the
// objective on the whole batch after the last epoch.
SurrogateValue ppo_update(const PolicySamples& samples, Mlp& policy, Adam& opt, const PpoOptions& opts,
                          Philox& shuffle);

Checkpoint initial_checkpoint(const Instance& inst, const TrainConfig& cfg);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<IterationReport> reports;
};

// Called after every iteration with the updated checkpoint.
using IterationHook = std::function<void(const IterationReport&, const Checkpoint&)>;

TrainResult train(const Instance& inst, const TrainConfig& cfg, const IterationHook& hook = {});

}  // namespace spn
