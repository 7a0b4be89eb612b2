#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spn/network.hpp"

namespace spn {

// Dense ids for an enumerated state set, ordered lexicographically by the
// flattened state vector.
class StateIndex {
 public:
  StateIndex() = default;
  explicit StateIndex(std::vector<SystemState> sorted_states);

  int size() const { return static_cast<int>(states_.size()); }
  const SystemState& state(int id) const { return states_[id]; }
  const std::vector<SystemState>& states() const { return states_; }

  // -1 when absent.
  int find(const SystemState& s) const;
  // Throws StructuralError when absent.
  int at(const SystemState& s) const;

 private:
  std::vector<SystemState> states_;
};

struct EnumerateOptions {
  std::size_t limit = 2'000'000;
  // Empty: every state in the invariant box. Otherwise the closure of the
  // roots under feasible atomic actions and the exogenous update.
  std::vector<SystemState> roots;
  int workers = 1;
};

StateIndex enumerate_states(const NetworkConfig& cfg, std::span<const ExtraConstraint> extra = {},
                            const EnumerateOptions& opts = {});

// Row-compressed sparse stochastic matrix.
struct SparseRows {
  std::vector<std::int64_t> row_ptr{0};
  std::vector<int> col;
  std::vector<double> val;

  int rows() const { return static_cast<int>(row_ptr.size()) - 1; }
  std::int64_t begin(int r) const { return row_ptr[r]; }
  std::int64_t end(int r) const { return row_ptr[r + 1]; }
  // sum_c val(r, c) * x[c]
  double dot(int r, std::span<const double> x) const;
  void multiply(std::span<const double> x, std::span<double> out) const;
};

struct KernelSet {
  int num_states = 0;
  int num_types = 0;
  int num_atomic = 0;
  std::uint64_t config_hash = 0;

  SparseRows p_sys;              // post-decision state -> next state
  std::vector<int> atomic_next;  // num_states x num_atomic, -1 if infeasible

  // Feasible schedules per state: entries [sched_ptr[s], sched_ptr[s+1]).
  std::vector<std::int64_t> sched_ptr{0};
  std::vector<int> sched_post;       // post-decision state of each schedule
  std::vector<int> sched_matrix;     // J*J entries per schedule, row-major
  std::vector<int> idle_count;       // idle servers per state

  int next(int s, int code) const { return atomic_next[static_cast<std::size_t>(s) * num_atomic + code]; }
  int num_schedules(int s) const { return static_cast<int>(sched_ptr[s + 1] - sched_ptr[s]); }
  Schedule schedule(std::int64_t entry) const;
};

struct KernelOptions {
  int workers = 1;
  std::size_t support_limit = 1'000'000;
  bool with_schedules = true;
};

// Throws StructuralError naming the transition when a successor is missing
// from idx.
KernelSet build_kernels(const NetworkConfig& cfg, const StateIndex& idx, std::span<const ExtraConstraint> extra = {},
                        const KernelOptions& opts = {});

// Rewards split the way the solvers consume them.
struct RewardTable {
  std::vector<double> atomic;            // per atomic code
  std::vector<double> holding;           // r_H per state
  std::vector<double> schedule_service;  // service reward sum per schedule entry

  // Service rewards then holding, in that order.
  double schedule(const KernelSet& k, std::int64_t entry) const {
    return schedule_service[entry] + holding[k.sched_post[entry]];
  }
  void scale(double factor);
};

RewardTable build_rewards(const NetworkConfig& cfg, const StateIndex& idx, const KernelSet& kernels);

struct ActionCountReport {
  int num_states = 0;
  int atomic_actions = 0;
  int max_schedules = 0;
  double mean_schedules = 0.0;
  int max_schedule_state = -1;
  std::string text() const;
};

ActionCountReport action_count_report(const NetworkConfig& cfg, const StateIndex& idx, const KernelSet& kernels);

// Binary cache. load_kernels returns false when the file is absent or keyed
// by a different hash; throws FormatError when the file is malformed.
void save_kernels(const std::string& path, const KernelSet& kernels);
bool load_kernels(const std::string& path, std::uint64_t expected_hash, KernelSet& out);

}  // namespace spn
