#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spn/rng.hpp"
#include "spn/table.hpp"

namespace spn {

enum class HoldingMode {
  kWaitingOnly,  // only items not currently in service pay
  kAllItems,     // every buffered item pays
};

// A stochastic processing network instance.
//
// Service ages run over 0..tau_max; a service of age tau_max completes with
// probability one. Servers that are not busy are tracked by the type of the
// service they last completed ("idle" slot, age infinity).
struct NetworkConfig {
  int num_classes = 0;   // I
  int num_types = 0;     // J
  int num_servers = 0;   // K
  int tau_max = 0;

  Table<int> material;       // I x J, 1 if class i is consumed by type j
  Table<int> routing;        // I x J, 1 if a finished type j sends its item to class i
  Table<int> compatibility;  // J x J, 1 if a server last doing j' may start j
  Table<double> completion;  // J x (tau_max + 1), completion probability by age

  // Per-class finite-support pmf of arrivals per time step; entry x is P(x).
  std::vector<std::vector<double>> arrivals;

  std::vector<double> service_reward;  // J, one-time reward for starting a service
  std::vector<double> holding_weight;  // I, nonpositive per-item weights
  HoldingMode holding_mode = HoldingMode::kWaitingOnly;

  std::vector<int> item_cap;      // I, arrivals beyond the cap are dropped
  std::vector<int> initial_idle;  // J, idle servers by last type at t = 0

  int slots() const { return tau_max + 2; }
  int idle_slot() const { return tau_max + 1; }
  int num_atomic() const { return num_types * num_types + 1; }
};

// Linear constraint layered on top of the compatibility, server and item
// constraints:
//   sum schedule_coeff(j', j) * a(j', j) + sum service_coeff(j, slot) * n(j, slot) <= bound
// The state-dependent part acts as a reduction of the bound, so atomic steps
// that already opened services see the remaining budget.
struct ExtraConstraint {
  std::string name;
  Table<int> schedule_coeff;  // J x J
  Table<int> service_coeff;   // J x slots
  int bound = 0;
};

// Config plus any extra constraints; what scenarios and config files produce.
struct Instance {
  NetworkConfig config;
  std::vector<ExtraConstraint> extra;
};

struct SystemState {
  std::vector<int> items;     // z, length I
  std::vector<int> services;  // n, J x slots row-major; last slot is idle
  int slots = 0;

  int& n(int type, int slot) { return services[static_cast<std::size_t>(type) * slots + slot]; }
  int n(int type, int slot) const { return services[static_cast<std::size_t>(type) * slots + slot]; }
  int idle(int type) const { return n(type, slots - 1); }
  int total_idle() const;

  // z followed by n; the canonical ordering key.
  std::vector<int> flatten() const;
  static SystemState unflatten(const NetworkConfig& cfg, std::span<const int> flat);

  friend bool operator==(const SystemState& a, const SystemState& b) {
    return a.items == b.items && a.services == b.services;
  }
  friend std::strong_ordering operator<=>(const SystemState& a, const SystemState& b) {
    if (auto c = a.items <=> b.items; c != 0) return c;
    return a.services <=> b.services;
  }
};

// All-zero state shaped for cfg (no items, no servers anywhere).
SystemState empty_state(const NetworkConfig& cfg);
// Empty buffers with servers idle as given by cfg.initial_idle.
SystemState initial_state(const NetworkConfig& cfg);

// Joint server assignment: a(j', j) servers move from last type j' to type j.
using Schedule = Table<int>;

Schedule zero_schedule(const NetworkConfig& cfg);

// A single-server assignment or Pass.
struct AtomicAction {
  int from = -1;  // j'
  int to = -1;    // j

  static AtomicAction pass() { return {}; }
  bool is_pass() const { return from < 0; }

  // 0 for Pass, 1 + j' * J + j otherwise. Lexicographic in (j', j).
  int encode(int num_types) const { return is_pass() ? 0 : 1 + from * num_types + to; }
  static AtomicAction decode(int code, int num_types);

  friend bool operator==(const AtomicAction&, const AtomicAction&) = default;
};

struct Violation {
  std::string constraint;  // short machine name, e.g. "material-column"
  std::string detail;      // human readable, names the indices
};

std::vector<Violation> validate_config(const NetworkConfig& cfg);
std::vector<Violation> validate_instance(const Instance& inst);

// Checks the shape of state/schedule against cfg; throws DimensionError.
void check_state_shape(const NetworkConfig& cfg, const SystemState& state);

// Open (initiated, not completed) services consuming class i items.
int open_services(const NetworkConfig& cfg, const SystemState& state, int item_class);
// Items of class i that are waiting (not in service).
int waiting_items(const NetworkConfig& cfg, const SystemState& state, int item_class);

// True iff the state satisfies server conservation, item coverage and caps.
bool state_valid(const NetworkConfig& cfg, const SystemState& state, std::span<const ExtraConstraint> extra = {});

bool schedule_feasible(const NetworkConfig& cfg, const SystemState& state, const Schedule& a,
                       std::span<const ExtraConstraint> extra = {});
bool atomic_feasible(const NetworkConfig& cfg, const SystemState& state, AtomicAction action,
                     std::span<const ExtraConstraint> extra = {});

// Feasibility mask over all J*J+1 atomic codes. Entry 0 (Pass) is always 1.
std::vector<std::uint8_t> feasible_atomic_mask(const NetworkConfig& cfg, const SystemState& state,
                                               std::span<const ExtraConstraint> extra = {});

SystemState apply_atomic(const NetworkConfig& cfg, const SystemState& state, AtomicAction action,
                         std::span<const ExtraConstraint> extra = {});
SystemState apply_schedule(const NetworkConfig& cfg, const SystemState& state, const Schedule& a,
                           std::span<const ExtraConstraint> extra = {});

// Atomic actions equivalent to a, in lexicographic (j', j) order, one entry
// per assigned server.
std::vector<AtomicAction> atomic_expansion(const Schedule& a);

// All feasible schedules at state, ordered lexicographically by the row-major
// flattening of the matrix (the zero schedule first).
std::vector<Schedule> feasible_schedules(const NetworkConfig& cfg, const SystemState& state,
                                         std::span<const ExtraConstraint> extra = {});

// Draws arrivals and completions for one time step from a post-decision state.
SystemState system_update_sample(const NetworkConfig& cfg, const SystemState& post, Philox& rng);

struct Outcome {
  SystemState state;
  double probability = 0.0;
};

// Exact law of the next state, merged by state and sorted ascending. Throws
// ResourceLimitError when the raw joint support exceeds support_limit.
std::vector<Outcome> system_update_distribution(const NetworkConfig& cfg, const SystemState& post,
                                                std::size_t support_limit = 1'000'000);

// Holding reward r_H of a post-decision state (nonpositive).
double holding_reward(const NetworkConfig& cfg, const SystemState& post);

double atomic_reward(const NetworkConfig& cfg, AtomicAction action);

// Service rewards added one server at a time in lexicographic (j', j) order,
// then the holding reward of the post-decision state.
double schedule_reward(const NetworkConfig& cfg, const SystemState& state, const Schedule& a,
                       std::span<const ExtraConstraint> extra = {});

}  // namespace spn
