#include "spn/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "spn/error.hpp"

namespace spn {
namespace {

std::string fmt_idx(const char* what, int a) {
  std::ostringstream os;
  os << what << ' ' << a;
  return os.str();
}

bool is_binary(const Table<int>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](int v) { return v == 0 || v == 1; });
}

void check_schedule_shape(const NetworkConfig& cfg, const Schedule& a) {
  if (a.rows() != cfg.num_types || a.cols() != cfg.num_types) {
    throw DimensionError("schedule must be " + std::to_string(cfg.num_types) + "x" + std::to_string(cfg.num_types));
  }
}

// Remaining budget of an extra constraint at a state, before any new schedule.
int extra_budget(const ExtraConstraint& ec, const SystemState& state) {
  int used = 0;
  for (int j = 0; j < ec.service_coeff.rows(); ++j) {
    for (int s = 0; s < ec.service_coeff.cols(); ++s) used += ec.service_coeff(j, s) * state.n(j, s);
  }
  return ec.bound - used;
}

int class_of_type(const NetworkConfig& cfg, int type) {
  for (int i = 0; i < cfg.num_classes; ++i) {
    if (cfg.material(i, type) != 0) return i;
  }
  return -1;
}

double binomial_pmf(int n, int k, double p) {
  double coeff = 1.0;
  for (int i = 1; i <= k; ++i) coeff = coeff * (n - k + i) / i;
  return coeff * std::pow(p, k) * std::pow(1.0 - p, n - k);
}

}  // namespace

int SystemState::total_idle() const {
  int total = 0;
  const int types = slots == 0 ? 0 : static_cast<int>(services.size()) / slots;
  for (int j = 0; j < types; ++j) total += idle(j);
  return total;
}

std::vector<int> SystemState::flatten() const {
  std::vector<int> flat(items);
  flat.insert(flat.end(), services.begin(), services.end());
  return flat;
}

SystemState SystemState::unflatten(const NetworkConfig& cfg, std::span<const int> flat) {
  const std::size_t want = static_cast<std::size_t>(cfg.num_classes) + static_cast<std::size_t>(cfg.num_types) * cfg.slots();
  if (flat.size() != want) throw DimensionError("flat state has length " + std::to_string(flat.size()) + ", expected " + std::to_string(want));
  SystemState s;
  s.slots = cfg.slots();
  s.items.assign(flat.begin(), flat.begin() + cfg.num_classes);
  s.services.assign(flat.begin() + cfg.num_classes, flat.end());
  return s;
}

SystemState empty_state(const NetworkConfig& cfg) {
  SystemState s;
  s.slots = cfg.slots();
  s.items.assign(cfg.num_classes, 0);
  s.services.assign(static_cast<std::size_t>(cfg.num_types) * cfg.slots(), 0);
  return s;
}

SystemState initial_state(const NetworkConfig& cfg) {
  SystemState s = empty_state(cfg);
  for (int j = 0; j < cfg.num_types && j < static_cast<int>(cfg.initial_idle.size()); ++j) {
    s.n(j, cfg.idle_slot()) = cfg.initial_idle[j];
  }
  return s;
}

Schedule zero_schedule(const NetworkConfig& cfg) { return Schedule(cfg.num_types, cfg.num_types, 0); }

AtomicAction AtomicAction::decode(int code, int num_types) {
  if (code == 0) return pass();
  if (code < 0 || code > num_types * num_types) throw DimensionError("atomic code out of range: " + std::to_string(code));
  return {(code - 1) / num_types, (code - 1) % num_types};
}

std::vector<Violation> validate_config(const NetworkConfig& cfg) {
  std::vector<Violation> out;
  const int I = cfg.num_classes, J = cfg.num_types;
  if (I <= 0) out.push_back({"num-classes", "number of item classes must be positive"});
  if (J <= 0) out.push_back({"num-types", "number of service types must be positive"});
  if (cfg.num_servers < 0) out.push_back({"num-servers", "number of servers must be nonnegative"});
  if (cfg.tau_max < 0) out.push_back({"tau-max", "maximum service age must be nonnegative"});
  if (!out.empty() && (I <= 0 || J <= 0 || cfg.tau_max < 0)) return out;

  auto shape = [&](const char* name, int rows, int cols, int want_r, int want_c) {
    if (rows != want_r || cols != want_c) {
      std::ostringstream os;
      os << name << " is " << rows << "x" << cols << ", expected " << want_r << "x" << want_c;
      out.push_back({"shape", os.str()});
      return false;
    }
    return true;
  };
  bool ok = true;
  ok &= shape("material", cfg.material.rows(), cfg.material.cols(), I, J);
  ok &= shape("routing", cfg.routing.rows(), cfg.routing.cols(), I, J);
  ok &= shape("compatibility", cfg.compatibility.rows(), cfg.compatibility.cols(), J, J);
  ok &= shape("completion", cfg.completion.rows(), cfg.completion.cols(), J, cfg.tau_max + 1);
  ok &= shape("arrivals", static_cast<int>(cfg.arrivals.size()), 1, I, 1);
  ok &= shape("service_reward", static_cast<int>(cfg.service_reward.size()), 1, J, 1);
  ok &= shape("holding_weight", static_cast<int>(cfg.holding_weight.size()), 1, I, 1);
  ok &= shape("item_cap", static_cast<int>(cfg.item_cap.size()), 1, I, 1);
  ok &= shape("initial_idle", static_cast<int>(cfg.initial_idle.size()), 1, J, 1);
  if (!ok) return out;

  if (!is_binary(cfg.material)) out.push_back({"material-binary", "material matrix entries must be 0 or 1"});
  if (!is_binary(cfg.routing)) out.push_back({"routing-binary", "routing matrix entries must be 0 or 1"});
  if (!is_binary(cfg.compatibility)) out.push_back({"compatibility-binary", "compatibility matrix entries must be 0 or 1"});

  for (int j = 0; j < J; ++j) {
    int col = 0;
    for (int i = 0; i < I; ++i) col += cfg.material(i, j);
    if (col > 1) out.push_back({"material-column", fmt_idx("column", j) + " sums to " + std::to_string(col) + " > 1"});
  }
  for (int i = 0; i < I; ++i) {
    int row = 0;
    for (int j = 0; j < J; ++j) row += cfg.material(i, j);
    if (row < 1) out.push_back({"material-row", fmt_idx("row", i) + " has no service type"});
  }
  for (int j = 0; j < J; ++j) {
    int col = 0;
    for (int jp = 0; jp < J; ++jp) col += cfg.compatibility(jp, j);
    if (col < 1) out.push_back({"compatibility-column", fmt_idx("column", j) + " has no predecessor type"});
  }
  for (int j = 0; j < J; ++j) {
    for (int tau = 0; tau <= cfg.tau_max; ++tau) {
      const double p = cfg.completion(j, tau);
      if (!(p >= 0.0 && p <= 1.0)) {
        out.push_back({"completion-range", fmt_idx("type", j) + fmt_idx(" age", tau) + " probability outside [0,1]"});
      }
    }
    if (cfg.completion(j, cfg.tau_max) != 1.0) {
      out.push_back({"completion-cap", fmt_idx("type", j) + " does not complete with certainty at the maximum age"});
    }
  }
  for (int i = 0; i < I; ++i) {
    const auto& pmf = cfg.arrivals[i];
    double total = 0.0;
    bool neg = pmf.empty();
    for (double p : pmf) {
      if (!(p >= 0.0)) neg = true;
      total += p;
    }
    if (neg || std::abs(total - 1.0) > 1e-12) {
      out.push_back({"arrival-pmf", fmt_idx("class", i) + " arrival distribution is not a pmf"});
    }
    if (cfg.holding_weight[i] > 0.0) out.push_back({"holding-sign", fmt_idx("class", i) + " holding weight is positive"});
    if (cfg.item_cap[i] < 0) out.push_back({"item-cap", fmt_idx("class", i) + " cap is negative"});
  }
  int servers = 0;
  for (int j = 0; j < J; ++j) {
    if (cfg.initial_idle[j] < 0) out.push_back({"initial-servers", fmt_idx("type", j) + " has a negative server count"});
    servers += cfg.initial_idle[j];
  }
  if (servers != cfg.num_servers) {
    out.push_back({"initial-servers", "initial idle servers sum to " + std::to_string(servers) + ", expected " +
                                          std::to_string(cfg.num_servers)});
  }
  return out;
}

std::vector<Violation> validate_instance(const Instance& inst) {
  auto out = validate_config(inst.config);
  const auto& cfg = inst.config;
  for (std::size_t e = 0; e < inst.extra.size(); ++e) {
    const auto& ec = inst.extra[e];
    const std::string where = "extra constraint '" + ec.name + "'";
    if (ec.schedule_coeff.rows() != cfg.num_types || ec.schedule_coeff.cols() != cfg.num_types ||
        ec.service_coeff.rows() != cfg.num_types || ec.service_coeff.cols() != cfg.slots()) {
      out.push_back({"extra-constraint", where + " has the wrong shape"});
      continue;
    }
    auto neg = [](const Table<int>& t) { return std::any_of(t.data().begin(), t.data().end(), [](int v) { return v < 0; }); };
    if (neg(ec.schedule_coeff) || neg(ec.service_coeff)) out.push_back({"extra-constraint", where + " has negative coefficients"});
  }
  return out;
}

void check_state_shape(const NetworkConfig& cfg, const SystemState& state) {
  if (static_cast<int>(state.items.size()) != cfg.num_classes || state.slots != cfg.slots() ||
      state.services.size() != static_cast<std::size_t>(cfg.num_types) * cfg.slots()) {
    throw DimensionError("state shape does not match the network");
  }
}

int open_services(const NetworkConfig& cfg, const SystemState& state, int item_class) {
  int open = 0;
  for (int j = 0; j < cfg.num_types; ++j) {
    if (cfg.material(item_class, j) == 0) continue;
    for (int tau = 0; tau <= cfg.tau_max; ++tau) open += state.n(j, tau);
  }
  return open;
}

int waiting_items(const NetworkConfig& cfg, const SystemState& state, int item_class) {
  return state.items[item_class] - open_services(cfg, state, item_class);
}

bool state_valid(const NetworkConfig& cfg, const SystemState& state, std::span<const ExtraConstraint> extra) {
  check_state_shape(cfg, state);
  int servers = 0;
  for (int v : state.services) {
    if (v < 0) return false;
    servers += v;
  }
  if (servers != cfg.num_servers) return false;
  for (int i = 0; i < cfg.num_classes; ++i) {
    if (state.items[i] < 0 || state.items[i] > cfg.item_cap[i]) return false;
    if (open_services(cfg, state, i) > state.items[i]) return false;
  }
  for (const auto& ec : extra) {
    if (extra_budget(ec, state) < 0) return false;
  }
  return true;
}

bool schedule_feasible(const NetworkConfig& cfg, const SystemState& state, const Schedule& a,
                       std::span<const ExtraConstraint> extra) {
  check_schedule_shape(cfg, a);
  check_state_shape(cfg, state);
  const int J = cfg.num_types;
  for (int jp = 0; jp < J; ++jp) {
    int moved = 0;
    for (int j = 0; j < J; ++j) {
      const int v = a(jp, j);
      if (v < 0) return false;
      if (v > 0 && cfg.compatibility(jp, j) == 0) return false;
      moved += v;
    }
    if (moved > state.idle(jp)) return false;
  }
  for (int i = 0; i < cfg.num_classes; ++i) {
    int demand = open_services(cfg, state, i);
    for (int j = 0; j < J; ++j) {
      if (cfg.material(i, j) == 0) continue;
      for (int jp = 0; jp < J; ++jp) demand += a(jp, j);
    }
    if (demand > state.items[i]) return false;
  }
  for (const auto& ec : extra) {
    int used = 0;
    for (int jp = 0; jp < J; ++jp) {
      for (int j = 0; j < J; ++j) used += ec.schedule_coeff(jp, j) * a(jp, j);
    }
    if (used > extra_budget(ec, state)) return false;
  }
  return true;
}

bool atomic_feasible(const NetworkConfig& cfg, const SystemState& state, AtomicAction action,
                     std::span<const ExtraConstraint> extra) {
  if (action.is_pass()) return true;
  if (action.from < 0 || action.from >= cfg.num_types || action.to < 0 || action.to >= cfg.num_types) {
    throw DimensionError("atomic action indices out of range");
  }
  check_state_shape(cfg, state);
  if (cfg.compatibility(action.from, action.to) == 0) return false;
  if (state.idle(action.from) < 1) return false;
  const int cls = class_of_type(cfg, action.to);
  if (cls >= 0 && open_services(cfg, state, cls) + 1 > state.items[cls]) return false;
  for (const auto& ec : extra) {
    if (ec.schedule_coeff(action.from, action.to) > extra_budget(ec, state)) return false;
  }
  return true;
}

std::vector<std::uint8_t> feasible_atomic_mask(const NetworkConfig& cfg, const SystemState& state,
                                               std::span<const ExtraConstraint> extra) {
  std::vector<std::uint8_t> mask(cfg.num_atomic(), 0);
  mask[0] = 1;
  for (int code = 1; code < cfg.num_atomic(); ++code) {
    mask[code] = atomic_feasible(cfg, state, AtomicAction::decode(code, cfg.num_types), extra) ? 1 : 0;
  }
  return mask;
}

SystemState apply_atomic(const NetworkConfig& cfg, const SystemState& state, AtomicAction action,
                         std::span<const ExtraConstraint> extra) {
  if (!atomic_feasible(cfg, state, action, extra)) {
    throw InfeasibleActionError("atomic action (" + std::to_string(action.from) + "," + std::to_string(action.to) +
                                ") is infeasible");
  }
  SystemState next = state;
  if (action.is_pass()) return next;
  next.n(action.to, 0) += 1;
  next.n(action.from, cfg.idle_slot()) -= 1;
  return next;
}

SystemState apply_schedule(const NetworkConfig& cfg, const SystemState& state, const Schedule& a,
                           std::span<const ExtraConstraint> extra) {
  if (!schedule_feasible(cfg, state, a, extra)) throw InfeasibleActionError("schedule is infeasible");
  SystemState next = state;
  for (int jp = 0; jp < cfg.num_types; ++jp) {
    for (int j = 0; j < cfg.num_types; ++j) {
      next.n(j, 0) += a(jp, j);
      next.n(jp, cfg.idle_slot()) -= a(jp, j);
    }
  }
  return next;
}

std::vector<AtomicAction> atomic_expansion(const Schedule& a) {
  std::vector<AtomicAction> out;
  for (int jp = 0; jp < a.rows(); ++jp) {
    for (int j = 0; j < a.cols(); ++j) {
      for (int c = 0; c < a(jp, j); ++c) out.push_back({jp, j});
    }
  }
  return out;
}

std::vector<Schedule> feasible_schedules(const NetworkConfig& cfg, const SystemState& state,
                                         std::span<const ExtraConstraint> extra) {
  check_state_shape(cfg, state);
  const int J = cfg.num_types;
  std::vector<int> idle_left(J);
  for (int jp = 0; jp < J; ++jp) idle_left[jp] = state.idle(jp);
  std::vector<int> items_left(cfg.num_classes);
  for (int i = 0; i < cfg.num_classes; ++i) items_left[i] = state.items[i] - open_services(cfg, state, i);
  std::vector<int> budget(extra.size());
  for (std::size_t e = 0; e < extra.size(); ++e) budget[e] = extra_budget(extra[e], state);
  std::vector<int> type_class(J);
  for (int j = 0; j < J; ++j) type_class[j] = class_of_type(cfg, j);

  std::vector<Schedule> out;
  Schedule current = zero_schedule(cfg);
  const int cells = J * J;

  auto recurse = [&](auto&& self, int cell) -> void {
    if (cell == cells) {
      out.push_back(current);
      return;
    }
    const int jp = cell / J, j = cell % J;
    int cap = cfg.compatibility(jp, j) ? idle_left[jp] : 0;
    if (type_class[j] >= 0) cap = std::min(cap, items_left[type_class[j]]);
    for (std::size_t e = 0; e < extra.size(); ++e) {
      const int coeff = extra[e].schedule_coeff(jp, j);
      if (coeff > 0) cap = std::min(cap, budget[e] / coeff);
    }
    for (int v = 0; v <= cap; ++v) {
      current(jp, j) = v;
      idle_left[jp] -= v;
      if (type_class[j] >= 0) items_left[type_class[j]] -= v;
      for (std::size_t e = 0; e < extra.size(); ++e) budget[e] -= extra[e].schedule_coeff(jp, j) * v;
      self(self, cell + 1);
      idle_left[jp] += v;
      if (type_class[j] >= 0) items_left[type_class[j]] += v;
      for (std::size_t e = 0; e < extra.size(); ++e) budget[e] += extra[e].schedule_coeff(jp, j) * v;
    }
    current(jp, j) = 0;
  };
  recurse(recurse, 0);
  return out;
}

namespace {

// Deterministic part of the exogenous update given arrivals x (per class)
// and completions y (per type and age).
SystemState advance(const NetworkConfig& cfg, const SystemState& post, const std::vector<int>& arrivals,
                    const Table<int>& completed) {
  SystemState next = post;
  const int J = cfg.num_types;
  const int idle = cfg.idle_slot();
  std::vector<int> z(post.items);
  for (int j = 0; j < J; ++j) {
    int done = 0;
    for (int tau = 0; tau <= cfg.tau_max; ++tau) done += completed(j, tau);
    for (int i = 0; i < cfg.num_classes; ++i) {
      z[i] += done * (cfg.routing(i, j) - cfg.material(i, j));
    }
    for (int tau = cfg.tau_max; tau >= 1; --tau) next.n(j, tau) = post.n(j, tau - 1) - completed(j, tau - 1);
    next.n(j, 0) = 0;
    next.n(j, idle) = post.n(j, idle) + done;
  }
  for (int i = 0; i < cfg.num_classes; ++i) next.items[i] = std::min(cfg.item_cap[i], z[i] + arrivals[i]);
  return next;
}

}  // namespace

SystemState system_update_sample(const NetworkConfig& cfg, const SystemState& post, Philox& rng) {
  check_state_shape(cfg, post);
  std::vector<int> x(cfg.num_classes);
  for (int i = 0; i < cfg.num_classes; ++i) x[i] = sample_pmf(cfg.arrivals[i], rng);
  Table<int> y(cfg.num_types, cfg.tau_max + 1, 0);
  for (int j = 0; j < cfg.num_types; ++j) {
    for (int tau = 0; tau <= cfg.tau_max; ++tau) y(j, tau) = sample_binomial(post.n(j, tau), cfg.completion(j, tau), rng);
  }
  return advance(cfg, post, x, y);
}

std::vector<Outcome> system_update_distribution(const NetworkConfig& cfg, const SystemState& post,
                                                std::size_t support_limit) {
  check_state_shape(cfg, post);
  struct Factor {
    bool is_arrival;
    int a, b;
    std::vector<std::pair<int, double>> values;
  };
  std::vector<Factor> factors;
  double raw = 1.0;
  for (int i = 0; i < cfg.num_classes; ++i) {
    Factor f{true, i, 0, {}};
    for (std::size_t x = 0; x < cfg.arrivals[i].size(); ++x) {
      if (cfg.arrivals[i][x] > 0.0) f.values.push_back({static_cast<int>(x), cfg.arrivals[i][x]});
    }
    raw *= static_cast<double>(f.values.size());
    factors.push_back(std::move(f));
  }
  for (int j = 0; j < cfg.num_types; ++j) {
    for (int tau = 0; tau <= cfg.tau_max; ++tau) {
      const int n = post.n(j, tau);
      const double p = cfg.completion(j, tau);
      Factor f{false, j, tau, {}};
      if (n == 0 || p <= 0.0) {
        f.values.push_back({0, 1.0});
      } else if (p >= 1.0) {
        f.values.push_back({n, 1.0});
      } else {
        for (int k = 0; k <= n; ++k) f.values.push_back({k, binomial_pmf(n, k, p)});
      }
      raw *= static_cast<double>(f.values.size());
      factors.push_back(std::move(f));
    }
  }
  if (raw > static_cast<double>(support_limit)) {
    throw ResourceLimitError("exogenous update support of " + std::to_string(static_cast<long long>(raw)) +
                             " outcomes exceeds the limit " + std::to_string(support_limit));
  }

  std::map<SystemState, double> merged;
  std::vector<int> x(cfg.num_classes, 0);
  Table<int> y(cfg.num_types, cfg.tau_max + 1, 0);
  auto recurse = [&](auto&& self, std::size_t f, double prob) -> void {
    if (f == factors.size()) {
      merged[advance(cfg, post, x, y)] += prob;
      return;
    }
    for (const auto& [value, p] : factors[f].values) {
      if (factors[f].is_arrival) {
        x[factors[f].a] = value;
      } else {
        y(factors[f].a, factors[f].b) = value;
      }
      self(self, f + 1, prob * p);
    }
  };
  recurse(recurse, 0, 1.0);

  std::vector<Outcome> out;
  out.reserve(merged.size());
  for (auto& [state, p] : merged) out.push_back({state, p});
  return out;
}

double holding_reward(const NetworkConfig& cfg, const SystemState& post) {
  double total = 0.0;
  for (int i = 0; i < cfg.num_classes; ++i) {
    const int count = cfg.holding_mode == HoldingMode::kWaitingOnly ? waiting_items(cfg, post, i) : post.items[i];
    total += cfg.holding_weight[i] * count;
  }
  return total;
}

double atomic_reward(const NetworkConfig& cfg, AtomicAction action) {
  return action.is_pass() ? 0.0 : cfg.service_reward[action.to];
}

double schedule_reward(const NetworkConfig& cfg, const SystemState& state, const Schedule& a,
                       std::span<const ExtraConstraint> extra) {
  const SystemState post = apply_schedule(cfg, state, a, extra);
  double total = 0.0;
  for (const auto& act : atomic_expansion(a)) total += atomic_reward(cfg, act);
  return total + holding_reward(cfg, post);
}

}  // namespace spn
