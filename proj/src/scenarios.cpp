#include "spn/scenarios.hpp"

#include <algorithm>
#include <numeric>

#include "spn/error.hpp"

namespace spn {

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kMgeo1: return "mgeo1";
    case ScenarioKind::kSwitch: return "switch";
    case ScenarioKind::kHospital: return "hospital";
  }
  return "unknown";
}

NetworkConfig make_mgeo1(double p_arrival, double mu0, int cap, double holding) {
  NetworkConfig cfg;
  cfg.num_classes = cfg.num_types = cfg.num_servers = 1;
  cfg.tau_max = mu0 < 1.0 ? 1 : 0;
  cfg.material = Table<int>::from_rows({{1}});
  cfg.routing = Table<int>::from_rows({{0}});
  cfg.compatibility = Table<int>::from_rows({{1}});
  cfg.completion = Table<double>(1, cfg.tau_max + 1, 1.0);
  cfg.completion(0, 0) = mu0;
  cfg.arrivals = {{1.0 - p_arrival, p_arrival}};
  cfg.service_reward = {0.0};
  cfg.holding_weight = {holding};
  cfg.holding_mode = HoldingMode::kWaitingOnly;
  cfg.item_cap = {cap};
  cfg.initial_idle = {1};
  return cfg;
}

Instance make_switch(int W, const std::vector<std::vector<double>>& rates, int class_cap) {
  if (W < 2) throw DimensionError("a switch needs at least two ports");
  if (static_cast<int>(rates.size()) != W) throw DimensionError("switch rates must be W x W");
  const int J = W * W;
  Instance inst;
  auto& cfg = inst.config;
  cfg.num_classes = J;
  cfg.num_types = J;
  cfg.num_servers = W;
  cfg.tau_max = 0;
  cfg.material = Table<int>(J, J, 0);
  cfg.routing = Table<int>(J, J, 0);
  cfg.compatibility = Table<int>(J, J, 0);
  cfg.completion = Table<double>(J, 1, 1.0);
  cfg.service_reward.assign(J, 0.0);
  cfg.holding_weight.assign(J, -1.0);
  cfg.holding_mode = HoldingMode::kAllItems;
  cfg.item_cap.assign(J, class_cap);
  cfg.initial_idle.assign(J, 0);
  for (int in = 0; in < W; ++in) {
    if (static_cast<int>(rates[in].size()) != W) throw DimensionError("switch rates must be W x W");
    for (int out = 0; out < W; ++out) {
      const int j = in * W + out;
      cfg.material(j, j) = 1;
      cfg.arrivals.push_back({1.0 - rates[in][out], rates[in][out]});
      for (int other = 0; other < W; ++other) cfg.compatibility(other * W + out, j) = 1;
    }
    cfg.initial_idle[in * W + in] = 1;
  }
  for (int in = 0; in < W; ++in) {
    ExtraConstraint ec;
    ec.name = "input-" + std::to_string(in);
    ec.schedule_coeff = Table<int>(J, J, 0);
    ec.service_coeff = Table<int>(J, cfg.slots(), 0);
    ec.bound = 1;
    for (int out = 0; out < W; ++out) {
      const int j = in * W + out;
      for (int jp = 0; jp < J; ++jp) ec.schedule_coeff(jp, j) = 1;
      ec.service_coeff(j, 0) = 1;
    }
    inst.extra.push_back(std::move(ec));
  }
  return inst;
}

NetworkConfig make_hospital(const std::vector<int>& beds, const std::vector<std::vector<double>>& overflow_reward,
                            const std::vector<double>& arrival_rates, double discharge, int stay_cap,
                            const std::vector<int>& caps, const std::vector<double>& holding) {
  const int I = static_cast<int>(beds.size());
  if (I < 2) throw DimensionError("a hospital needs at least two units");
  if (static_cast<int>(arrival_rates.size()) != I || static_cast<int>(caps.size()) != I ||
      static_cast<int>(holding.size()) != I || static_cast<int>(overflow_reward.size()) != I) {
    throw DimensionError("hospital parameters must have one entry per unit");
  }
  const int J = I * I;
  NetworkConfig cfg;
  cfg.num_classes = I;
  cfg.num_types = J;
  cfg.num_servers = std::accumulate(beds.begin(), beds.end(), 0);
  cfg.tau_max = stay_cap;
  cfg.material = Table<int>(I, J, 0);
  cfg.routing = Table<int>(I, J, 0);
  cfg.compatibility = Table<int>(J, J, 0);
  cfg.completion = Table<double>(J, stay_cap + 1, discharge);
  cfg.service_reward.assign(J, 0.0);
  cfg.initial_idle.assign(J, 0);
  for (int unit = 0; unit < I; ++unit) {
    if (static_cast<int>(overflow_reward[unit].size()) != I) throw DimensionError("overflow rewards must be I x I");
    for (int cls = 0; cls < I; ++cls) {
      const int j = unit * I + cls;
      cfg.material(cls, j) = 1;
      cfg.completion(j, stay_cap) = 1.0;
      cfg.service_reward[j] = unit == cls ? 0.0 : overflow_reward[unit][cls];
      for (int other = 0; other < I; ++other) cfg.compatibility(unit * I + other, j) = 1;
    }
    cfg.initial_idle[unit * I + unit] = beds[unit];
    cfg.arrivals.push_back({1.0 - arrival_rates[unit], arrival_rates[unit]});
  }
  cfg.holding_weight = holding;
  cfg.holding_mode = HoldingMode::kWaitingOnly;
  cfg.item_cap = caps;
  return cfg;
}

Instance make_instance(const ScenarioSpec& spec) {
  switch (spec.kind) {
    case ScenarioKind::kMgeo1:
      return {make_mgeo1(spec.p_arrival, spec.mu0, spec.cap, spec.holding), {}};
    case ScenarioKind::kSwitch:
      return make_switch(spec.ports, spec.rates, spec.class_cap);
    case ScenarioKind::kHospital:
      return {make_hospital(spec.beds, spec.overflow_reward, spec.arrival_rates, spec.discharge, spec.stay_cap,
                            spec.unit_caps, spec.unit_holding),
              {}};
  }
  throw FormatError("unknown scenario kind");
}

ScenarioSpec scenario_preset(const std::string& name) {
  ScenarioSpec s;
  if (name == "m1") {
    s.kind = ScenarioKind::kMgeo1;
    s.p_arrival = 0.5;
    s.mu0 = 1.0;
    s.cap = 3;
    s.holding = -1.0;
  } else if (name == "switch2") {
    s.kind = ScenarioKind::kSwitch;
    s.ports = 2;
    s.rates = {{0.4, 0.2}, {0.2, 0.4}};
    s.class_cap = 1;
  } else if (name == "hospital2") {
    s.kind = ScenarioKind::kHospital;
    s.beds = {1, 1};
    s.arrival_rates = {0.3, 0.3};
    s.overflow_reward = {{0.0, -2.0}, {-2.0, 0.0}};
    s.discharge = 0.5;
    s.stay_cap = 2;
    s.unit_caps = {2, 2};
    s.unit_holding = {-1.0, -1.0};
  } else {
    throw FormatError("unknown scenario '" + name + "'");
  }
  return s;
}

std::vector<std::string> scenario_preset_names() { return {"m1", "switch2", "hospital2"}; }

nlohmann::json scenario_to_json(const ScenarioSpec& s) {
  nlohmann::json doc;
  doc["kind"] = to_string(s.kind);
  switch (s.kind) {
    case ScenarioKind::kMgeo1:
      doc["p_arrival"] = s.p_arrival;
      doc["mu0"] = s.mu0;
      doc["cap"] = s.cap;
      doc["holding"] = s.holding;
      break;
    case ScenarioKind::kSwitch:
      doc["ports"] = s.ports;
      doc["rates"] = s.rates;
      doc["class_cap"] = s.class_cap;
      break;
    case ScenarioKind::kHospital:
      doc["beds"] = s.beds;
      doc["arrival_rates"] = s.arrival_rates;
      doc["overflow_reward"] = s.overflow_reward;
      doc["discharge"] = s.discharge;
      doc["stay_cap"] = s.stay_cap;
      doc["unit_caps"] = s.unit_caps;
      doc["unit_holding"] = s.unit_holding;
      break;
  }
  return doc;
}

ScenarioSpec scenario_from_json(const nlohmann::json& doc) {
  try {
    const std::string kind = doc.at("kind").get<std::string>();
    ScenarioSpec s;
    if (kind == "mgeo1") {
      s.kind = ScenarioKind::kMgeo1;
      s.p_arrival = doc.value("p_arrival", s.p_arrival);
      s.mu0 = doc.value("mu0", s.mu0);
      s.cap = doc.value("cap", s.cap);
      s.holding = doc.value("holding", s.holding);
    } else if (kind == "switch") {
      s = scenario_preset("switch2");
      s.ports = doc.value("ports", s.ports);
      if (doc.contains("rates")) s.rates = doc.at("rates").get<std::vector<std::vector<double>>>();
      s.class_cap = doc.value("class_cap", s.class_cap);
    } else if (kind == "hospital") {
      s = scenario_preset("hospital2");
      if (doc.contains("beds")) s.beds = doc.at("beds").get<std::vector<int>>();
      if (doc.contains("arrival_rates")) s.arrival_rates = doc.at("arrival_rates").get<std::vector<double>>();
      if (doc.contains("overflow_reward")) {
        s.overflow_reward = doc.at("overflow_reward").get<std::vector<std::vector<double>>>();
      }
      s.discharge = doc.value("discharge", s.discharge);
      s.stay_cap = doc.value("stay_cap", s.stay_cap);
      if (doc.contains("unit_caps")) s.unit_caps = doc.at("unit_caps").get<std::vector<int>>();
      if (doc.contains("unit_holding")) s.unit_holding = doc.at("unit_holding").get<std::vector<double>>();
    } else {
      throw FormatError("unknown scenario kind '" + kind + "'");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed scenario section: ") + e.what());
  }
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kPass: return "pass";
    case BaselineKind::kMaxWeight: return "max-weight";
    case BaselineKind::kGreedy: return "greedy";
    case BaselineKind::kRandom: return "random";
  }
  return "unknown";
}

BaselineKind baseline_from_string(const std::string& text) {
  if (text == "pass") return BaselineKind::kPass;
  if (text == "max-weight") return BaselineKind::kMaxWeight;
  if (text == "greedy") return BaselineKind::kGreedy;
  if (text == "random") return BaselineKind::kRandom;
  throw FormatError("unknown baseline '" + text + "'");
}

namespace {

class PassPolicy : public AtomicPolicy {
 public:
  void distribution(const SystemState&, int, std::span<const std::uint8_t>, std::span<double> probs) const override {
    std::fill(probs.begin(), probs.end(), 0.0);
    probs[0] = 1.0;
  }
  std::string name() const override { return "pass"; }
};

class RandomPolicy : public AtomicPolicy {
 public:
  void distribution(const SystemState&, int, std::span<const std::uint8_t> mask, std::span<double> probs) const override {
    const int count = static_cast<int>(std::count(mask.begin(), mask.end(), 1));
    for (std::size_t c = 0; c < probs.size(); ++c) probs[c] = mask[c] ? 1.0 / count : 0.0;
  }
  std::string name() const override { return "random"; }
};

// Serves the feasible action with the largest r_j + |c_i| * waiting_i.
class GreedyPolicy : public AtomicPolicy {
 public:
  explicit GreedyPolicy(const NetworkConfig& cfg) : cfg_(cfg) {}
  void distribution(const SystemState& s, int, std::span<const std::uint8_t> mask, std::span<double> probs) const override {
    std::fill(probs.begin(), probs.end(), 0.0);
    int best = 0;
    double best_w = 0.0;
    for (int code = 1; code < cfg_.num_atomic(); ++code) {
      if (!mask[code]) continue;
      const int j = AtomicAction::decode(code, cfg_.num_types).to;
      double w = cfg_.service_reward[j];
      for (int i = 0; i < cfg_.num_classes; ++i) {
        if (cfg_.material(i, j)) w += -cfg_.holding_weight[i] * waiting_items(cfg_, s, i);
      }
      if (w > best_w) {
        best_w = w;
        best = code;
      }
    }
    probs[best] = 1.0;
  }
  std::string name() const override { return "greedy"; }

 private:
  NetworkConfig cfg_;
};

class MaxWeightPolicy : public AtomicPolicy {
 public:
  MaxWeightPolicy(const NetworkConfig& cfg, int ports) : cfg_(cfg), ports_(ports) {}
  void distribution(const SystemState& s, int, std::span<const std::uint8_t> mask, std::span<double> probs) const override {
    std::fill(probs.begin(), probs.end(), 0.0);
    const auto match = max_weight_matching(cfg_, ports_, s);
    const int W = ports_;
    for (int in = 0; in < W; ++in) {
      const int out = match.output_of[in];
      if (out < 0) continue;
      const int j = in * W + out;
      for (int from = 0; from < W; ++from) {
        const int jp = from * W + out;
        if (s.idle(jp) > 0) {
          const int code = AtomicAction{jp, j}.encode(cfg_.num_types);
          if (mask[code]) {
            probs[code] = 1.0;
            return;
          }
        }
      }
    }
    probs[0] = 1.0;
  }
  std::string name() const override { return "max-weight"; }

 private:
  NetworkConfig cfg_;
  int ports_;
};

}  // namespace

SwitchMatching max_weight_matching(const NetworkConfig& cfg, int W, const SystemState& s) {
  std::vector<char> in_free(W, 1), out_free(W, 0);
  for (int in = 0; in < W; ++in) {
    for (int out = 0; out < W; ++out) {
      const int j = in * W + out;
      if (s.n(j, 0) > 0) in_free[in] = 0;
      if (s.idle(j) > 0) out_free[out] = 1;
    }
  }
  std::vector<int> perm(W);
  std::iota(perm.begin(), perm.end(), 0);
  SwitchMatching best;
  best.output_of.assign(W, -1);
  best.weight = -1;
  do {
    int weight = 0;
    std::vector<int> out_of(W, -1);
    for (int in = 0; in < W; ++in) {
      const int out = perm[in];
      const int waiting = waiting_items(cfg, s, in * W + out);
      if (in_free[in] && out_free[out] && waiting > 0) {
        weight += waiting;
        out_of[in] = out;
      }
    }
    if (weight > best.weight) {
      best.weight = weight;
      best.output_of = out_of;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::unique_ptr<AtomicPolicy> baseline_policy(BaselineKind kind, const Instance& inst, const ScenarioSpec* spec) {
  switch (kind) {
    case BaselineKind::kPass: return std::make_unique<PassPolicy>();
    case BaselineKind::kRandom: return std::make_unique<RandomPolicy>();
    case BaselineKind::kGreedy: return std::make_unique<GreedyPolicy>(inst.config);
    case BaselineKind::kMaxWeight:
      if (spec == nullptr || spec->kind != ScenarioKind::kSwitch) {
        throw FormatError("the max-weight baseline is only defined for switch scenarios");
      }
      return std::make_unique<MaxWeightPolicy>(inst.config, spec->ports);
  }
  throw FormatError("unknown baseline");
}

}  // namespace spn
