#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "spn/network.hpp"
#include "spn/sim.hpp"

namespace spn {

enum class ScenarioKind { kMgeo1, kSwitch, kHospital };

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kMgeo1;

  // Single queue.
  double p_arrival = 0.5;
  double mu0 = 1.0;
  int cap = 3;
  double holding = -1.0;

  // W x W crossbar switch: Bernoulli arrival rate per (input, output).
  int ports = 2;
  std::vector<std::vector<double>> rates;
  int class_cap = 1;

  // Hospital units: beds and Bernoulli arrival rate per unit, overflow
  // reward per (unit, class) pair (zero on the diagonal), geometric
  // discharge probability per time step.
  std::vector<int> beds;
  std::vector<double> arrival_rates;
  std::vector<std::vector<double>> overflow_reward;
  double discharge = 0.5;
  int stay_cap = 2;  // tau_max
  std::vector<int> unit_caps;
  std::vector<double> unit_holding;
};

std::string to_string(ScenarioKind kind);

NetworkConfig make_mgeo1(double p_arrival, double mu0, int cap, double holding);
Instance make_switch(int ports, const std::vector<std::vector<double>>& rates, int class_cap);
NetworkConfig make_hospital(const std::vector<int>& beds, const std::vector<std::vector<double>>& overflow_reward,
                            const std::vector<double>& arrival_rates, double discharge, int stay_cap,
                            const std::vector<int>& caps, const std::vector<double>& holding);

Instance make_instance(const ScenarioSpec& spec);

// "m1", "switch2", "hospital2".
ScenarioSpec scenario_preset(const std::string& name);
std::vector<std::string> scenario_preset_names();

nlohmann::json scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& doc);

enum class BaselineKind { kPass, kMaxWeight, kGreedy, kRandom };

std::string to_string(BaselineKind kind);
BaselineKind baseline_from_string(const std::string& text);

// Max-weight needs the switch layout; passing another scenario (or none)
// throws FormatError.
std::unique_ptr<AtomicPolicy> baseline_policy(BaselineKind kind, const Instance& inst,
                                              const ScenarioSpec* spec = nullptr);

// Best (input -> output) matching weight on the waiting counts of a switch
// state, counting only ports still free in the current time step.
struct SwitchMatching {
  std::vector<int> output_of;  // per input, -1 if unmatched
  int weight = 0;
};
SwitchMatching max_weight_matching(const NetworkConfig& cfg, int ports, const SystemState& state);

}  // namespace spn
