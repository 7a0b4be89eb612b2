#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spn/nn.hpp"
#include "spn/ppo.hpp"
#include "spn/scenarios.hpp"
#include "spn/sim.hpp"
#include "spn/solvers.hpp"

namespace spn {

// A run file is either a bare network document or an object with a
// "scenario" (generator spec) or "network" section and an optional "train"
// section.
struct RunFile {
  Instance instance;
  std::optional<ScenarioSpec> scenario;  // set when generated from a spec
  std::optional<TrainConfig> train;
};

RunFile run_file_from_json(const nlohmann::json& doc);
RunFile load_run_file(const std::string& path);

// Exactly one of config_path and scenario must be non-empty.
RunFile resolve_run(const std::string& config_path, const std::string& scenario);

// "pass", "random", "greedy", "max-weight", or "checkpoint:<path>".
struct PolicySource {
  std::string label;
  std::optional<BaselineKind> baseline;
  std::optional<Checkpoint> checkpoint;
};

PolicySource parse_policy_source(const std::string& text);

// Owns whatever the returned policy refers to. Checkpoint policies are
// wrapped in ArgmaxPolicy when greedy is set; throws FormatError when the
// checkpoint was trained on a different configuration.
struct ResolvedPolicy {
  std::unique_ptr<AtomicPolicy> base;
  std::unique_ptr<AtomicPolicy> greedy;
  const AtomicPolicy& get() const { return greedy ? *greedy : *base; }
};

// `spec` is needed by the max-weight baseline.
ResolvedPolicy resolve_policy(const Instance& inst, const PolicySource& src, bool greedy,
                              const ScenarioSpec* spec = nullptr);

// Enumerated model of the instance for exact gains.
struct ExactModel {
  StateIndex idx;
  KernelSet kernels;
  RewardTable rewards;
  int start = 0;  // id of the initial state
  std::optional<double> optimal_gain;
};

ExactModel build_exact_model(const Instance& inst, bool solve_optimum, int workers = 1);

// Long-run gain of `policy` from the initial state.
double exact_policy_gain(const Instance& inst, const ExactModel& model, const AtomicPolicy& policy, RolloutMode mode);

struct EvalSettings {
  RolloutMode mode = RolloutMode::kKStep;
  int M = 16;
  int T = 2048;
  std::uint64_t seed = 0;
  bool greedy = true;
  int workers = 1;
};

struct EvalRow {
  std::string policy;
  bool greedy = false;
  GainEstimate estimate;
  std::optional<double> exact_gain;
};

// Rolls out every source with the same seeds; `exact` adds exact gains.
std::vector<EvalRow> evaluate_sources(const Instance& inst, const std::vector<PolicySource>& sources,
                                      const EvalSettings& settings, const ExactModel* exact = nullptr,
                                      const ScenarioSpec* spec = nullptr);

// Columns policy,mode,greedy,M,T,gain,std_error,exact_gain,optimal_gain,gap_pct;
// unavailable values are empty.
std::string evaluation_csv(const std::vector<EvalRow>& rows, const EvalSettings& settings, std::uint64_t config_hash,
                           std::optional<double> optimal_gain);

}  // namespace spn
