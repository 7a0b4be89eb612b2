#include "spn/run.hpp"

#include <cmath>
#include <cstdio>

#include "spn/config_io.hpp"
#include "spn/error.hpp"

namespace spn {

namespace {

constexpr std::uint32_t kEvaluationRound = 0xffffffffu;
constexpr std::string_view kCheckpointPrefix = "checkpoint:";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RunFile run_file_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw FormatError("run file must be a JSON object");
  RunFile out;
  if (doc.contains("scenario")) {
    out.scenario = scenario_from_json(doc.at("scenario"));
    out.instance = make_instance(*out.scenario);
  } else if (doc.contains("network")) {
    out.instance = instance_from_json(doc.at("network"));
  } else {
    out.instance = instance_from_json(doc);
  }
  if (doc.contains("train")) out.train = train_config_from_json(doc.at("train"));
  return out;
}

RunFile load_run_file(const std::string& path) {
  nlohmann::json doc;
  const auto text = read_file(path);
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("cannot parse " + path + ": " + e.what());
  }
  return run_file_from_json(doc);
}

RunFile resolve_run(const std::string& config_path, const std::string& scenario) {
  if (config_path.empty() == scenario.empty()) {
    throw FormatError("give exactly one of a config file and a scenario name");
  }
  if (!scenario.empty()) {
    const auto spec = scenario_preset(scenario);
    return {make_instance(spec), spec, std::nullopt};
  }
  return load_run_file(config_path);
}

PolicySource parse_policy_source(const std::string& text) {
  PolicySource src;
  src.label = text;
  if (text.starts_with(kCheckpointPrefix)) {
    src.checkpoint = load_checkpoint(text.substr(kCheckpointPrefix.size()));
  } else {
    src.baseline = baseline_from_string(text);
  }
  return src;
}

ResolvedPolicy resolve_policy(const Instance& inst, const PolicySource& src, bool greedy, const ScenarioSpec* spec) {
  ResolvedPolicy out;
  if (src.baseline) {
    out.base = baseline_policy(*src.baseline, inst, spec);
    return out;
  }
  const auto& ck = *src.checkpoint;
  const auto hash = config_hash(inst);
  if (ck.config_hash != hash) {
    throw FormatError("checkpoint " + src.label + " was trained on config " + hash_hex(ck.config_hash) +
                      ", not " + hash_hex(hash));
  }
  if (ck.policy.input_dim() != feature_dim(inst.config) || ck.policy.output_dim() != inst.config.num_atomic()) {
    throw DimensionError("checkpoint policy network does not match the configuration");
  }
  out.base = std::make_unique<NetPolicy>(inst.config, ck.policy);
  if (greedy) out.greedy = std::make_unique<ArgmaxPolicy>(*out.base);
  return out;
}

ExactModel build_exact_model(const Instance& inst, bool solve_optimum, int workers) {
  ExactModel m;
  EnumerateOptions eo;
  eo.roots = {initial_state(inst.config)};
  eo.workers = workers;
  m.idx = enumerate_states(inst.config, inst.extra, eo);
  KernelOptions ko;
  ko.workers = workers;
  ko.with_schedules = solve_optimum;
  m.kernels = build_kernels(inst.config, m.idx, inst.extra, ko);
  m.rewards = build_rewards(inst.config, m.idx, m.kernels);
  m.start = m.idx.at(initial_state(inst.config));
  if (solve_optimum) {
    SolveOptions so;
    so.workers = workers;
    m.optimal_gain = solve_original_rvi(m.kernels, m.rewards, so).gain;
  }
  return m;
}

double exact_policy_gain(const Instance& inst, const ExactModel& model, const AtomicPolicy& policy, RolloutMode mode) {
  const auto table = tabulate_policy(policy, inst, model.idx);
  EvaluateOptions eo;
  eo.passing_last = mode == RolloutMode::kPassingLast;
  return evaluate_atomic_from(model.kernels, model.rewards, table, inst.config.num_servers, model.start, eo);
}

std::vector<EvalRow> evaluate_sources(const Instance& inst, const std::vector<PolicySource>& sources,
                                      const EvalSettings& settings, const ExactModel* exact,
                                      const ScenarioSpec* spec) {
  std::vector<EvalRow> rows;
  for (const auto& src : sources) {
    const auto policy = resolve_policy(inst, src, settings.greedy, spec);
    RolloutOptions ro;
    ro.mode = settings.mode;
    ro.M = settings.M;
    ro.T = settings.T;
    ro.seeds = {settings.seed, kEvaluationRound};
    ro.workers = settings.workers;
    EvalRow row;
    row.policy = src.label;
    row.greedy = policy.greedy != nullptr;
    row.estimate = gain_estimate(rollout(inst, policy.get(), ro));
    if (exact) row.exact_gain = exact_policy_gain(inst, *exact, policy.get(), settings.mode);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string evaluation_csv(const std::vector<EvalRow>& rows, const EvalSettings& settings, std::uint64_t hash,
                           std::optional<double> optimal_gain) {
  std::string out = "# config_hash=" + hash_hex(hash) + " seed=" + std::to_string(settings.seed) + "\n";
  out += "policy,mode,greedy,M,T,gain,std_error,exact_gain,optimal_gain,gap_pct\n";
  for (const auto& r : rows) {
    out += r.policy + "," + to_string(settings.mode) + "," + (r.greedy ? "1" : "0") + "," +
           std::to_string(settings.M) + "," + std::to_string(settings.T) + "," + fmt(r.estimate.mean) + "," +
           fmt(r.estimate.std_error) + ",";
    if (r.exact_gain) out += fmt(*r.exact_gain);
    out += ",";
    if (optimal_gain) out += fmt(*optimal_gain);
    out += ",";
    // Shortfall relative to the optimum, using the exact gain when known.
    if (optimal_gain && *optimal_gain != 0.0) {
      const double g = r.exact_gain ? *r.exact_gain : r.estimate.mean;
      out += fmt(100.0 * (*optimal_gain - g) / std::abs(*optimal_gain));
    }
    out += "\n";
  }
  return out;
}

}  // namespace spn
