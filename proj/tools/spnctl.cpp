#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spn/config_io.hpp"
#include "spn/error.hpp"
#include "spn/run.hpp"
#include "spn/verify.hpp"

namespace fs = std::filesystem;
using namespace spn;

namespace {

enum Exit { kOk = 0, kFailed = 1, kUsage = 2, kResource = 3 };

struct Common {
  std::string config;
  std::string scenario;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--config", c.config, "run file (network document or scenario/network/train sections)");
  cmd->add_option("--scenario", c.scenario, "built-in scenario")->check(CLI::IsMember(scenario_preset_names()));
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  if (with_out) cmd->add_option("--out", c.out, "output directory");
}

std::string header(const Instance& inst, std::uint64_t seed) {
  return "# config_hash=" + hash_hex(config_hash(inst)) + " seed=" + std::to_string(seed) + "\n";
}

fs::path out_file(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  return fs::path(c.out) / name;
}

int cmd_validate(const Common& c) {
  const auto run = resolve_run(c.config, c.scenario);
  const auto violations = validate_instance(run.instance);
  std::cout << "config_hash " << hash_hex(config_hash(run.instance)) << "\n";
  for (const auto& v : violations) std::cout << "violation " << v.constraint << ": " << v.detail << "\n";
  std::cout << (violations.empty() ? "valid\n" : "invalid\n");
  return violations.empty() ? kOk : kFailed;
}

int check_valid(const Instance& inst) {
  const auto violations = validate_instance(inst);
  for (const auto& v : violations) std::cerr << "violation " << v.constraint << ": " << v.detail << "\n";
  return violations.empty() ? kOk : kFailed;
}

StateIndex enumerate_for(const Instance& inst, int workers) {
  EnumerateOptions eo;
  eo.roots = {initial_state(inst.config)};
  eo.workers = workers;
  return enumerate_states(inst.config, inst.extra, eo);
}

// Loads kernels from cache_path when it holds this configuration, otherwise
// builds them and refreshes the cache.
KernelSet kernels_for(const Instance& inst, const StateIndex& idx, int workers, const std::string& cache_path) {
  const auto hash = config_hash(inst);
  KernelSet k;
  if (!cache_path.empty() && load_kernels(cache_path, hash, k)) {
    if (k.num_states != idx.size()) throw FormatError("kernel cache " + cache_path + " has the wrong state count");
    return k;
  }
  KernelOptions ko;
  ko.workers = workers;
  k = build_kernels(inst.config, idx, inst.extra, ko);
  k.config_hash = hash;
  if (!cache_path.empty()) {
    const auto dir = fs::path(cache_path).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    save_kernels(cache_path, k);
  }
  return k;
}

int cmd_enumerate(const Common& c, const std::string& cache, bool values) {
  const auto run = resolve_run(c.config, c.scenario);
  if (const int rc = check_valid(run.instance)) return rc;
  const auto idx = enumerate_for(run.instance, c.workers);
  const auto k = kernels_for(run.instance, idx, c.workers, cache);
  const auto report = action_count_report(run.instance.config, idx, k);
  const auto text = header(run.instance, c.seed) + report.text();
  write_file(out_file(c, "enumerate.txt"), text);
  std::cout << text;
  if (values) {
    const auto r = build_rewards(run.instance.config, idx, k);
    SolveOptions so;
    so.workers = c.workers;
    const auto sol = solve_original_rvi(k, r, so);
    write_file(out_file(c, "values.csv"), header(run.instance, c.seed) + value_table_csv(sol.h));
    std::printf("optimal_gain %.17g\n", sol.gain);
  }
  return kOk;
}

int cmd_verify(const Common& c, double tol, const std::string& cache) {
  const auto run = resolve_run(c.config, c.scenario);
  if (const int rc = check_valid(run.instance)) return rc;
  VerifyOptions vo;
  vo.tol = tol;
  vo.seed = c.seed;
  vo.workers = c.workers;
  const auto idx = enumerate_for(run.instance, c.workers);
  const auto k = kernels_for(run.instance, idx, c.workers, cache);
  const auto cert = verify_theorems(run.instance, idx, k, vo);
  write_file(out_file(c, "certificate.txt"), cert.text());
  std::cout << cert.text();
  return cert.passed() ? kOk : kFailed;
}

int cmd_train(const Common& c, TrainConfig tc, int checkpoint_every) {
  const auto run = resolve_run(c.config, c.scenario);
  if (const int rc = check_valid(run.instance)) return rc;
  tc.seed = c.seed;
  tc.workers = c.workers;
  validate_train_config(tc);
  const auto hash = config_hash(run.instance);
  nlohmann::json manifest;
  manifest["config_hash"] = hash_hex(hash);
  manifest["seed"] = c.seed;
  manifest["train"] = train_config_to_json(tc);
  manifest["network"] = instance_to_json(run.instance);
  write_file(out_file(c, "run.json"), manifest.dump(2) + "\n");

  const auto hook = [&](const IterationReport& rep, const Checkpoint& ck) {
    std::printf("iteration %d gain %.6f critic_loss %.6g entropy %.4f %.1fs\n", rep.iteration, rep.gain,
                rep.critic_loss, rep.entropy, rep.wall_seconds);
    std::fflush(stdout);
    if (checkpoint_every > 0 && ck.iteration % checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%04d.bin", ck.iteration);
      save_checkpoint(out_file(c, name), ck);
    }
  };
  const auto res = train(run.instance, tc, hook);
  save_checkpoint(out_file(c, "checkpoint.bin"), res.checkpoint);
  write_file(out_file(c, "checkpoint.manifest"), checkpoint_manifest(res.checkpoint));
  write_file(out_file(c, "train.csv"), reports_csv(res.reports, hash, c.seed));
  write_file(out_file(c, "timing.csv"), header(run.instance, c.seed) + timing_csv(res.reports));
  return kOk;
}

int cmd_evaluate(const Common& c, const std::vector<std::string>& policies, EvalSettings es, bool exact,
                 const std::string& file_name) {
  const auto run = resolve_run(c.config, c.scenario);
  if (const int rc = check_valid(run.instance)) return rc;
  es.seed = c.seed;
  es.workers = c.workers;
  std::vector<PolicySource> sources;
  for (const auto& p : policies) sources.push_back(parse_policy_source(p));
  std::optional<ExactModel> model;
  if (exact) model = build_exact_model(run.instance, true, c.workers);
  const auto rows = evaluate_sources(run.instance, sources, es, model ? &*model : nullptr,
                                     run.scenario ? &*run.scenario : nullptr);
  const auto csv =
      evaluation_csv(rows, es, config_hash(run.instance), model ? model->optimal_gain : std::optional<double>{});
  write_file(out_file(c, file_name), csv);
  std::cout << csv;
  return kOk;
}

void add_eval_options(CLI::App* cmd, EvalSettings& es, std::string& mode, bool& stochastic, bool& exact) {
  cmd->add_option("--mode", mode, "rollout dynamics")->check(CLI::IsMember({"k-step", "passing-last"}));
  cmd->add_option("-M,--trajectories", es.M, "trajectories")->check(CLI::PositiveNumber);
  cmd->add_option("-T,--horizon", es.T, "time steps per trajectory")->check(CLI::PositiveNumber);
  cmd->add_flag("--stochastic", stochastic, "sample checkpoint policies instead of taking the argmax");
  cmd->add_flag("--exact", exact, "also report exact gains on the enumerated state space");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scheduling for stochastic processing networks: exact solvers, simulation and atomic PPO"};
  app.require_subcommand(1);
  Common common;

  auto* validate = app.add_subcommand("validate", "check a configuration");
  add_common(validate, common, false);

  auto* enumerate = app.add_subcommand("enumerate", "enumerate states and report action counts");
  add_common(enumerate, common);
  std::string cache;
  bool values = false;
  enumerate->add_option("--kernel-cache", cache, "binary kernel cache file");
  enumerate->add_flag("--values", values, "solve for the optimal gain and write values.csv");

  auto* verify = app.add_subcommand("verify", "exact equivalence certificate");
  add_common(verify, common);
  double tol = 1e-6;
  verify->add_option("--tol", tol, "gap tolerance")->check(CLI::PositiveNumber);
  verify->add_option("--kernel-cache", cache, "binary kernel cache file");

  auto* trainc = app.add_subcommand("train", "train an atomic policy with PPO");
  add_common(trainc, common);
  TrainConfig tc;
  std::string train_mode = "k-step";
  int checkpoint_every = 0;
  trainc->add_option("--iterations", tc.iterations, "policy iterations N");
  trainc->add_option("--trajectories", tc.trajectories, "trajectories per iteration M");
  trainc->add_option("--horizon", tc.horizon, "time steps per trajectory T");
  trainc->add_option("--lambda", tc.lambda, "TD(lambda) weight");
  trainc->add_option("--clip", tc.clip, "ratio clip epsilon");
  trainc->add_option("--epochs", tc.epochs, "policy epochs per iteration");
  trainc->add_option("--minibatch", tc.minibatch, "minibatch size");
  trainc->add_option("--entropy", tc.entropy_coef, "entropy bonus coefficient");
  trainc->add_option("--policy-lr", tc.policy_lr, "policy learning rate");
  trainc->add_option("--critic-lr", tc.critic_lr, "critic learning rate");
  trainc->add_option("--critic-epochs", tc.critic_epochs, "critic epochs per iteration");
  trainc->add_option("--max-grad-norm", tc.max_grad_norm, "gradient norm clip");
  trainc->add_option("--hidden", tc.hidden, "hidden layer widths");
  trainc->add_option("--mode", train_mode, "rollout dynamics")->check(CLI::IsMember({"k-step", "passing-last"}));
  trainc->add_option("--checkpoint-every", checkpoint_every, "also keep every n-th iteration's checkpoint");

  auto* evaluate = app.add_subcommand("evaluate", "empirical (and exact) gain of one policy");
  add_common(evaluate, common);
  EvalSettings es;
  std::string eval_mode = "k-step";
  bool stochastic = false, exact = false;
  std::string checkpoint, baseline;
  auto* ck_opt = evaluate->add_option("--checkpoint", checkpoint, "trained checkpoint");
  evaluate->add_option("--baseline", baseline, "baseline policy")
      ->check(CLI::IsMember({"pass", "random", "greedy", "max-weight"}))
      ->excludes(ck_opt);
  add_eval_options(evaluate, es, eval_mode, stochastic, exact);

  auto* compare = app.add_subcommand("compare", "evaluate several policies on common seeds");
  add_common(compare, common);
  std::vector<std::string> policies;
  compare->add_option("--policy", policies, "baseline name or checkpoint:<path>; repeatable")->required();
  add_eval_options(compare, es, eval_mode, stochastic, exact);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (common.config.empty() == common.scenario.empty()) {
      std::cerr << "error: give exactly one of --config and --scenario\n";
      return kUsage;
    }
    // TrainConfig defaults come from the run file when it has a train section.
    if (*trainc && !common.config.empty()) {
      const auto run = load_run_file(common.config);
      if (run.train) {
        TrainConfig from_file = *run.train;
        for (const auto* opt : trainc->get_options()) {
          if (opt->count() == 0) continue;
          const auto& name = opt->get_name();
          if (name == "--iterations") from_file.iterations = tc.iterations;
          if (name == "--trajectories") from_file.trajectories = tc.trajectories;
          if (name == "--horizon") from_file.horizon = tc.horizon;
          if (name == "--lambda") from_file.lambda = tc.lambda;
          if (name == "--clip") from_file.clip = tc.clip;
          if (name == "--epochs") from_file.epochs = tc.epochs;
          if (name == "--minibatch") from_file.minibatch = tc.minibatch;
          if (name == "--entropy") from_file.entropy_coef = tc.entropy_coef;
          if (name == "--policy-lr") from_file.policy_lr = tc.policy_lr;
          if (name == "--critic-lr") from_file.critic_lr = tc.critic_lr;
          if (name == "--critic-epochs") from_file.critic_epochs = tc.critic_epochs;
          if (name == "--max-grad-norm") from_file.max_grad_norm = tc.max_grad_norm;
          if (name == "--hidden") from_file.hidden = tc.hidden;
        }
        if (trainc->get_option("--mode")->count() == 0) train_mode = to_string(from_file.mode);
        tc = from_file;
      }
    }
    if (*validate) return cmd_validate(common);
    if (*enumerate) return cmd_enumerate(common, cache, values);
    if (*verify) return cmd_verify(common, tol, cache);
    if (*trainc) {
      tc.mode = rollout_mode_from_string(train_mode);
      return cmd_train(common, tc, checkpoint_every);
    }
    es.mode = rollout_mode_from_string(eval_mode);
    es.greedy = !stochastic;
    if (*evaluate) {
      if (checkpoint.empty() == baseline.empty()) {
        std::cerr << "error: give exactly one of --checkpoint and --baseline\n";
        return kUsage;
      }
      const auto source = checkpoint.empty() ? baseline : "checkpoint:" + checkpoint;
      return cmd_evaluate(common, {source}, es, exact, "evaluate.csv");
    }
    return cmd_evaluate(common, policies, es, exact, "compare.csv");
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ResourceLimitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kResource;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
