#include "spn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "spn/config_io.hpp"
#include "spn/sim.hpp"
#include "spn/solvers.hpp"

namespace spn {

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
  return out;
}

double worst_row_sum_error(const SparseRows& p) {
  double worst = 0.0;
  for (int r = 0; r < p.rows(); ++r) {
    double sum = 0.0;
    for (auto e = p.begin(r); e < p.end(r); ++e) {
      if (!(p.val[e] >= 0.0)) return INFINITY;
      sum += p.val[e];
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

// Non-passing atomic transitions that do not remove exactly one idle server.
int stratum_violations(const KernelSet& k) {
  int bad = 0;
  for (int s = 0; s < k.num_states; ++s) {
    for (int code = 1; code < k.num_atomic; ++code) {
      const int nxt = k.next(s, code);
      if (nxt >= 0 && k.idle_count[nxt] != k.idle_count[s] - 1) ++bad;
    }
  }
  return bad;
}

// Time-step chain of a joint policy given as schedule entries per state.
SparseRows joint_chain(const KernelSet& k, const std::vector<int>& policy) {
  SparseRows chain;
  for (int s = 0; s < k.num_states; ++s) {
    const int post = k.sched_post[k.sched_ptr[s] + policy[s]];
    for (auto e = k.p_sys.begin(post); e < k.p_sys.end(post); ++e) {
      chain.col.push_back(k.p_sys.col[e]);
      chain.val.push_back(k.p_sys.val[e]);
    }
    chain.row_ptr.push_back(static_cast<std::int64_t>(chain.col.size()));
  }
  return chain;
}

int simulation_mismatches(const Instance& inst, const StateIndex& idx, const std::vector<int>& codes,
                          const VerifyOptions& opts) {
  const TablePolicy policy(idx, {codes}, "passing-last optimal");
  const SeedSpec seeds{opts.seed, 0};
  RolloutOptions ro;
  ro.T = opts.sim_steps;
  ro.seeds = seeds;
  ro.mode = RolloutMode::kKStep;
  const auto a = rollout(inst, policy, ro);
  ro.mode = RolloutMode::kPassingLast;
  const auto b = rollout(inst, policy, ro);
  int bad = 0;
  for (int t = 0; t < opts.sim_steps; ++t) {
    const auto pa = a.state(0, t, a.K);
    const auto pb = b.state(0, t, b.K);
    bad += !std::equal(pa.begin(), pa.end(), pb.begin());
    bad += a.step_reward(0, t) != b.step_reward(0, t);
  }
  return bad;
}

}  // namespace

bool Certificate::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CertificateCheck& c) { return c.pass; });
}

std::string Certificate::text() const {
  std::string out = "certificate spn-verify\nconfig_hash " + hash_hex(config_hash) + "\nseed " +
                    std::to_string(seed) + "\nstates " + std::to_string(num_states) + "\n";
  char line[256];
  for (const auto& c : checks) {
    const char* status = c.informational ? "INFO" : c.pass ? "PASS" : "FAIL";
    std::snprintf(line, sizeof line, "check %s value=%.17g tolerance=%.17g status=%s\n", c.name.c_str(), c.value,
                  c.tolerance, status);
    out += line;
  }
  out += passed() ? "result PASSED\n" : "result FAILED\n";
  return out;
}

Certificate verify_theorems(const Instance& inst, const VerifyOptions& opts) {
  EnumerateOptions eo;
  eo.limit = opts.state_limit;
  eo.roots = {initial_state(inst.config)};
  eo.workers = opts.workers;
  const auto idx = enumerate_states(inst.config, inst.extra, eo);
  KernelOptions ko;
  ko.workers = opts.workers;
  const auto kernels = build_kernels(inst.config, idx, inst.extra, ko);
  return verify_theorems(inst, idx, kernels, opts);
}

Certificate verify_theorems(const Instance& inst, const StateIndex& idx, const KernelSet& k,
                            const VerifyOptions& opts) {
  Certificate cert;
  cert.config_hash = config_hash(inst);
  cert.seed = opts.seed;
  cert.num_states = k.num_states;
  auto add = [&](std::string name, double value, double tol) {
    cert.checks.push_back({std::move(name), value, tol, value <= tol, false});
  };

  const int K = inst.config.num_servers;
  const auto r = build_rewards(inst.config, idx, k);
  add("kernel_row_sums", worst_row_sum_error(k.p_sys), 1e-12);
  add("stratum_violations", stratum_violations(k), 0.0);

  const SolveOptions so{.tol = opts.solver_tol, .workers = opts.workers};
  const EvaluateOptions eo{.workers = opts.workers};
  const auto orig = solve_original_rvi(k, r, so);
  const auto atomic = solve_atomic_step_dependent(k, r, K, so);
  add("gain_gap", std::abs(atomic.gain - orig.gain), opts.tol);
  add("first_step_values_gap", max_abs_diff(atomic.h, orig.h), opts.tol);
  add("original_bellman_residual", original_bellman_residual(k, r, orig.gain, orig.h), opts.residual_tol);
  add("atomic_bellman_residual", atomic_bellman_residual(k, r, atomic.gain, atomic.step_values), opts.residual_tol);

  // Gains are taken from the initial state so that multichain greedy
  // policies (e.g. all-Pass under zero rewards) are still evaluated.
  const int start = std::max(idx.find(initial_state(inst.config)), 0);
  const int classes = count_recurrent_classes(joint_chain(k, orig.policy));
  cert.checks.push_back({"greedy_recurrent_classes", static_cast<double>(classes), 1.0, true, true});

  const auto sd_table = AtomicPolicyTable::deterministic(atomic.step_policy, k.num_atomic);
  add("step_dependent_gain_gap", std::abs(evaluate_atomic_from(k, r, sd_table, K, start, eo) - orig.gain), opts.tol);
  if (classes == 1) {
    const auto sd_eval = evaluate_atomic(k, r, sd_table, K, eo);
    double step_sum = 0.0;
    for (double g : per_step_gains(k, r, sd_table, K, sd_eval.stationary)) step_sum += g;
    add("per_step_gain_identity", std::abs(step_sum - sd_eval.gain), opts.residual_tol);
  }

  const auto pl = solve_passing_last(k, r, orig.gain, orig.h);
  add("passing_last_values_gap", max_abs_diff(pl.h, orig.h), opts.tol);
  const auto pl_table = AtomicPolicyTable::deterministic({pl.policy}, k.num_atomic);
  add("passing_last_gain_gap", std::abs(evaluate_atomic_from(k, r, pl_table, K, start, eo) - orig.gain), opts.tol);
  add("passing_last_simulation_mismatches", simulation_mismatches(inst, idx, pl.policy, opts), 0.0);
  return cert;
}

}  // namespace spn
