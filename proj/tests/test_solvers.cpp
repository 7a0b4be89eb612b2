#include <algorithm>
#include <chrono>
#include <cmath>

#include "doctest.h"
#include "spn/error.hpp"
#include "spn/scenarios.hpp"
#include "spn/solvers.hpp"
#include "test_util.hpp"

using namespace spn;
using spn::testing::single_queue;
using spn::testing::two_server;

namespace {

struct Model {
  Instance inst;
  StateIndex idx;
  KernelSet k;
  RewardTable r;
};

Model build(const Instance& inst, bool reachable = true) {
  Model m{inst, {}, {}, {}};
  EnumerateOptions opts;
  if (reachable) opts.roots = {initial_state(inst.config)};
  m.idx = enumerate_states(inst.config, inst.extra, opts);
  m.k = build_kernels(inst.config, m.idx, inst.extra);
  m.r = build_rewards(inst.config, m.idx, m.k);
  return m;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Serve-whenever-possible chain of a single queue, built by hand on
// (items, server phase) with phase 0 = idle and 1 = busy at age 1. Gain from
// power iteration of the lazy chain.
double single_queue_oracle_gain(double p, double mu0, int cap) {
  const int n = (cap + 1) * 2;
  auto id = [](int z, int phase) { return z * 2 + phase; };
  std::vector<std::vector<double>> P(n, std::vector<double>(n, 0.0));
  std::vector<double> reward(n, 0.0);
  const double arrive[2] = {1.0 - p, p};
  for (int z = 0; z <= cap; ++z) {
    for (int phase = 0; phase < 2; ++phase) {
      if (phase == 1 && z == 0) continue;  // a busy server holds an item
      const int s = id(z, phase);
      const bool busy = phase == 1 || z >= 1;
      reward[s] = -static_cast<double>(busy ? z - 1 : z);
      for (int x = 0; x < 2; ++x) {
        if (!busy) {
          P[s][id(std::min(cap, z + x), 0)] += arrive[x];
        } else if (phase == 1) {
          P[s][id(std::min(cap, z - 1 + x), 0)] += arrive[x];
        } else {
          P[s][id(std::min(cap, z - 1 + x), 0)] += arrive[x] * mu0;
          P[s][id(std::min(cap, z + x), 1)] += arrive[x] * (1.0 - mu0);
        }
      }
    }
  }
  std::vector<double> dist(n, 0.0), nxt(n);
  dist[0] = 1.0;
  for (int it = 0; it < 200000; ++it) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (int s = 0; s < n; ++s) {
      nxt[s] += 0.5 * dist[s];
      for (int t = 0; t < n; ++t) nxt[t] += 0.5 * dist[s] * P[s][t];
    }
    dist.swap(nxt);
  }
  double g = 0.0;
  for (int s = 0; s < n; ++s) g += dist[s] * reward[s];
  return g;
}

std::vector<Instance> theorem_instances() {
  std::vector<Instance> out;
  for (const auto& name : scenario_preset_names()) out.push_back(make_instance(scenario_preset(name)));
  out.push_back({two_server(), {}});
  return out;
}

}  // namespace

TEST_CASE("zero rewards give zero gain and values") {
  auto cfg = two_server();
  cfg.service_reward.assign(3, 0.0);
  cfg.holding_weight.assign(2, 0.0);
  const auto m = build({cfg, {}});
  const auto orig = solve_original_rvi(m.k, m.r);
  CHECK(orig.gain == 0.0);
  CHECK(max_abs_diff(orig.h, std::vector<double>(orig.h.size(), 0.0)) == 0.0);
  const auto atomic = solve_atomic_step_dependent(m.k, m.r, cfg.num_servers);
  CHECK(std::abs(atomic.gain) < 1e-15);
  CHECK(max_abs_diff(atomic.h, std::vector<double>(atomic.h.size(), 0.0)) < 1e-15);
}

TEST_CASE("single queue gain matches the hand-built chain") {
  SUBCASE("M1") {
    const auto m = build({single_queue(0.5, 1.0, 3, -1.0), {}});
    const auto res = solve_original_rvi(m.k, m.r);
    CHECK(std::abs(res.gain - single_queue_oracle_gain(0.5, 1.0, 3)) < 1e-8);
  }
  SUBCASE("geometric service") {
    const auto m = build({single_queue(0.5, 0.6, 3, -1.0), {}}, false);
    const auto res = solve_original_rvi(m.k, m.r);
    const double oracle = single_queue_oracle_gain(0.5, 0.6, 3);
    CHECK(oracle < -0.1);
    CHECK(std::abs(res.gain - oracle) < 1e-8);

    // Serving is entry 1 wherever two schedules exist.
    std::vector<int> serve(m.k.num_states);
    for (int s = 0; s < m.k.num_states; ++s) serve[s] = m.k.num_schedules(s) - 1;
    const auto ev = evaluate_joint(m.k, m.r, serve);
    CHECK(std::abs(ev.gain - oracle) < 1e-10);
    CHECK(ev.recurrent_classes == 1);
    CHECK(ev.residual < 1e-10);
    CHECK(res.policy == serve);
  }
}

TEST_CASE("scaling rewards scales gain and values") {
  const auto m = build({two_server(), {}});
  const auto base = solve_original_rvi(m.k, m.r);
  auto scaled = m.r;
  scaled.scale(2.5);
  const auto res = solve_original_rvi(m.k, scaled);
  CHECK(std::abs(res.gain - 2.5 * base.gain) < 1e-8);
  std::vector<double> h = base.h;
  for (double& v : h) v *= 2.5;
  CHECK(max_abs_diff(res.h, h) < 1e-6);
}

TEST_CASE("reference state only shifts relative values") {
  const auto m = build({two_server(), {}});
  const auto a = solve_original_rvi(m.k, m.r, {.reference = 0});
  const auto b = solve_original_rvi(m.k, m.r, {.reference = 7});
  CHECK(std::abs(a.gain - b.gain) < 1e-9);
  CHECK(b.h[7] == 0.0);
  std::vector<double> shifted = b.h;
  for (double& v : shifted) v -= b.h[0];
  CHECK(max_abs_diff(a.h, shifted) < 1e-7);
}

TEST_CASE("atomic and joint formulations agree") {
  for (const auto& inst : theorem_instances()) {
    const auto start = std::chrono::steady_clock::now();
    const auto m = build(inst);
    const int K = inst.config.num_servers;
    const auto orig = solve_original_rvi(m.k, m.r);
    const auto atomic = solve_atomic_step_dependent(m.k, m.r, K);
    const auto pl = solve_passing_last(m.k, m.r, orig.gain, orig.h);
    CAPTURE(m.k.num_states);
    CAPTURE(orig.iterations);

    CHECK(std::abs(atomic.gain - orig.gain) < 1e-6);
    CHECK(max_abs_diff(atomic.h, orig.h) < 1e-6);
    CHECK(max_abs_diff(pl.h, orig.h) < 1e-6);
    CHECK(original_bellman_residual(m.k, m.r, orig.gain, orig.h) < 1e-8);
    CHECK(atomic_bellman_residual(m.k, m.r, atomic.gain, atomic.step_values) < 1e-8);

    const auto greedy_joint = evaluate_joint(m.k, m.r, orig.policy);
    CHECK(std::abs(greedy_joint.gain - orig.gain) < 1e-6);

    const auto pl_table = AtomicPolicyTable::deterministic({pl.policy}, m.k.num_atomic);
    const auto pl_eval = evaluate_atomic(m.k, m.r, pl_table, K);
    CHECK(std::abs(pl_eval.gain - orig.gain) < 1e-6);
    CHECK(std::abs(evaluate_atomic_from(m.k, m.r, pl_table, K, 0) - pl_eval.gain) < 1e-9);

    const auto sd_table = AtomicPolicyTable::deterministic(atomic.step_policy, m.k.num_atomic);
    const auto sd_eval = evaluate_atomic(m.k, m.r, sd_table, K);
    CHECK(std::abs(sd_eval.gain - orig.gain) < 1e-6);
    const auto gains = per_step_gains(m.k, m.r, sd_table, K, sd_eval.stationary);
    double sum = 0.0;
    for (double g : gains) sum += g;
    CHECK(std::abs(sum - sd_eval.gain) < 1e-8);

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(secs < 120.0);
  }
}

TEST_CASE("step values of an evaluated K-step policy") {
  const auto m = build({two_server(), {}});
  const int K = 2;
  const auto atomic = solve_atomic_step_dependent(m.k, m.r, K);
  const auto table = AtomicPolicyTable::deterministic(atomic.step_policy, m.k.num_atomic);
  const auto ev = evaluate_atomic(m.k, m.r, table, K);
  REQUIRE(ev.step_values.size() == 2);
  CHECK(max_abs_diff(ev.step_values[0], ev.h) < 1e-9);
  CHECK(max_abs_diff(ev.step_values[1], atomic.step_values[1]) < 1e-6);
}

TEST_CASE("per-step gains of a step-independent policy under K-step dynamics") {
  const auto m = build({two_server(), {}});
  const int K = 2;
  // Uniform over feasible atomic actions at every step.
  AtomicPolicyTable t;
  t.num_atomic = m.k.num_atomic;
  t.probs.assign(1, std::vector<double>(static_cast<std::size_t>(m.k.num_states) * t.num_atomic, 0.0));
  for (int s = 0; s < m.k.num_states; ++s) {
    int count = 0;
    for (int c = 0; c < t.num_atomic; ++c) count += m.k.next(s, c) >= 0;
    for (int c = 0; c < t.num_atomic; ++c) {
      if (m.k.next(s, c) >= 0) t.probs[0][static_cast<std::size_t>(s) * t.num_atomic + c] = 1.0 / count;
    }
  }
  const auto ev = evaluate_atomic(m.k, m.r, t, K, {.passing_last = false});
  const auto gains = per_step_gains(m.k, m.r, t, K, ev.stationary);
  CHECK(std::abs(gains[0] + gains[1] - ev.gain) < 1e-8);
  double total = 0.0;
  for (double p : ev.stationary) total += p;
  CHECK(std::abs(total - 1.0) < 1e-10);
}

TEST_CASE("recurrent class counting") {
  SparseRows two;
  two.col = {0, 1};
  two.val = {1.0, 1.0};
  two.row_ptr = {0, 1, 2};
  CHECK(count_recurrent_classes(two) == 2);

  SparseRows funnel;  // 0 -> 1 -> 2 <-> 3
  funnel.col = {1, 2, 3, 2};
  funnel.val = {1.0, 1.0, 1.0, 1.0};
  funnel.row_ptr = {0, 1, 2, 3, 4};
  CHECK(count_recurrent_classes(funnel) == 1);
}

TEST_CASE("multichain policies are rejected by exact evaluation") {
  const auto m = build({single_queue(0.5, 1.0, 3, -1.0), {}}, false);
  // Serve only when the buffer is below 2: from 2 or more the queue never
  // drains, so {z >= 2} is a second closed class.
  std::vector<int> codes(m.k.num_states, 0);
  for (int s = 0; s < m.k.num_states; ++s) {
    if (m.idx.state(s).items[0] < 2 && m.k.next(s, 1) >= 0) codes[s] = 1;
  }
  const auto table = AtomicPolicyTable::deterministic({codes}, m.k.num_atomic);
  CHECK_THROWS_AS(evaluate_atomic(m.k, m.r, table, 1), StructuralError);
  // From the empty state the queue stays in {0, 1} and holds nothing; a full
  // buffer never drains.
  CHECK(std::abs(evaluate_atomic_from(m.k, m.r, table, 1, 0)) < 1e-12);
  const int full = m.idx.at(SystemState::unflatten(m.inst.config, std::vector<int>{3, 0, 1}));
  CHECK(evaluate_atomic_from(m.k, m.r, table, 1, full) == doctest::Approx(-3.0).epsilon(1e-9));
}

TEST_CASE("iteration budget exhaustion reports the last span") {
  const auto m = build({two_server(), {}});
  try {
    solve_original_rvi(m.k, m.r, {.max_iter = 2});
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.last_span() > 0.0);
  }
}

TEST_CASE("value table export") {
  CHECK(value_table_csv({0.0, -1.5}) == "state_id,h\n0,0\n1,-1.5\n");
}
