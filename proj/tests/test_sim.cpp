#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "spn/error.hpp"
#include "spn/scenarios.hpp"
#include "spn/sim.hpp"
#include "spn/solvers.hpp"
#include "test_util.hpp"

using namespace spn;
using spn::testing::single_queue;
using spn::testing::two_server;

namespace {

class AlwaysServe : public AtomicPolicy {
 public:
  void distribution(const SystemState&, int, std::span<const std::uint8_t> mask, std::span<double> probs) const override {
    std::fill(probs.begin(), probs.end(), 0.0);
    probs[mask[1] ? 1 : 0] = 1.0;
  }
  std::string name() const override { return "always-serve"; }
};

class Cheater : public AtomicPolicy {
 public:
  void distribution(const SystemState&, int, std::span<const std::uint8_t>, std::span<double> probs) const override {
    std::fill(probs.begin(), probs.end(), 0.0);
    probs[1] = 1.0;
  }
  std::string name() const override { return "cheater"; }
};

struct Solved {
  Instance inst;
  StateIndex idx;
  KernelSet k;
  RewardTable r;
  SolveResult orig, pl;
};

Solved solve(const Instance& inst) {
  Solved s{inst, {}, {}, {}, {}, {}};
  EnumerateOptions opts;
  opts.roots = {initial_state(inst.config)};
  s.idx = enumerate_states(inst.config, inst.extra, opts);
  s.k = build_kernels(inst.config, s.idx, inst.extra);
  s.r = build_rewards(inst.config, s.idx, s.k);
  s.orig = solve_original_rvi(s.k, s.r);
  s.pl = solve_passing_last(s.k, s.r, s.orig.gain, s.orig.h);
  return s;
}

bool same_batch(const TrajectoryBatch& a, const TrajectoryBatch& b) {
  return a.states == b.states && a.actions == b.actions && a.rewards == b.rewards && a.holding == b.holding &&
         a.log_probs == b.log_probs && a.masks == b.masks && a.steps == b.steps && a.final_states == b.final_states;
}

}  // namespace

TEST_CASE("always-pass collects holding costs only") {
  const Instance inst{single_queue(0.5, 1.0, 3, -1.0), {}};
  const auto pass = baseline_policy(BaselineKind::kPass, inst);
  const auto b = rollout(inst, *pass, {.mode = RolloutMode::kKStep, .M = 2, .T = 200, .seeds = {5, 0}});
  for (int m = 0; m < b.M; ++m) {
    int prev = 0;
    for (int t = 0; t < b.T; ++t) {
      CHECK(b.actions[b.step_index(m, t, 0)] == 0);
      CHECK(b.rewards[b.step_index(m, t, 0)] == 0.0);
      const auto s = b.state(m, t, 0);
      CHECK(s[0] >= prev);
      CHECK(s[2] == 1);  // the server stays idle
      CHECK(b.step_reward(m, t) == -static_cast<double>(s[0]));
      prev = s[0];
    }
    CHECK(prev == 3);
  }
}

TEST_CASE("passing-last and K-step rollouts of a deterministic policy coincide") {
  for (const auto& name : {"switch2", "hospital2"}) {
    const auto sv = solve(make_instance(scenario_preset(name)));
    const TablePolicy policy(sv.idx, {sv.pl.policy}, "passing-last optimal");
    const SeedSpec seeds{2024, 7};
    const auto a = rollout(sv.inst, policy, {.mode = RolloutMode::kKStep, .M = 1, .T = 1000, .seeds = seeds});
    const auto b = rollout(sv.inst, policy, {.mode = RolloutMode::kPassingLast, .M = 1, .T = 1000, .seeds = seeds});
    int mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
      const auto pa = a.state(0, t, a.K);
      const auto pb = b.state(0, t, b.K);
      mismatches += !std::equal(pa.begin(), pa.end(), pb.begin());
      mismatches += a.step_reward(0, t) != b.step_reward(0, t);
    }
    CHECK(mismatches == 0);
    CHECK(a.final_states == b.final_states);
  }
}

TEST_CASE("empirical gain agrees with exact evaluation") {
  const Instance inst{single_queue(0.5, 0.6, 3, -1.0), {}};
  const auto sv = solve(inst);
  const AlwaysServe policy;
  const auto table = tabulate_policy(policy, inst, sv.idx);
  const double exact = evaluate_atomic(sv.k, sv.r, table, 1).gain;
  const auto b = rollout(inst, policy, {.mode = RolloutMode::kPassingLast, .M = 16, .T = 5000, .seeds = {9, 0}});
  const auto est = gain_estimate(b);
  CHECK(est.std_error > 0.0);
  CHECK(std::abs(est.mean - exact) <= 3.0 * est.std_error);
  CHECK(est.mean == doctest::Approx(empirical_gain(b)));
}

TEST_CASE("rollouts replay exactly") {
  const auto inst = make_instance(scenario_preset("hospital2"));
  const auto random = baseline_policy(BaselineKind::kRandom, inst);
  RolloutOptions opts{.mode = RolloutMode::kKStep, .M = 5, .T = 300, .seeds = {77, 3}};
  const auto a = rollout(inst, *random, opts);
  opts.workers = 3;
  const auto b = rollout(inst, *random, opts);
  CHECK(same_batch(a, b));
  opts.seeds.master = 78;
  const auto c = rollout(inst, *random, opts);
  CHECK_FALSE(same_batch(a, c));
  opts.seeds = {77, 4};
  const auto d = rollout(inst, *random, opts);
  CHECK_FALSE(same_batch(a, d));
}

TEST_CASE("random policy only picks feasible actions and logs their probabilities") {
  const Instance inst{two_server(), {}};
  const auto random = baseline_policy(BaselineKind::kRandom, inst);
  const auto b = rollout(inst, *random, {.mode = RolloutMode::kKStep, .M = 2, .T = 500, .seeds = {1, 0}});
  for (std::size_t i = 0; i < b.actions.size(); ++i) {
    const int code = b.actions[i];
    REQUIRE(code >= 0);
    CHECK(b.masks[i * b.num_atomic + code] == 1);
    int feasible = 0;
    for (int c = 0; c < b.num_atomic; ++c) feasible += b.masks[i * b.num_atomic + c];
    CHECK(b.log_probs[i] == doctest::Approx(-std::log(static_cast<double>(feasible))));
  }
}

TEST_CASE("mass on infeasible actions is rejected") {
  const Instance inst{single_queue(0.5, 1.0, 3, -1.0), {}};
  const Cheater cheat;
  CHECK_THROWS_AS(rollout(inst, cheat, {.M = 1, .T = 5, .seeds = {1, 0}}), InfeasibleActionError);
}

TEST_CASE("batch files round trip") {
  const auto inst = make_instance(scenario_preset("switch2"));
  const auto random = baseline_policy(BaselineKind::kRandom, inst);
  const auto b = rollout(inst, *random, {.mode = RolloutMode::kPassingLast, .M = 3, .T = 40, .seeds = {4, 1}});
  const auto path = (std::filesystem::temp_directory_path() / "spn_batch_test.bin").string();
  save_batch(path, b);
  const auto back = load_batch(path);
  CHECK(same_batch(b, back));
  CHECK(back.mode == RolloutMode::kPassingLast);
  CHECK(back.config_hash == b.config_hash);
  CHECK(back.seeds.master == 4);
  CHECK(back.seeds.round == 1);
  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_AS(load_batch(path), FormatError);
  std::filesystem::remove(path);
  const auto csv = batch_summary_csv(b);
  CHECK(csv.rfind("# config_hash=", 0) == 0);
  CHECK(csv.find("trajectory,gain\n") != std::string::npos);
}

TEST_CASE("rollout mode names") {
  CHECK(rollout_mode_from_string(to_string(RolloutMode::kKStep)) == RolloutMode::kKStep);
  CHECK(rollout_mode_from_string("passing-last") == RolloutMode::kPassingLast);
  CHECK_THROWS_AS(rollout_mode_from_string("sideways"), FormatError);
}

TEST_CASE("argmax wrapper agrees with greedy tabulation") {
  const auto inst = make_instance(scenario_preset("switch2"));
  EnumerateOptions opts;
  opts.roots = {initial_state(inst.config)};
  const auto idx = enumerate_states(inst.config, inst.extra, opts);
  const auto random = baseline_policy(BaselineKind::kRandom, inst);
  const ArgmaxPolicy argmax(*random);
  const auto a = tabulate_policy(argmax, inst, idx);
  const auto b = tabulate_policy(*random, inst, idx, 1, true);
  CHECK(a.probs == b.probs);
  CHECK(argmax.name() == random->name() + " (greedy)");
}
