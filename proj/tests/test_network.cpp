#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "spn/error.hpp"
#include "spn/network.hpp"
#include "test_util.hpp"

using namespace spn;
using spn::testing::brute_force_states;
using spn::testing::single_queue;
using spn::testing::two_server;

namespace {

bool has_violation(const std::vector<Violation>& v, const std::string& name) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.constraint == name; });
}

SystemState fold_atomic(const NetworkConfig& cfg, SystemState s, const std::vector<AtomicAction>& seq) {
  for (auto a : seq) s = apply_atomic(cfg, s, a);
  return s;
}

}  // namespace

TEST_CASE("philox known answer") {
  Philox rng(0, 0);
  CHECK(rng() == ((0xe169c58dULL << 32) | 0x6627e8d5ULL));
  CHECK(rng() == ((0x9b00dbd8ULL << 32) | 0xbc57ac4cULL));
  CHECK(rng.blocks_used() == 1);
}

TEST_CASE("philox streams differ and replay") {
  Philox a(7, make_stream_id(StreamTag::kDynamics, 0, 1));
  Philox b(7, make_stream_id(StreamTag::kDynamics, 0, 2));
  Philox c(7, make_stream_id(StreamTag::kDynamics, 0, 1));
  int same = 0;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    same += x == b();
    CHECK(x == c());
  }
  CHECK(same == 0);
}

TEST_CASE("validate_config") {
  auto cfg = single_queue(0.5, 1.0, 3, -1.0);
  CHECK(validate_config(cfg).empty());

  auto bad = two_server();
  bad.material(1, 0) = 1;
  CHECK(has_violation(validate_config(bad), "material-column"));

  bad = two_server();
  bad.material(1, 2) = 0;
  CHECK(has_violation(validate_config(bad), "material-row"));

  bad = two_server();
  bad.compatibility(0, 2) = bad.compatibility(1, 2) = bad.compatibility(2, 2) = 0;
  CHECK(has_violation(validate_config(bad), "compatibility-column"));

  bad = two_server();
  bad.completion(1, 1) = 0.9;
  CHECK(has_violation(validate_config(bad), "completion-cap"));

  bad = two_server();
  bad.arrivals[0] = {0.5, 0.5 + 1e-9};
  CHECK(has_violation(validate_config(bad), "arrival-pmf"));

  bad = two_server();
  bad.holding_weight[0] = 0.5;
  CHECK(has_violation(validate_config(bad), "holding-sign"));

  bad = two_server();
  bad.material = Table<int>(3, 3);
  CHECK(has_violation(validate_config(bad), "shape"));
}

TEST_CASE("schedule feasibility on the single queue") {
  auto cfg = single_queue(0.5, 1.0, 3, -1.0);
  SystemState s = initial_state(cfg);
  s.items[0] = 1;
  Schedule a = zero_schedule(cfg);
  CHECK(schedule_feasible(cfg, s, a));
  a(0, 0) = 1;
  CHECK(schedule_feasible(cfg, s, a));
  a(0, 0) = 2;
  CHECK_FALSE(schedule_feasible(cfg, s, a));
  CHECK_THROWS_AS(schedule_feasible(cfg, s, Schedule(2, 2)), DimensionError);

  s.items[0] = 0;
  a(0, 0) = 1;
  CHECK_FALSE(schedule_feasible(cfg, s, a));
}

TEST_CASE("atomic feasibility") {
  auto cfg = two_server();
  SystemState s = initial_state(cfg);
  s.items = {2, 2};
  CHECK(atomic_feasible(cfg, s, AtomicAction::pass()));
  CHECK(atomic_feasible(cfg, s, {0, 1}));
  CHECK_FALSE(atomic_feasible(cfg, s, {0, 2}));  // incompatible
  CHECK_FALSE(atomic_feasible(cfg, s, {2, 2}));  // no idle server of type 2

  // No idle servers: only Pass.
  s.n(0, cfg.idle_slot()) = 0;
  s.n(1, cfg.idle_slot()) = 0;
  s.n(0, 0) = 1;
  s.n(2, 1) = 1;
  auto mask = feasible_atomic_mask(cfg, s);
  CHECK(std::accumulate(mask.begin(), mask.end(), 0) == 1);
  CHECK(mask[0] == 1);
}

TEST_CASE("atomic mask matches single-entry schedules") {
  auto cfg = two_server();
  for (const auto& s : brute_force_states(cfg)) {
    auto mask = feasible_atomic_mask(cfg, s);
    for (int code = 1; code < cfg.num_atomic(); ++code) {
      auto act = AtomicAction::decode(code, cfg.num_types);
      Schedule a = zero_schedule(cfg);
      a(act.from, act.to) = 1;
      CHECK(static_cast<bool>(mask[code]) == schedule_feasible(cfg, s, a));
    }
  }
}

TEST_CASE("atomic encoding round trip") {
  for (int J = 1; J <= 4; ++J) {
    for (int code = 0; code <= J * J; ++code) CHECK(AtomicAction::decode(code, J).encode(J) == code);
  }
  CHECK(AtomicAction{0, 1}.encode(3) == 2);
  CHECK(AtomicAction{1, 0}.encode(3) == 4);
}

TEST_CASE("apply_atomic") {
  auto cfg = single_queue(0.5, 1.0, 3, -1.0);
  SystemState s = initial_state(cfg);
  s.items[0] = 1;
  CHECK(apply_atomic(cfg, s, AtomicAction::pass()) == s);
  auto t = apply_atomic(cfg, s, {0, 0});
  CHECK(t.items[0] == 1);
  CHECK(t.n(0, 0) == 1);
  CHECK(t.idle(0) == 0);
  CHECK_THROWS_AS(apply_atomic(cfg, t, {0, 0}), InfeasibleActionError);
}

TEST_CASE("apply_schedule equals folded atomics under every ordering") {
  auto cfg = two_server();
  int checked = 0;
  for (const auto& s : brute_force_states(cfg)) {
    for (const auto& a : feasible_schedules(cfg, s)) {
      const auto post = apply_schedule(cfg, s, a);
      auto seq = atomic_expansion(a);
      std::sort(seq.begin(), seq.end(), [&](auto x, auto y) { return x.encode(3) < y.encode(3); });
      do {
        CHECK(fold_atomic(cfg, s, seq) == post);
        ++checked;
      } while (std::next_permutation(seq.begin(), seq.end(),
                                     [&](auto x, auto y) { return x.encode(3) < y.encode(3); }));
      int total = 0;
      for (int v : post.services) total += v;
      CHECK(total == cfg.num_servers);
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("feasible_schedules matches brute force and is ordered") {
  auto cfg = two_server();
  for (const auto& s : brute_force_states(cfg)) {
    std::vector<Schedule> brute;
    Schedule a = zero_schedule(cfg);
    const int cells = 9;
    std::function<void(int)> rec = [&](int c) {
      if (c == cells) {
        if (schedule_feasible(cfg, s, a)) brute.push_back(a);
        return;
      }
      for (int v = 0; v <= cfg.num_servers; ++v) {
        a.data()[c] = v;
        rec(c + 1);
      }
      a.data()[c] = 0;
    };
    rec(0);
    auto got = feasible_schedules(cfg, s);
    REQUIRE(got.size() == brute.size());
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == brute[k]);
    CHECK(got.front() == zero_schedule(cfg));
  }
}

TEST_CASE("feasibility monotonicity along atomic steps") {
  auto cfg = two_server();
  for (const auto& s : brute_force_states(cfg)) {
    const auto before = feasible_atomic_mask(cfg, s);
    for (int code = 1; code < cfg.num_atomic(); ++code) {
      if (!before[code]) continue;
      const auto t = apply_atomic(cfg, s, AtomicAction::decode(code, 3));
      CHECK(t.total_idle() == s.total_idle() - 1);
      const auto after = feasible_atomic_mask(cfg, t);
      for (int c = 0; c < cfg.num_atomic(); ++c) CHECK((after[c] <= before[c]));
    }
  }
}

TEST_CASE("system update distribution") {
  SUBCASE("degenerate laws give one outcome") {
    auto cfg = two_server();
    cfg.completion = Table<double>::from_rows({{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}});
    cfg.arrivals = {{1.0}, {1.0}};
    SystemState post = initial_state(cfg);
    post.items = {1, 0};
    post.n(0, cfg.idle_slot()) = 0;
    post.n(0, 0) = 1;
    auto out = system_update_distribution(cfg, post);
    REQUIRE(out.size() == 1);
    CHECK(out[0].probability == 1.0);
    CHECK(out[0].state.n(0, 1) == 1);
    CHECK(out[0].state.n(0, 0) == 0);
    CHECK(out[0].state.items == post.items);
  }
  SUBCASE("bernoulli arrivals") {
    auto cfg = single_queue(0.5, 1.0, 3, -1.0);
    auto out = system_update_distribution(cfg, initial_state(cfg));
    REQUIRE(out.size() == 2);
    CHECK(out[0].probability == 0.5);
    CHECK(out[1].probability == 0.5);
    CHECK(out[0].state.items[0] == 0);
    CHECK(out[1].state.items[0] == 1);
  }
  SUBCASE("binomial completions") {
    auto cfg = single_queue(0.0, 0.3, 3, -1.0);
    cfg.num_servers = 2;
    cfg.initial_idle = {2};
    SystemState post = empty_state(cfg);
    post.items[0] = 2;
    post.n(0, 0) = 2;
    auto out = system_update_distribution(cfg, post);
    REQUIRE(out.size() == 3);
    // Sorted ascending: fewer items left first.
    CHECK(out[0].state.items[0] == 0);
    CHECK(out[0].probability == doctest::Approx(0.09).epsilon(1e-14));
    CHECK(out[1].probability == doctest::Approx(0.42).epsilon(1e-14));
    CHECK(out[2].probability == doctest::Approx(0.49).epsilon(1e-14));
    CHECK(out[2].state.n(0, 1) == 2);
  }
  SUBCASE("certain completion empties the queue") {
    auto cfg = single_queue(0.0, 1.0, 3, -1.0);
    SystemState post = empty_state(cfg);
    post.items[0] = 1;
    post.n(0, 0) = 1;
    auto out = system_update_distribution(cfg, post);
    REQUIRE(out.size() == 1);
    CHECK(out[0].state.items[0] == 0);
    CHECK(out[0].state.idle(0) == 1);
  }
  SUBCASE("support guard") {
    auto cfg = two_server();
    CHECK_THROWS_AS(system_update_distribution(cfg, initial_state(cfg), 5), ResourceLimitError);
  }
  SUBCASE("every outcome is valid and mass sums to one") {
    auto cfg = two_server();
    for (const auto& s : brute_force_states(cfg)) {
      for (const auto& a : feasible_schedules(cfg, s)) {
        auto out = system_update_distribution(cfg, apply_schedule(cfg, s, a));
        double total = 0.0;
        for (const auto& o : out) {
          total += o.probability;
          CHECK(state_valid(cfg, o.state));
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("binomial sampling mean") {
  Philox rng(11, make_stream_id(StreamTag::kTest, 0, 0));
  const int draws = 100000;
  double sum = 0.0;
  for (int i = 0; i < draws; ++i) sum += sample_binomial(3, 0.4, rng);
  const double sigma = std::sqrt(3 * 0.4 * 0.6 / draws);
  CHECK(std::abs(sum / draws - 1.2) < 3 * sigma);
}

TEST_CASE("sampled updates stay in the exact support") {
  auto cfg = two_server();
  Philox rng(3, make_stream_id(StreamTag::kTest, 1, 0));
  for (const auto& s : brute_force_states(cfg)) {
    auto dist = system_update_distribution(cfg, s);
    for (int rep = 0; rep < 5; ++rep) {
      auto next = system_update_sample(cfg, s, rng);
      CHECK(std::any_of(dist.begin(), dist.end(), [&](const Outcome& o) { return o.state == next; }));
    }
  }
}

TEST_CASE("server conservation over long random runs") {
  auto cfg = two_server();
  Philox rng(5, make_stream_id(StreamTag::kTest, 2, 0));
  SystemState s = initial_state(cfg);
  bool ok = true;
  for (int step = 0; step < 1000000; ++step) {
    auto mask = feasible_atomic_mask(cfg, s);
    std::vector<int> codes;
    for (int c = 0; c < cfg.num_atomic(); ++c) {
      if (mask[c]) codes.push_back(c);
    }
    const int pick = codes[static_cast<std::size_t>(rng.uniform() * codes.size())];
    if (pick == 0) {
      s = system_update_sample(cfg, s, rng);
    } else {
      s = apply_atomic(cfg, s, AtomicAction::decode(pick, cfg.num_types));
    }
    int total = 0;
    for (int v : s.services) total += v;
    ok = ok && total == cfg.num_servers && state_valid(cfg, s);
  }
  CHECK(ok);
}

TEST_CASE("rewards") {
  auto cfg = single_queue(0.5, 1.0, 3, -1.0, 5.0);
  SystemState s = initial_state(cfg);
  CHECK(schedule_reward(cfg, s, zero_schedule(cfg)) == 0.0);
  s.items[0] = 2;
  CHECK(schedule_reward(cfg, s, zero_schedule(cfg)) == -2.0);
  s.items[0] = 1;
  Schedule a = zero_schedule(cfg);
  a(0, 0) = 1;
  CHECK(schedule_reward(cfg, s, a) == 5.0);

  auto two = two_server();
  two.service_reward = {0.0, -3.0, 1.0};
  CHECK(atomic_reward(two, AtomicAction::pass()) == 0.0);
  CHECK(atomic_reward(two, {0, 1}) == -3.0);

  two.holding_mode = HoldingMode::kAllItems;
  SystemState t = initial_state(two);
  t.items = {2, 1};
  CHECK(holding_reward(two, t) == -2.5);
}

TEST_CASE("reward decomposition over every atomic expansion") {
  auto cfg = two_server();
  for (auto mode : {HoldingMode::kWaitingOnly, HoldingMode::kAllItems}) {
    cfg.holding_mode = mode;
    for (const auto& s : brute_force_states(cfg)) {
      for (const auto& a : feasible_schedules(cfg, s)) {
        const double joint = schedule_reward(cfg, s, a);
        auto seq = atomic_expansion(a);
        auto less = [](AtomicAction x, AtomicAction y) { return x.encode(3) < y.encode(3); };
        do {
          // Pad with Pass to K steps.
          std::vector<AtomicAction> steps(seq);
          while (static_cast<int>(steps.size()) < cfg.num_servers) steps.push_back(AtomicAction::pass());
          double total = 0.0;
          SystemState cur = s;
          for (auto act : steps) {
            total += atomic_reward(cfg, act);
            cur = apply_atomic(cfg, cur, act);
          }
          total += holding_reward(cfg, cur);
          if (std::is_sorted(seq.begin(), seq.end(), less)) {
            CHECK(total == joint);
          } else {
            CHECK(total == doctest::Approx(joint).epsilon(1e-15));
          }
        } while (std::next_permutation(seq.begin(), seq.end(), less));
      }
    }
  }
}
