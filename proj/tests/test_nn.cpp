#include <cstring>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "spn/config_io.hpp"
#include "spn/error.hpp"
#include "spn/nn.hpp"
#include "spn/scenarios.hpp"
#include "spn/solvers.hpp"
#include "test_util.hpp"

using namespace spn;
using spn::testing::finite_difference_check;
using spn::testing::random_policy_batch;
using spn::testing::single_queue;
using spn::testing::two_server;

namespace {

Philox test_rng(std::uint32_t id) { return Philox(2024, make_stream_id(StreamTag::kTest, 100, id)); }

std::vector<double> probs_at(const Mlp& net, const NetworkConfig& cfg, const SystemState& s,
                             const std::vector<std::uint8_t>& mask) {
  std::vector<double> p(cfg.num_atomic());
  policy_forward(net, cfg, s, mask, p);
  return p;
}

}  // namespace

TEST_CASE("zero parameters give a uniform policy and a zero critic") {
  const auto cfg = two_server();
  const Mlp policy({feature_dim(cfg), 8, 8, cfg.num_atomic()});
  const Mlp critic({critic_input_dim(cfg), 8, 8, 1});
  const auto idx = enumerate_states(cfg);
  for (const auto& s : idx.states()) {
    const std::vector<std::uint8_t> all(cfg.num_atomic(), 1);
    for (double p : probs_at(policy, cfg, s, all)) CHECK(p == doctest::Approx(1.0 / cfg.num_atomic()));
    for (int k = 1; k <= cfg.num_servers; ++k) CHECK(critic_forward(critic, cfg, s, k) == 0.0);
  }
  CHECK_THROWS_AS(critic_forward(critic, cfg, idx.state(0), 0), DimensionError);
  CHECK_THROWS_AS(critic_forward(critic, cfg, idx.state(0), 3), DimensionError);
}

TEST_CASE("masking") {
  const auto cfg = two_server();
  auto rng = test_rng(1);
  const auto net = Mlp::orthogonal({feature_dim(cfg), 16, 16, cfg.num_atomic()}, 1.0, rng);
  const auto s = initial_state(cfg);

  SUBCASE("only Pass left") {
    std::vector<std::uint8_t> mask(cfg.num_atomic(), 0);
    mask[0] = 1;
    const auto p = probs_at(net, cfg, s, mask);
    CHECK(p[0] == 1.0);
    CHECK(std::accumulate(p.begin() + 1, p.end(), 0.0) == 0.0);
  }
  SUBCASE("empty mask") {
    std::vector<std::uint8_t> mask(cfg.num_atomic(), 0);
    std::vector<double> p(cfg.num_atomic());
    CHECK_THROWS_AS(policy_forward(net, cfg, s, mask, p), StructuralError);
  }
  SUBCASE("masked logits do not matter") {
    std::vector<double> logits(cfg.num_atomic()), a(cfg.num_atomic()), b(cfg.num_atomic());
    std::vector<std::uint8_t> mask(cfg.num_atomic());
    for (int rep = 0; rep < 1000; ++rep) {
      for (int c = 0; c < cfg.num_atomic(); ++c) {
        logits[c] = 5.0 * rng.normal();
        mask[c] = c == 0 || rng.uniform() < 0.5;
      }
      masked_softmax(logits, mask, a);
      for (int c = 0; c < cfg.num_atomic(); ++c) {
        if (!mask[c]) logits[c] = 100.0 * rng.normal();
      }
      masked_softmax(logits, mask, b);
      CHECK(a == b);
    }
  }
}

TEST_CASE("probabilities sum to one") {
  const auto inst = make_instance(scenario_preset("hospital2"));
  const auto& cfg = inst.config;
  const auto idx = enumerate_states(cfg, inst.extra);
  auto rng = test_rng(2);
  double worst = 0.0;
  int masked_mass = 0;
  Mlp net;
  for (int rep = 0; rep < 10000; ++rep) {
    // Fresh parameters every 100 draws.
    if (rep % 100 == 0) net = Mlp::orthogonal({feature_dim(cfg), 16, 16, cfg.num_atomic()}, 3.0, rng);
    const auto& s = idx.state(static_cast<int>(rng.uniform() * idx.size()));
    const auto mask = feasible_atomic_mask(cfg, s, inst.extra);
    const auto p = probs_at(net, cfg, s, mask);
    worst = std::max(worst, std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0));
    for (int c = 0; c < cfg.num_atomic(); ++c) masked_mass += !mask[c] && p[c] != 0.0;
  }
  CHECK(worst <= 1e-12);
  CHECK(masked_mass == 0);
}

TEST_CASE("policy input width does not depend on the number of servers") {
  auto cfg = two_server();
  const int dim = feature_dim(cfg);
  for (int K : {1, 2, 5, 10}) {
    cfg.num_servers = K;
    cfg.initial_idle = {K, 0, 0};
    CHECK(validate_config(cfg).empty());
    CHECK(feature_dim(cfg) == dim);
    CHECK(critic_input_dim(cfg) == dim + K);
    auto rng = test_rng(3);
    CHECK(make_policy_net(cfg, {64, 64}, rng).input_dim() == dim);
  }
}

TEST_CASE("critic output is deterministic") {
  const auto cfg = two_server();
  auto rng = test_rng(4);
  const auto critic = make_critic_net(cfg, {32, 32}, rng);
  const auto idx = enumerate_states(cfg);
  for (const auto& s : idx.states()) {
    const double a = critic_forward(critic, cfg, s, 2);
    const double b = critic_forward(critic, cfg, s, 2);
    CHECK(std::isfinite(a));
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
  }
}

TEST_CASE("sampling") {
  auto rng = test_rng(5);
  SUBCASE("single feasible entry") {
    const std::vector<double> p{0.0, 0.0, 1.0, 0.0, 0.0};
    const auto s = sample_action(p, 2, rng);
    CHECK(s.code == 2);
    CHECK(s.action == AtomicAction{0, 1});
    CHECK(s.log_prob == 0.0);
  }
  SUBCASE("frequencies") {
    const std::vector<double> p{0.1, 0.0, 0.25, 0.4, 0.25};
    const int N = 100000;
    std::vector<int> count(p.size(), 0);
    for (int i = 0; i < N; ++i) {
      const auto s = sample_action(p, 2, rng);
      ++count[s.code];
      CHECK(s.log_prob == std::log(p[s.code]));
    }
    CHECK(count[1] == 0);
    for (std::size_t c = 0; c < p.size(); ++c) {
      CHECK(std::abs(count[c] / double(N) - p[c]) <= 4.0 * std::sqrt(p[c] * (1 - p[c]) / N));
    }
  }
}

TEST_CASE("orthogonal initialization") {
  auto rng = test_rng(6);
  const auto net = Mlp::orthogonal({5, 8, 8, 3}, 0.5, rng);
  const auto p = net.params();
  // First layer: 8 x 5 with orthonormal columns scaled by sqrt(2).
  Eigen::Map<const Eigen::MatrixXd> w(p.data(), 8, 5);
  const Eigen::MatrixXd gram = w.transpose() * w;
  CHECK((gram - 2.0 * Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
  // Output layer: 3 x 8 with orthonormal rows scaled by 0.5.
  const std::size_t off = 8 * 5 + 8 + 8 * 8 + 8;
  Eigen::Map<const Eigen::MatrixXd> wo(p.data() + off, 3, 8);
  const Eigen::MatrixXd rows = wo * wo.transpose();
  CHECK((rows - 0.25 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(net.num_params() == off + 3 * 8 + 3);
}

TEST_CASE("surrogate gradient matches finite differences") {
  const auto inst = make_instance(scenario_preset("switch2"));
  const auto idx = enumerate_states(inst.config, inst.extra);
  auto rng = test_rng(7);
  for (double gain : {1e-2, 1.0}) {
    auto net = Mlp::orthogonal({feature_dim(inst.config), 32, 32, inst.config.num_atomic()}, gain, rng);
    const auto batch = random_policy_batch(inst, idx, net, 256, 0.2, rng);
    std::vector<double> grad(net.num_params(), 0.0);
    surrogate_objective(net, batch, 0.2, 0.01, grad);
    const auto res = finite_difference_check(net.params(), grad,
                                             [&] { return surrogate_objective(net, batch, 0.2, 0.01).objective; },
                                             1000, rng);
    CAPTURE(gain);
    CAPTURE(res.worst);
    CHECK(res.max_rel_error <= 1e-4);
  }
}

TEST_CASE("critic gradient matches finite differences") {
  const auto cfg = two_server();
  auto rng = test_rng(8);
  auto net = Mlp::orthogonal({critic_input_dim(cfg), 32, 32, 1}, 1.0, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(critic_input_dim(cfg), 300, [&] { return rng.uniform(); });
  std::vector<double> targets(300);
  for (double& t : targets) t = 3.0 * rng.normal();
  std::vector<double> grad(net.num_params(), 0.0);
  critic_loss(net, x, targets, grad);
  const auto res =
      finite_difference_check(net.params(), grad, [&] { return critic_loss(net, x, targets); }, 1000, rng);
  CAPTURE(res.worst);
  CHECK(res.max_rel_error <= 1e-4);
}

TEST_CASE("surrogate gradient special cases") {
  const auto inst = make_instance(scenario_preset("switch2"));
  const auto idx = enumerate_states(inst.config, inst.extra);
  auto rng = test_rng(9);
  auto net = Mlp::orthogonal({feature_dim(inst.config), 16, 16, inst.config.num_atomic()}, 1.0, rng);
  auto batch = random_policy_batch(inst, idx, net, 64, 0.2, rng);

  SUBCASE("zero advantages and no entropy give a zero gradient") {
    std::fill(batch.advantages.begin(), batch.advantages.end(), 0.0);
    std::vector<double> grad(net.num_params(), 0.0);
    const auto v = surrogate_objective(net, batch, 0.2, 0.0, grad);
    CHECK(v.objective == 0.0);
    CHECK(std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; }));
  }
  SUBCASE("clipped samples with positive advantage contribute nothing") {
    PolicySamples one = batch;
    std::vector<double> base(net.num_params(), 0.0), grad(net.num_params(), 0.0);
    // Ratio 1.5 > 1 + clip.
    for (int i = 0; i < one.size(); ++i) {
      one.advantages[i] = 1.0;
      one.old_log_probs[i] = batch.old_log_probs[i];
    }
    Mlp::Tape tape;
    const Eigen::MatrixXd logits = net.forward(one.x);
    std::vector<double> p(one.num_atomic);
    for (int i = 0; i < one.size(); ++i) {
      masked_softmax({logits.col(i).data(), static_cast<std::size_t>(one.num_atomic)},
                     {one.masks.data() + static_cast<std::size_t>(i) * one.num_atomic,
                      static_cast<std::size_t>(one.num_atomic)},
                     p);
      one.old_log_probs[i] = std::log(p[one.actions[i]]) - std::log(1.5);
    }
    const auto v = surrogate_objective(net, one, 0.2, 0.0, grad);
    CHECK(v.clip_fraction == 1.0);
    CHECK(v.surrogate == doctest::Approx(1.2));
    CHECK(std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; }));
  }
  SUBCASE("gradients are bit-identical across calls") {
    std::vector<double> a(net.num_params(), 0.0), b(net.num_params(), 0.0);
    surrogate_objective(net, batch, 0.2, 0.01, a);
    surrogate_objective(net, batch, 0.2, 0.01, b);
    CHECK(a == b);
  }
  SUBCASE("zero old probability is reported") {
    batch.old_log_probs[3] = -std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(surrogate_objective(net, batch, 0.2, 0.0), StructuralError);
  }
}

TEST_CASE("non-finite activations name the layer") {
  auto rng = test_rng(10);
  auto net = Mlp::orthogonal({3, 4, 2}, 1.0, rng);
  net.params()[3 * 4 + 4 + 1] = std::numeric_limits<double>::quiet_NaN();
  try {
    net.forward(Eigen::MatrixXd::Ones(3, 2));
    FAIL("expected StructuralError");
  } catch (const StructuralError& e) {
    CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
  }
}

TEST_CASE("critic regression reaches the exact M1 relative values") {
  const Instance inst{single_queue(0.5, 1.0, 3, -1.0), {}};
  const auto& cfg = inst.config;
  const auto idx = enumerate_states(cfg);
  const auto k = build_kernels(cfg, idx);
  const auto r = build_rewards(cfg, idx, k);
  const auto exact = solve_atomic_step_dependent(k, r, 1);
  const auto& h = exact.step_values[0];
  const double span = *std::max_element(h.begin(), h.end()) - *std::min_element(h.begin(), h.end());
  REQUIRE(span > 1.0);

  Eigen::MatrixXd x(critic_input_dim(cfg), idx.size());
  for (int s = 0; s < idx.size(); ++s) {
    critic_features(cfg, idx.state(s).flatten(), 1, {x.col(s).data(), static_cast<std::size_t>(x.rows())});
  }
  auto rng = test_rng(11);
  auto critic = make_critic_net(cfg, {64, 64}, rng);
  Adam opt;
  opt.lr = 1e-3;
  std::vector<double> grad(critic.num_params());
  for (int it = 0; it < 5000; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    critic_loss(critic, x, h, grad);
    opt.step(critic.params(), grad, false);
  }
  double worst = 0.0;
  for (int s = 0; s < idx.size(); ++s) worst = std::max(worst, std::abs(critic_forward(critic, cfg, idx.state(s), 1) - h[s]));
  CHECK(worst <= 0.05 * span);
}

TEST_CASE("adam minimizes a quadratic") {
  std::vector<double> x{3.0, -2.0};
  Adam opt;
  opt.lr = 0.05;
  for (int it = 0; it < 2000; ++it) {
    const std::vector<double> g{2.0 * (x[0] - 1.0), 4.0 * (x[1] + 0.5)};
    opt.step(x, g, false);
  }
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(x[1] == doctest::Approx(-0.5).epsilon(1e-3));
  std::vector<double> g{3.0, 4.0};
  CHECK(clip_grad_norm(g, 0.5) == doctest::Approx(5.0));
  CHECK(g[0] == doctest::Approx(0.3));
  CHECK(g[1] == doctest::Approx(0.4));
}

TEST_CASE("checkpoint round trip") {
  const auto inst = make_instance(scenario_preset("switch2"));
  TrainConfig tc;
  tc.seed = 42;
  tc.hidden = {16, 16};
  auto ck = initial_checkpoint(inst, tc);
  std::vector<double> g(ck.policy.num_params(), 0.01);
  ck.policy_opt.step(ck.policy.params(), g, true);
  ck.iteration = 3;

  const auto path = (std::filesystem::temp_directory_path() / "spn_checkpoint_test.bin").string();
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  CHECK(back == ck);
  CHECK(checkpoint_bytes(back) == read_file(path));

  const auto s = initial_state(inst.config);
  const auto mask = feasible_atomic_mask(inst.config, s, inst.extra);
  CHECK(probs_at(back.policy, inst.config, s, mask) == probs_at(ck.policy, inst.config, s, mask));

  const auto manifest = checkpoint_manifest(ck);
  CHECK(manifest.find("config_hash=" + hash_hex(config_hash(inst))) != std::string::npos);
  CHECK(manifest.find("iteration=3") != std::string::npos);

  auto bytes = read_file(path);
  CHECK_THROWS_AS(checkpoint_from_bytes(bytes.substr(0, bytes.size() - 5)), FormatError);
  bytes[0] = 'X';
  CHECK_THROWS_AS(checkpoint_from_bytes(bytes), FormatError);
  std::filesystem::remove(path);
}
