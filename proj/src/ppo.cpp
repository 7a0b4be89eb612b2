#include "spn/ppo.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "spn/config_io.hpp"
#include "spn/error.hpp"
#include "spn/parallel.hpp"

namespace spn {

void validate_train_config(const TrainConfig& c) {
  auto fail = [](const std::string& what) { throw FormatError("training config: " + what); };
  if (c.iterations < 0) fail("iterations must be nonnegative");
  if (c.trajectories < 1) fail("trajectories must be at least 1");
  if (c.horizon < 1) fail("horizon must be at least 1");
  if (!(c.lambda >= 0.0 && c.lambda < 1.0)) fail("lambda must lie in [0, 1)");
  if (!(c.clip > 0.0 && c.clip < 1.0)) fail("clip must lie in (0, 1)");
  if (c.epochs < 1) fail("epochs must be at least 1");
  if (c.minibatch < 1) fail("minibatch must be at least 1");
  if (!(c.entropy_coef >= 0.0)) fail("entropy_coef must be nonnegative");
  if (!(c.policy_lr > 0.0)) fail("policy_lr must be positive");
  if (!(c.critic_lr > 0.0)) fail("critic_lr must be positive");
  if (c.critic_epochs < 0) fail("critic_epochs must be nonnegative");
  if (!(c.max_grad_norm > 0.0)) fail("max_grad_norm must be positive");
  for (int h : c.hidden) {
    if (h < 1) fail("hidden layer widths must be positive");
  }
  if (c.workers < 1) fail("workers must be at least 1");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  // Worker count is left out: it never changes results.
  return {{"iterations", c.iterations},
          {"trajectories", c.trajectories},
          {"horizon", c.horizon},
          {"lambda", c.lambda},
          {"clip", c.clip},
          {"epochs", c.epochs},
          {"minibatch", c.minibatch},
          {"entropy_coef", c.entropy_coef},
          {"anneal_entropy", c.anneal_entropy},
          {"policy_lr", c.policy_lr},
          {"critic_lr", c.critic_lr},
          {"critic_epochs", c.critic_epochs},
          {"max_grad_norm", c.max_grad_norm},
          {"normalize_advantages", c.normalize_advantages},
          {"hidden", c.hidden},
          {"mode", to_string(c.mode)},
          {"seed", c.seed},
          {"max_decisions", c.max_decisions}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  TrainConfig c;
  if (!doc.is_object()) throw FormatError("training config must be a JSON object");
  try {
    auto get = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("iterations", c.iterations);
    get("trajectories", c.trajectories);
    get("horizon", c.horizon);
    get("lambda", c.lambda);
    get("clip", c.clip);
    get("epochs", c.epochs);
    get("minibatch", c.minibatch);
    get("entropy_coef", c.entropy_coef);
    get("anneal_entropy", c.anneal_entropy);
    get("policy_lr", c.policy_lr);
    get("critic_lr", c.critic_lr);
    get("critic_epochs", c.critic_epochs);
    get("max_grad_norm", c.max_grad_norm);
    get("normalize_advantages", c.normalize_advantages);
    get("hidden", c.hidden);
    get("seed", c.seed);
    get("max_decisions", c.max_decisions);
    if (doc.contains("mode")) c.mode = rollout_mode_from_string(doc.at("mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("training config: ") + e.what());
  }
  validate_train_config(c);
  return c;
}

std::string reports_csv(const std::vector<IterationReport>& reports, std::uint64_t hash, std::uint64_t seed) {
  std::string out = "# config_hash=" + hash_hex(hash) + " seed=" + std::to_string(seed) + "\n";
  out += "iteration,gain,critic_loss,surrogate,adv_mean,adv_max,clip_fraction,entropy\n";
  char line[512];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.gain,
                  r.critic_loss, r.surrogate, r.adv_mean, r.adv_max, r.clip_fraction, r.entropy);
    out += line;
  }
  return out;
}

std::string timing_csv(const std::vector<IterationReport>& reports) {
  std::string out = "iteration,wall_seconds\n";
  char line[128];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%d,%.6f\n", r.iteration, r.wall_seconds);
    out += line;
  }
  return out;
}

namespace {

// Losses below this count as a perfect fit when checking for divergence.
constexpr double kCriticLossFloor = 1e-8;

void check_batch(const Instance& inst, const TrajectoryBatch& b) {
  const auto& cfg = inst.config;
  if (b.K != cfg.num_servers || b.state_dim != feature_dim(cfg) || b.num_atomic != cfg.num_atomic()) {
    throw DimensionError("trajectory batch does not match the network");
  }
}

void set_column(const NetworkConfig& cfg, Eigen::MatrixXd& x, Eigen::Index col, std::span<const int> state, int step) {
  critic_features(cfg, state, step, {x.col(col).data(), static_cast<std::size_t>(x.rows())});
}

}  // namespace

std::vector<double> td_lambda_targets(const Instance& inst, const TrajectoryBatch& b, const Mlp& critic_prev,
                                      double g_bar, double lambda, int workers) {
  check_batch(inst, b);
  const auto& cfg = inst.config;
  const int K = b.K, T = b.T;
  const double share = g_bar / K;
  std::vector<double> targets(static_cast<std::size_t>(b.M) * T * K, 0.0);
  parallel_for(static_cast<std::size_t>(b.M), workers, [&](std::size_t mi) {
    const int m = static_cast<int>(mi);
    Eigen::MatrixXd x(critic_input_dim(cfg), T + 1);
    for (int t = 0; t < T; ++t) set_column(cfg, x, t, b.state(m, t, 0), 1);
    set_column(cfg, x, T, b.next_state(m, T - 1), 1);
    const Eigen::MatrixXd v = critic_prev.forward(x);
    // Corrected reward of a whole time step.
    auto step_return = [&](int t) {
      double r = b.holding[b.time_index(m, t)];
      for (int k = 0; k < K; ++k) r += b.rewards[b.step_index(m, t, k)] - share;
      return r;
    };
    // X_t: lambda-weighted bootstrap from time t + 1 on; the last horizon
    // takes the tail weight.
    double X = v(0, T);
    for (int t = T - 1; t >= 0; --t) {
      if (t < T - 1) X = (1.0 - lambda) * v(0, t + 1) + lambda * (step_return(t + 1) + X);
      double partial = b.holding[b.time_index(m, t)];
      const int steps = b.steps[b.time_index(m, t)];
      for (int k = K - 1; k >= 0; --k) {
        partial += b.rewards[b.step_index(m, t, k)] - share;
        if (k < steps) {
          const double target = partial + X;
          if (!std::isfinite(target)) {
            throw StructuralError("non-finite TD target at trajectory " + std::to_string(m) + ", time " +
                                  std::to_string(t) + ", step " + std::to_string(k + 1));
          }
          targets[b.step_index(m, t, k)] = target;
        }
      }
    }
  });
  return targets;
}

std::vector<double> compute_advantages(const Instance& inst, const TrajectoryBatch& b, const Mlp& critic, double g_bar,
                                       int workers) {
  check_batch(inst, b);
  const auto& cfg = inst.config;
  const int K = b.K, T = b.T;
  const double share = g_bar / K;
  std::vector<double> adv(static_cast<std::size_t>(b.M) * T * K, 0.0);
  parallel_for(static_cast<std::size_t>(b.M), workers, [&](std::size_t mi) {
    const int m = static_cast<int>(mi);
    int decisions = 0;
    for (int t = 0; t < T; ++t) decisions += b.steps[b.time_index(m, t)];
    // Columns: every decision state at its step, then the first state of each
    // following time step.
    Eigen::MatrixXd x(critic_input_dim(cfg), decisions + T);
    int col = 0;
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k < b.steps[b.time_index(m, t)]; ++k) set_column(cfg, x, col++, b.state(m, t, k), k + 1);
    }
    for (int t = 0; t < T; ++t) set_column(cfg, x, decisions + t, b.next_state(m, t), 1);
    const Eigen::MatrixXd v = critic.forward(x);
    col = 0;
    for (int t = 0; t < T; ++t) {
      const int steps = b.steps[b.time_index(m, t)];
      for (int k = 0; k < steps; ++k, ++col) {
        double a = b.rewards[b.step_index(m, t, k)] - share - v(0, col);
        if (k + 1 < steps) {
          a += v(0, col + 1);
        } else {
          // Steps left unused after an early Pass still carry their share of
          // the gain.
          a += b.holding[b.time_index(m, t)] + v(0, decisions + t) - (K - 1 - k) * share;
        }
        if (!std::isfinite(a)) {
          throw StructuralError("non-finite advantage at trajectory " + std::to_string(m) + ", time " +
                                std::to_string(t) + ", step " + std::to_string(k + 1));
        }
        adv[b.step_index(m, t, k)] = a;
      }
    }
  });
  return adv;
}

std::vector<std::size_t> decision_slots(const TrajectoryBatch& b) {
  std::vector<std::size_t> slots;
  for (int m = 0; m < b.M; ++m) {
    for (int t = 0; t < b.T; ++t) {
      for (int k = 0; k < b.steps[b.time_index(m, t)]; ++k) slots.push_back(b.step_index(m, t, k));
    }
  }
  return slots;
}

void normalize_advantages(std::vector<double>& adv, std::span<const std::size_t> slots) {
  if (slots.empty()) return;
  double mean = 0.0;
  for (auto s : slots) mean += adv[s];
  mean /= static_cast<double>(slots.size());
  double var = 0.0;
  for (auto s : slots) var += (adv[s] - mean) * (adv[s] - mean);
  const double sd = std::sqrt(var / static_cast<double>(slots.size()));
  for (auto s : slots) adv[s] = (adv[s] - mean) / (sd + 1e-8);
}

Eigen::MatrixXd critic_inputs(const Instance& inst, const TrajectoryBatch& b, std::span<const std::size_t> slots) {
  check_batch(inst, b);
  Eigen::MatrixXd x(critic_input_dim(inst.config), static_cast<Eigen::Index>(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto mt = slots[i] / b.K;
    const int k = static_cast<int>(slots[i] % b.K);
    const int m = static_cast<int>(mt / b.T), t = static_cast<int>(mt % b.T);
    set_column(inst.config, x, static_cast<Eigen::Index>(i), b.state(m, t, k), k + 1);
  }
  return x;
}

PolicySamples policy_samples(const Instance& inst, const TrajectoryBatch& b, std::span<const std::size_t> slots,
                             std::span<const double> adv) {
  check_batch(inst, b);
  const auto& cfg = inst.config;
  PolicySamples s;
  s.num_atomic = b.num_atomic;
  s.x.resize(feature_dim(cfg), static_cast<Eigen::Index>(slots.size()));
  s.masks.resize(slots.size() * b.num_atomic);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto mt = slots[i] / b.K;
    const int k = static_cast<int>(slots[i] % b.K);
    const int m = static_cast<int>(mt / b.T), t = static_cast<int>(mt % b.T);
    state_features(cfg, b.state(m, t, k), {s.x.col(static_cast<Eigen::Index>(i)).data(), static_cast<std::size_t>(s.x.rows())});
    const auto mask = b.mask(m, t, k);
    std::copy(mask.begin(), mask.end(), s.masks.begin() + i * b.num_atomic);
    s.actions.push_back(b.actions[slots[i]]);
    s.old_log_probs.push_back(b.log_probs[slots[i]]);
    s.advantages.push_back(adv[slots[i]]);
  }
  return s;
}

namespace {

void shuffle(std::vector<int>& perm, Philox& rng) {
  for (int i = static_cast<int>(perm.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform() * (i + 1));
    std::swap(perm[i], perm[j]);
  }
}

PolicySamples subset(const PolicySamples& s, std::span<const int> idx) {
  PolicySamples out;
  out.num_atomic = s.num_atomic;
  out.x = s.x(Eigen::all, std::vector<int>(idx.begin(), idx.end()));
  out.masks.reserve(idx.size() * s.num_atomic);
  for (int i : idx) {
    out.masks.insert(out.masks.end(), s.masks.begin() + static_cast<std::size_t>(i) * s.num_atomic,
                     s.masks.begin() + static_cast<std::size_t>(i + 1) * s.num_atomic);
    out.actions.push_back(s.actions[i]);
    out.old_log_probs.push_back(s.old_log_probs[i]);
    out.advantages.push_back(s.advantages[i]);
  }
  return out;
}

}  // namespace

CriticFit fit_critic(const Eigen::MatrixXd& inputs, std::span<const double> targets, Mlp& critic, Adam& opt,
                     const FitOptions& opts, Philox& rng) {
  CriticFit fit;
  const int n = static_cast<int>(targets.size());
  fit.initial_loss = fit.final_loss = critic_loss(critic, inputs, targets);
  if (n == 0) return fit;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> grad(critic.num_params());
  std::vector<double> sub_targets;
  int bad = 0;
  for (int e = 0; e < opts.epochs; ++e) {
    shuffle(perm, rng);
    for (int start = 0; start < n; start += opts.minibatch) {
      const int end = std::min(n, start + opts.minibatch);
      const std::vector<int> idx(perm.begin() + start, perm.begin() + end);
      sub_targets.clear();
      for (int i : idx) sub_targets.push_back(targets[i]);
      const Eigen::MatrixXd x = inputs(Eigen::all, idx);
      std::fill(grad.begin(), grad.end(), 0.0);
      critic_loss(critic, x, sub_targets, grad);
      clip_grad_norm(grad, opts.max_grad_norm);
      opt.step(critic.params(), grad, false);
    }
    const double loss = critic_loss(critic, inputs, targets);
    fit.epoch_losses.push_back(loss);
    fit.final_loss = loss;
    const bool worse = !std::isfinite(loss) || loss > 10.0 * std::max(fit.initial_loss, kCriticLossFloor);
    bad = worse ? bad + 1 : 0;
    if (bad >= 3) {
      throw ConvergenceError("critic fit diverged: loss " + std::to_string(loss) + " after epoch " +
                                 std::to_string(e + 1) + " against initial loss " + std::to_string(fit.initial_loss),
                             loss);
    }
  }
  return fit;
}

SurrogateValue ppo_update(const PolicySamples& samples, Mlp& policy, Adam& opt, const PpoOptions& opts, Philox& rng) {
  const int n = samples.size();
  if (n == 0) return {};
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> grad(policy.num_params());
  for (int e = 0; e < opts.epochs; ++e) {
    shuffle(perm, rng);
    for (int start = 0; start < n; start += opts.minibatch) {
      const int end = std::min(n, start + opts.minibatch);
      const auto sub = subset(samples, std::span<const int>(perm.data() + start, end - start));
      std::fill(grad.begin(), grad.end(), 0.0);
      surrogate_objective(policy, sub, opts.clip, opts.entropy_coef, grad);
      clip_grad_norm(grad, opts.max_grad_norm);
      opt.step(policy.params(), grad, true);
    }
  }
  return surrogate_objective(policy, samples, opts.clip, opts.entropy_coef);
}

Checkpoint initial_checkpoint(const Instance& inst, const TrainConfig& cfg) {
  Checkpoint ck;
  ck.config_hash = config_hash(inst);
  ck.seed = cfg.seed;
  Philox rng(cfg.seed, make_stream_id(StreamTag::kInit, 0, 0));
  ck.policy = make_policy_net(inst.config, cfg.hidden, rng);
  ck.critic = make_critic_net(inst.config, cfg.hidden, rng);
  ck.policy_opt.lr = cfg.policy_lr;
  ck.critic_opt.lr = cfg.critic_lr;
  return ck;
}

TrainResult train(const Instance& inst, const TrainConfig& cfg, const IterationHook& hook) {
  validate_train_config(cfg);
  const auto problems = validate_instance(inst);
  if (!problems.empty()) throw DimensionError("invalid network: " + problems.front().detail);
  const std::size_t decisions = static_cast<std::size_t>(cfg.trajectories) * cfg.horizon * inst.config.num_servers;
  if (decisions > cfg.max_decisions) {
    throw ResourceLimitError("a batch of " + std::to_string(decisions) + " decision slots exceeds the limit of " +
                             std::to_string(cfg.max_decisions) + "; reduce trajectories or horizon");
  }
  TrainResult res;
  res.checkpoint = initial_checkpoint(inst, cfg);
  auto& ck = res.checkpoint;
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    const NetPolicy behavior(inst.config, ck.policy);
    RolloutOptions ro;
    ro.mode = cfg.mode;
    ro.M = cfg.trajectories;
    ro.T = cfg.horizon;
    ro.seeds = {cfg.seed, static_cast<std::uint32_t>(it)};
    ro.workers = cfg.workers;
    const auto batch = rollout(inst, behavior, ro);
    const double g_bar = empirical_gain(batch);
    const auto slots = decision_slots(batch);

    const auto targets_full = td_lambda_targets(inst, batch, ck.critic, g_bar, cfg.lambda, cfg.workers);
    std::vector<double> targets;
    targets.reserve(slots.size());
    for (auto s : slots) targets.push_back(targets_full[s]);
    Philox critic_rng(cfg.seed, make_stream_id(StreamTag::kShuffle, static_cast<std::uint32_t>(it), 0));
    const auto fit = fit_critic(critic_inputs(inst, batch, slots), targets, ck.critic, ck.critic_opt,
                                {cfg.critic_epochs, cfg.minibatch, cfg.max_grad_norm}, critic_rng);

    auto adv = compute_advantages(inst, batch, ck.critic, g_bar, cfg.workers);
    IterationReport rep;
    rep.iteration = it;
    rep.gain = g_bar;
    rep.critic_loss = fit.final_loss;
    if (!slots.empty()) {
      rep.adv_max = adv[slots.front()];
      for (auto s : slots) {
        rep.adv_mean += adv[s];
        rep.adv_max = std::max(rep.adv_max, adv[s]);
      }
      rep.adv_mean /= static_cast<double>(slots.size());
    }
    if (cfg.normalize_advantages) normalize_advantages(adv, slots);

    PpoOptions po;
    po.clip = cfg.clip;
    po.epochs = cfg.epochs;
    po.minibatch = cfg.minibatch;
    po.entropy_coef = cfg.anneal_entropy
                          ? cfg.entropy_coef * (1.0 - static_cast<double>(it) / cfg.iterations)
                          : cfg.entropy_coef;
    po.max_grad_norm = cfg.max_grad_norm;
    Philox policy_rng(cfg.seed, make_stream_id(StreamTag::kShuffle, static_cast<std::uint32_t>(it), 1));
    const auto upd = ppo_update(policy_samples(inst, batch, slots, adv), ck.policy, ck.policy_opt, po, policy_rng);
    rep.surrogate = upd.surrogate;
    rep.clip_fraction = upd.clip_fraction;
    rep.entropy = upd.entropy;
    ck.iteration = static_cast<std::uint32_t>(it + 1);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.reports.push_back(rep);
    if (hook) hook(rep, ck);
  }
  return res;
}

}  // namespace spn
