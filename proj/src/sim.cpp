#include "spn/sim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "spn/config_io.hpp"
#include "spn/error.hpp"
#include "spn/parallel.hpp"

namespace spn {

TablePolicy::TablePolicy(const StateIndex& idx, std::vector<std::vector<int>> codes, std::string name)
    : idx_(idx), codes_(std::move(codes)), name_(std::move(name)) {
  if (codes_.empty()) throw DimensionError("table policy needs at least one table");
  for (const auto& t : codes_) {
    if (static_cast<int>(t.size()) != idx_.size()) throw DimensionError("table policy size does not match the state index");
  }
}

void TablePolicy::distribution(const SystemState& state, int step, std::span<const std::uint8_t>,
                               std::span<double> probs) const {
  const auto& table = codes_[codes_.size() > 1 ? static_cast<std::size_t>(step - 1) : 0];
  std::fill(probs.begin(), probs.end(), 0.0);
  probs[table[idx_.at(state)]] = 1.0;
}

namespace {

int argmax_feasible(std::span<const double> probs, std::span<const std::uint8_t> mask) {
  int best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c) {
    if (mask[c] && probs[c] > probs[best]) best = static_cast<int>(c);
  }
  return best;
}

}  // namespace

void ArgmaxPolicy::distribution(const SystemState& state, int step, std::span<const std::uint8_t> mask,
                                std::span<double> probs) const {
  base_.distribution(state, step, mask, probs);
  const int best = argmax_feasible(probs, mask);
  std::fill(probs.begin(), probs.end(), 0.0);
  probs[best] = 1.0;
}

AtomicPolicyTable tabulate_policy(const AtomicPolicy& policy, const Instance& inst, const StateIndex& idx,
                                  int num_steps, bool greedy) {
  const auto& cfg = inst.config;
  const int A = cfg.num_atomic();
  AtomicPolicyTable out;
  out.num_atomic = A;
  std::vector<double> probs(A);
  for (int step = 1; step <= num_steps; ++step) {
    std::vector<double> table(static_cast<std::size_t>(idx.size()) * A, 0.0);
    for (int s = 0; s < idx.size(); ++s) {
      const auto mask = feasible_atomic_mask(cfg, idx.state(s), inst.extra);
      policy.distribution(idx.state(s), step, mask, probs);
      double* row = table.data() + static_cast<std::size_t>(s) * A;
      if (greedy) {
        row[argmax_feasible(probs, mask)] = 1.0;
      } else {
        std::copy(probs.begin(), probs.end(), row);
      }
    }
    out.probs.push_back(std::move(table));
  }
  return out;
}

std::vector<int> greedy_codes(const AtomicPolicyTable& table, int step) {
  const auto& t = table.probs.at(step);
  const std::size_t n = t.size() / table.num_atomic;
  std::vector<int> codes(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    const double* row = t.data() + s * table.num_atomic;
    int best = 0;
    for (int c = 1; c < table.num_atomic; ++c) {
      if (row[c] > row[best]) best = c;
    }
    codes[s] = best;
  }
  return codes;
}

std::string to_string(RolloutMode mode) { return mode == RolloutMode::kKStep ? "k-step" : "passing-last"; }

RolloutMode rollout_mode_from_string(const std::string& text) {
  if (text == "k-step") return RolloutMode::kKStep;
  if (text == "passing-last") return RolloutMode::kPassingLast;
  throw FormatError("unknown rollout mode '" + text + "'");
}

std::uint64_t SeedSpec::dynamics_stream(std::uint32_t m) const { return make_stream_id(StreamTag::kDynamics, round, m); }
std::uint64_t SeedSpec::action_stream(std::uint32_t m) const { return make_stream_id(StreamTag::kActions, round, m); }

double TrajectoryBatch::step_reward(int m, int t) const {
  double total = 0.0;
  const auto base = step_index(m, t, 0);
  for (int k = 0; k < steps[time_index(m, t)]; ++k) total += rewards[base + k];
  return total + holding[time_index(m, t)];
}

TrajectoryBatch rollout(const Instance& inst, const AtomicPolicy& policy, const RolloutOptions& opts) {
  const auto& cfg = inst.config;
  if (opts.M < 1 || opts.T < 1) throw DimensionError("rollout needs M >= 1 and T >= 1");
  const int K = cfg.num_servers;
  const int A = cfg.num_atomic();
  const int D = cfg.num_classes + cfg.num_types * cfg.slots();
  SystemState start = opts.initial.empty() ? initial_state(cfg) : SystemState::unflatten(cfg, opts.initial);
  if (!state_valid(cfg, start, inst.extra)) throw DimensionError("rollout start state violates the invariants");

  TrajectoryBatch b;
  b.M = opts.M;
  b.T = opts.T;
  b.K = K;
  b.state_dim = D;
  b.num_atomic = A;
  b.mode = opts.mode;
  b.config_hash = config_hash(inst);
  b.seeds = opts.seeds;
  const std::size_t MT = static_cast<std::size_t>(opts.M) * opts.T;
  b.states.assign(MT * (K + 1) * D, 0);
  b.actions.assign(MT * K, -1);
  b.rewards.assign(MT * K, 0.0);
  b.holding.assign(MT, 0.0);
  b.log_probs.assign(MT * K, 0.0);
  b.masks.assign(MT * K * A, 0);
  b.steps.assign(MT, 0);
  b.final_states.assign(static_cast<std::size_t>(opts.M) * D, 0);

  parallel_for(static_cast<std::size_t>(opts.M), opts.workers, [&](std::size_t mi) {
    const int m = static_cast<int>(mi);
    Philox dyn(opts.seeds.master, opts.seeds.dynamics_stream(m));
    Philox act(opts.seeds.master, opts.seeds.action_stream(m));
    std::vector<double> probs(A);
    SystemState s = start;
    auto store = [&](int t, int k, const SystemState& st) {
      int* dst = b.states.data() + (b.time_index(m, t) * (K + 1) + k) * D;
      std::copy(st.items.begin(), st.items.end(), dst);
      std::copy(st.services.begin(), st.services.end(), dst + cfg.num_classes);
    };
    for (int t = 0; t < opts.T; ++t) {
      store(t, 0, s);
      int k = 0;
      for (; k < K; ++k) {
        const auto mask = feasible_atomic_mask(cfg, s, inst.extra);
        std::fill(probs.begin(), probs.end(), 0.0);
        policy.distribution(s, k + 1, mask, probs);
        double bad = 0.0;
        for (int c = 0; c < A; ++c) {
          if (!mask[c]) bad += probs[c];
        }
        if (bad > 1e-12) {
          throw InfeasibleActionError(policy.name() + " put mass " + std::to_string(bad) + " on infeasible actions at " +
                                      format_state(s));
        }
        const double u = act.uniform();
        double acc = 0.0;
        int code = -1;
        for (int c = 0; c < A; ++c) {
          if (!mask[c] || probs[c] <= 0.0) continue;
          acc += probs[c];
          code = c;
          if (u < acc) break;
        }
        if (code < 0) throw StructuralError(policy.name() + " returned an empty distribution at " + format_state(s));
        const auto idx = b.step_index(m, t, k);
        std::copy(mask.begin(), mask.end(), b.masks.begin() + idx * A);
        b.actions[idx] = code;
        b.log_probs[idx] = std::log(probs[code]);
        const auto a = AtomicAction::decode(code, cfg.num_types);
        b.rewards[idx] = atomic_reward(cfg, a);
        s = apply_atomic(cfg, s, a, inst.extra);
        store(t, k + 1, s);
        if (code == 0 && opts.mode == RolloutMode::kPassingLast) {
          ++k;
          break;
        }
      }
      b.steps[b.time_index(m, t)] = k;
      for (int rest = k + 1; rest <= K; ++rest) store(t, rest, s);
      b.holding[b.time_index(m, t)] = holding_reward(cfg, s);
      s = system_update_sample(cfg, s, dyn);
    }
    std::copy(s.items.begin(), s.items.end(), b.final_states.begin() + mi * D);
    std::copy(s.services.begin(), s.services.end(), b.final_states.begin() + mi * D + cfg.num_classes);
  });
  return b;
}

std::vector<double> trajectory_gains(const TrajectoryBatch& b) {
  std::vector<double> g(b.M, 0.0);
  for (int m = 0; m < b.M; ++m) {
    double total = 0.0;
    for (int t = 0; t < b.T; ++t) total += b.step_reward(m, t);
    g[m] = total / b.T;
  }
  return g;
}

double empirical_gain(const TrajectoryBatch& b) {
  if (b.M < 1 || b.T < 1) throw DimensionError("empty batch");
  double total = 0.0;
  for (int m = 0; m < b.M; ++m) {
    for (int t = 0; t < b.T; ++t) total += b.step_reward(m, t);
  }
  return total / (static_cast<double>(b.M) * b.T);
}

GainEstimate gain_estimate(const TrajectoryBatch& b) {
  GainEstimate est;
  est.mean = empirical_gain(b);
  std::vector<double> groups;
  if (b.M > 1) {
    groups = trajectory_gains(b);
  } else {
    const int nb = std::min(20, b.T);
    const int len = b.T / nb;
    for (int g = 0; g < nb; ++g) {
      double total = 0.0;
      for (int t = g * len; t < (g + 1) * len; ++t) total += b.step_reward(0, t);
      groups.push_back(total / len);
    }
  }
  if (groups.size() > 1) {
    double mean = 0.0;
    for (double x : groups) mean += x;
    mean /= groups.size();
    double var = 0.0;
    for (double x : groups) var += (x - mean) * (x - mean);
    var /= groups.size() - 1;
    est.std_error = std::sqrt(var / groups.size());
  }
  return est;
}

namespace {

constexpr char kBatchMagic[8] = {'S', 'P', 'N', 'B', 'A', 'T', 'C', 'H'};
constexpr std::uint32_t kBatchVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}
template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("truncated batch log");
  return v;
}
template <class T>
std::vector<T> get_vec(std::istream& in, std::size_t expected) {
  const auto n = get<std::uint64_t>(in);
  if (n != expected) throw FormatError("batch log array has the wrong length");
  std::vector<T> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw FormatError("truncated batch log");
  return v;
}

}  // namespace

void save_batch(const std::string& path, const TrajectoryBatch& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(kBatchMagic, sizeof kBatchMagic);
  put(out, kBatchVersion);
  put(out, b.config_hash);
  put(out, b.seeds.master);
  put(out, b.seeds.round);
  for (int v : {b.M, b.T, b.K, b.state_dim, b.num_atomic, static_cast<int>(b.mode)}) put<std::int32_t>(out, v);
  put_vec(out, b.states);
  put_vec(out, b.actions);
  put_vec(out, b.rewards);
  put_vec(out, b.holding);
  put_vec(out, b.log_probs);
  put_vec(out, b.masks);
  put_vec(out, b.steps);
  put_vec(out, b.final_states);
  if (!out) throw IoError("write to '" + path + "' failed");
}

TrajectoryBatch load_batch(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[sizeof kBatchMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kBatchMagic, sizeof magic) != 0) throw FormatError("'" + path + "' is not a batch log");
  if (get<std::uint32_t>(in) != kBatchVersion) throw FormatError("unsupported batch log version");
  TrajectoryBatch b;
  b.config_hash = get<std::uint64_t>(in);
  b.seeds.master = get<std::uint64_t>(in);
  b.seeds.round = get<std::uint32_t>(in);
  b.M = get<std::int32_t>(in);
  b.T = get<std::int32_t>(in);
  b.K = get<std::int32_t>(in);
  b.state_dim = get<std::int32_t>(in);
  b.num_atomic = get<std::int32_t>(in);
  b.mode = static_cast<RolloutMode>(get<std::int32_t>(in));
  if (b.M < 0 || b.T < 0 || b.K < 0 || b.state_dim < 0 || b.num_atomic < 0) throw FormatError("negative batch dimension");
  const std::size_t MT = static_cast<std::size_t>(b.M) * b.T;
  b.states = get_vec<int>(in, MT * (b.K + 1) * b.state_dim);
  b.actions = get_vec<int>(in, MT * b.K);
  b.rewards = get_vec<double>(in, MT * b.K);
  b.holding = get_vec<double>(in, MT);
  b.log_probs = get_vec<double>(in, MT * b.K);
  b.masks = get_vec<std::uint8_t>(in, MT * b.K * b.num_atomic);
  b.steps = get_vec<int>(in, MT);
  b.final_states = get_vec<int>(in, static_cast<std::size_t>(b.M) * b.state_dim);
  return b;
}

std::string batch_summary_csv(const TrajectoryBatch& b) {
  std::ostringstream os;
  os.precision(17);
  os << "# config_hash=" << hash_hex(b.config_hash) << " seed=" << b.seeds.master << " round=" << b.seeds.round
     << " mode=" << to_string(b.mode) << " T=" << b.T << "\n";
  os << "trajectory,gain\n";
  const auto g = trajectory_gains(b);
  for (int m = 0; m < b.M; ++m) os << m << ',' << g[m] << '\n';
  return os.str();
}

}  // namespace spn
