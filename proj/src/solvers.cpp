#include "spn/solvers.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "spn/error.hpp"
#include "spn/parallel.hpp"

namespace spn {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kStallWindow = 50;

bool ties(double value, double best) { return value >= best - kTieTolerance * (1.0 + std::abs(best)); }

struct SpanStats {
  double lo = 0.0, hi = 0.0;
  double span() const { return hi - lo; }
  double mid() const { return 0.5 * (hi + lo); }
};

SpanStats diff_span(const std::vector<double>& w, const std::vector<double>& h) {
  SpanStats st{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (std::size_t s = 0; s < w.size(); ++s) {
    const double d = w[s] - h[s];
    st.lo = std::min(st.lo, d);
    st.hi = std::max(st.hi, d);
  }
  return st;
}

void check_reference(const KernelSet& k, int reference) {
  if (k.num_states == 0) throw DimensionError("empty state space");
  if (reference < 0 || reference >= k.num_states) throw DimensionError("reference state out of range");
}

// Shared driver for relative value iteration: `backup` maps h to T(h).
// Damping switches on when the span stalls, which only happens on periodic
// chains.
template <class Backup>
SolveResult relative_value_iteration(int n, const SolveOptions& opts, Backup&& backup) {
  SolveResult res;
  std::vector<double> h(n, 0.0), w(n);
  std::vector<double> history;
  bool damped = false;
  for (int it = 1; it <= opts.max_iter; ++it) {
    backup(h, w);
    const auto st = diff_span(w, h);
    if (!std::isfinite(st.span())) throw StructuralError("non-finite value during relative value iteration");
    history.push_back(st.span());
    res.iterations = it;
    res.span = st.span();
    if (st.span() < opts.tol) {
      res.gain = st.mid();
      res.h = std::move(h);
      res.damped = damped;
      return res;
    }
    if (!damped && history.size() > kStallWindow &&
        st.span() >= history[history.size() - 1 - kStallWindow] * (1.0 - 1e-9)) {
      damped = true;
    }
    const double alpha = damped ? opts.damping : 1.0;
    for (int s = 0; s < n; ++s) w[s] = alpha * w[s] + (1.0 - alpha) * h[s];
    const double shift = w[opts.reference];
    for (int s = 0; s < n; ++s) h[s] = w[s] - shift;
  }
  throw ConvergenceError("relative value iteration did not reach span " + std::to_string(opts.tol) + " within " +
                             std::to_string(opts.max_iter) + " iterations",
                         res.span);
}

std::vector<double> apply_p_sys(const KernelSet& k, const std::vector<double>& h, int workers) {
  std::vector<double> out(k.num_states);
  parallel_for(static_cast<std::size_t>(k.num_states), workers,
               [&](std::size_t s) { out[s] = k.p_sys.dot(static_cast<int>(s), h); });
  return out;
}

// One period of the atomic MDP: W[k] for steps 1..K+1 (index 0 is step 1).
// W[K] = holding + P_sys h; W[k] = max_a r(a) + W[k+1](next).
std::vector<std::vector<double>> atomic_backward(const KernelSet& k, const RewardTable& r, int K,
                                                 const std::vector<double>& h1, int workers) {
  const int n = k.num_states;
  std::vector<std::vector<double>> W(K + 1, std::vector<double>(n));
  const auto ph = apply_p_sys(k, h1, workers);
  for (int s = 0; s < n; ++s) W[K][s] = r.holding[s] + ph[s];
  for (int step = K - 1; step >= 0; --step) {
    const auto& nxt = W[step + 1];
    auto& cur = W[step];
    parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t s) {
      double best = kNegInf;
      for (int code = 0; code < k.num_atomic; ++code) {
        const int t = k.next(static_cast<int>(s), code);
        if (t < 0) continue;
        best = std::max(best, r.atomic[code] + nxt[t]);
      }
      cur[s] = best;
    });
  }
  return W;
}

// Linear algebra for policy evaluation: one-period reward R and chain Q.
struct PeriodChain {
  std::vector<double> reward;
  SparseRows q;
};

constexpr int kDirectSolveLimit = 20000;

Eigen::VectorXd sparse_solve(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b, const char* what) {
  Eigen::VectorXd x;
  if (a.rows() <= kDirectSolveLimit) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw StructuralError(std::string(what) + ": singular system (" + lu.lastErrorMessage() + ")");
    x = lu.solve(b);
    if (lu.info() != Eigen::Success) throw StructuralError(std::string(what) + ": solve failed");
  } else {
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> it;
    it.setTolerance(1e-14);
    it.setMaxIterations(100000);
    it.compute(a);
    x = it.solve(b);
    if (it.info() != Eigen::Success) {
      throw StructuralError(std::string(what) + ": iterative solve did not converge, error " + std::to_string(it.error()));
    }
  }
  if (!x.allFinite()) throw StructuralError(std::string(what) + ": non-finite solution");
  return x;
}

Evaluation evaluate_chain(const PeriodChain& chain, const EvaluateOptions& opts) {
  const int n = chain.q.rows();
  Evaluation ev;
  ev.recurrent_classes = count_recurrent_classes(chain.q);
  if (ev.recurrent_classes != 1) {
    throw StructuralError("policy induces " + std::to_string(ev.recurrent_classes) +
                          " recurrent classes; gain is not unique");
  }
  const int ref = opts.reference;
  // Unknowns: h with the reference slot holding the gain.
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<Eigen::Triplet<double>> trip_t;
  for (int s = 0; s < n; ++s) {
    std::map<int, double> row;
    row[s] += 1.0;
    for (auto e = chain.q.begin(s); e < chain.q.end(s); ++e) row[chain.q.col[e]] -= chain.q.val[e];
    for (auto& [c, v] : row) {
      if (c != ref) trip.emplace_back(s, c, v);
      // Transposed system for the stationary distribution; row `ref`
      // becomes the normalization.
      if (c != ref) trip_t.emplace_back(c, s, v);
    }
    trip.emplace_back(s, ref, 1.0);
    trip_t.emplace_back(ref, s, 1.0);
  }
  Eigen::SparseMatrix<double> a(n, n), at(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  at.setFromTriplets(trip_t.begin(), trip_t.end());
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(chain.reward.data(), n);
  const Eigen::VectorXd x = sparse_solve(a, b, "policy evaluation");
  ev.gain = x[ref];
  ev.h.assign(x.data(), x.data() + n);
  ev.h[ref] = 0.0;

  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  e[ref] = 1.0;
  const Eigen::VectorXd rho = sparse_solve(at, e, "stationary distribution");
  ev.stationary.assign(rho.data(), rho.data() + n);
  for (double& p : ev.stationary) {
    if (p < 0.0 && p > -1e-12) p = 0.0;
  }

  double residual = 0.0;
  for (int s = 0; s < n; ++s) {
    const double lhs = ev.gain + ev.h[s];
    const double rhs = chain.reward[s] + chain.q.dot(s, ev.h);
    residual = std::max(residual, std::abs(lhs - rhs));
  }
  ev.residual = residual;
  if (residual > 1e-6 * (1.0 + std::abs(ev.gain))) {
    throw StructuralError("policy evaluation residual " + std::to_string(residual) + " is too large");
  }
  return ev;
}

void check_distribution(const KernelSet& k, const std::vector<double>& table, int s) {
  double total = 0.0;
  for (int code = 0; code < k.num_atomic; ++code) {
    const double p = table[static_cast<std::size_t>(s) * k.num_atomic + code];
    if (p < 0.0) throw StructuralError("negative action probability at state " + std::to_string(s));
    if (p > 1e-12 && k.next(s, code) < 0) {
      throw InfeasibleActionError("policy puts mass " + std::to_string(p) + " on infeasible action " +
                                  std::to_string(code) + " at state " + std::to_string(s));
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw StructuralError("action probabilities at state " + std::to_string(s) + " do not sum to 1");
}

}  // namespace

SolveResult solve_original_rvi(const KernelSet& k, const RewardTable& r, const SolveOptions& opts) {
  check_reference(k, opts.reference);
  const int n = k.num_states;
  auto value_of = [&](std::int64_t e, const std::vector<double>& ph) {
    return r.schedule(k, e) + ph[k.sched_post[e]];
  };
  auto backup = [&](const std::vector<double>& h, std::vector<double>& w) {
    const auto ph = apply_p_sys(k, h, opts.workers);
    parallel_for(static_cast<std::size_t>(n), opts.workers, [&](std::size_t s) {
      double best = kNegInf;
      for (auto e = k.sched_ptr[s]; e < k.sched_ptr[s + 1]; ++e) best = std::max(best, value_of(e, ph));
      w[s] = best;
    });
  };
  if (k.sched_post.empty()) throw DimensionError("kernels were built without schedules");
  SolveResult res = relative_value_iteration(n, opts, backup);
  const auto ph = apply_p_sys(k, res.h, opts.workers);
  res.policy.resize(n);
  for (int s = 0; s < n; ++s) {
    double best = kNegInf;
    for (auto e = k.sched_ptr[s]; e < k.sched_ptr[s + 1]; ++e) best = std::max(best, value_of(e, ph));
    for (auto e = k.sched_ptr[s]; e < k.sched_ptr[s + 1]; ++e) {
      if (ties(value_of(e, ph), best)) {
        res.policy[s] = static_cast<int>(e - k.sched_ptr[s]);
        break;
      }
    }
  }
  return res;
}

SolveResult solve_atomic_step_dependent(const KernelSet& k, const RewardTable& r, int K, const SolveOptions& opts) {
  check_reference(k, opts.reference);
  if (K < 1) throw DimensionError("the atomic MDP needs at least one server");
  const int n = k.num_states;
  auto backup = [&](const std::vector<double>& h, std::vector<double>& w) {
    w = atomic_backward(k, r, K, h, opts.workers)[0];
  };
  SolveResult res = relative_value_iteration(n, opts, backup);
  const double g = res.gain;
  const auto W = atomic_backward(k, r, K, res.h, opts.workers);
  res.step_values.assign(K, std::vector<double>(n));
  res.step_values[0] = res.h;
  for (int step = 1; step < K; ++step) {
    for (int s = 0; s < n; ++s) res.step_values[step][s] = W[step][s] - (K - step) * g / K;
  }
  res.step_policy.assign(K, std::vector<int>(n, 0));
  for (int step = 0; step < K; ++step) {
    const auto& nxt = W[step + 1];
    for (int s = 0; s < n; ++s) {
      double best = kNegInf;
      for (int code = 0; code < k.num_atomic; ++code) {
        const int t = k.next(s, code);
        if (t >= 0) best = std::max(best, r.atomic[code] + nxt[t]);
      }
      for (int code = 0; code < k.num_atomic; ++code) {
        const int t = k.next(s, code);
        if (t >= 0 && ties(r.atomic[code] + nxt[t], best)) {
          res.step_policy[step][s] = code;
          break;
        }
      }
    }
  }
  res.policy = res.step_policy[0];
  return res;
}

SolveResult solve_passing_last(const KernelSet& k, const RewardTable& r, double g_star,
                               const std::vector<double>& h_star) {
  const int n = k.num_states;
  if (static_cast<int>(h_star.size()) != n) throw DimensionError("relative value table has the wrong length");
  SolveResult res;
  res.gain = g_star;
  res.h.assign(n, 0.0);
  res.policy.assign(n, 0);
  const auto ph = apply_p_sys(k, h_star, 1);

  std::vector<int> order(n);
  for (int s = 0; s < n; ++s) order[s] = s;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return k.idle_count[a] < k.idle_count[b]; });

  std::vector<double> value(k.num_atomic);
  for (int s : order) {
    const double pass = r.holding[s] - g_star + ph[s];
    double best = pass;
    value[0] = pass;
    for (int code = 1; code < k.num_atomic; ++code) {
      const int t = k.next(s, code);
      if (t < 0) continue;
      if (k.idle_count[t] != k.idle_count[s] - 1) {
        throw StructuralError("atomic action " + std::to_string(code) + " at state " + std::to_string(s) +
                              " does not lower the idle server count by one");
      }
      value[code] = r.atomic[code] + res.h[t];
      best = std::max(best, value[code]);
    }
    res.h[s] = best;
    for (int code = 0; code < k.num_atomic; ++code) {
      if ((code == 0 || k.next(s, code) >= 0) && ties(value[code], best)) {
        res.policy[s] = code;
        break;
      }
    }
  }
  return res;
}

AtomicPolicyTable AtomicPolicyTable::deterministic(const std::vector<std::vector<int>>& codes, int num_atomic) {
  AtomicPolicyTable t;
  t.num_atomic = num_atomic;
  for (const auto& table : codes) {
    std::vector<double> p(table.size() * num_atomic, 0.0);
    for (std::size_t s = 0; s < table.size(); ++s) p[s * num_atomic + table[s]] = 1.0;
    t.probs.push_back(std::move(p));
  }
  return t;
}

Evaluation evaluate_joint(const KernelSet& k, const RewardTable& r, const std::vector<int>& policy,
                          const EvaluateOptions& opts) {
  check_reference(k, opts.reference);
  const int n = k.num_states;
  if (static_cast<int>(policy.size()) != n) throw DimensionError("policy table has the wrong length");
  PeriodChain chain;
  chain.reward.resize(n);
  for (int s = 0; s < n; ++s) {
    if (policy[s] < 0 || policy[s] >= k.num_schedules(s)) throw InfeasibleActionError("policy schedule index out of range at state " + std::to_string(s));
    const auto e = k.sched_ptr[s] + policy[s];
    chain.reward[s] = r.schedule(k, e);
    const int post = k.sched_post[e];
    for (auto x = k.p_sys.begin(post); x < k.p_sys.end(post); ++x) {
      chain.q.col.push_back(k.p_sys.col[x]);
      chain.q.val.push_back(k.p_sys.val[x]);
    }
    chain.q.row_ptr.push_back(static_cast<std::int64_t>(chain.q.col.size()));
  }
  return evaluate_chain(chain, opts);
}

namespace {

PeriodChain build_atomic_chain(const KernelSet& k, const RewardTable& r, const AtomicPolicyTable& policy, int K,
                               bool passing_last_requested, int workers, bool& passing_last) {
  const int n = k.num_states;
  const bool step_dependent = policy.probs.size() > 1;
  if (K < 1) throw DimensionError("the atomic MDP needs at least one server");
  if (policy.probs.empty() || (step_dependent && static_cast<int>(policy.probs.size()) != K)) {
    throw DimensionError("atomic policy needs one table or one per atomic step");
  }
  if (policy.num_atomic != k.num_atomic) throw DimensionError("atomic policy has the wrong action count");
  for (const auto& t : policy.probs) {
    if (t.size() != static_cast<std::size_t>(n) * k.num_atomic) throw DimensionError("atomic policy table has the wrong size");
    for (int s = 0; s < n; ++s) check_distribution(k, t, s);
  }
  passing_last = passing_last_requested && !step_dependent;
  auto table = [&](int step) -> const std::vector<double>& { return policy.probs[step_dependent ? step : 0]; };

  std::vector<double> reward(n);
  std::vector<std::map<int, double>> rows(n);
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t s0) {
    std::map<int, double> cur{{static_cast<int>(s0), 1.0}}, done;
    double acc = 0.0;
    for (int step = 0; step < K && !cur.empty(); ++step) {
      std::map<int, double> nxt;
      const auto& t = table(step);
      for (const auto& [s, p] : cur) {
        for (int code = 0; code < k.num_atomic; ++code) {
          const double q = t[static_cast<std::size_t>(s) * k.num_atomic + code];
          if (q <= 0.0) continue;
          acc += p * q * r.atomic[code];
          if (code == 0 && passing_last) {
            done[s] += p * q;
          } else {
            nxt[k.next(s, code)] += p * q;
          }
        }
      }
      cur = std::move(nxt);
    }
    for (const auto& [s, p] : cur) done[s] += p;
    auto& row = rows[s0];
    for (const auto& [s, p] : done) {
      acc += p * r.holding[s];
      for (auto e = k.p_sys.begin(s); e < k.p_sys.end(s); ++e) row[k.p_sys.col[e]] += p * k.p_sys.val[e];
    }
    reward[s0] = acc;
  });
  PeriodChain chain;
  chain.reward = std::move(reward);
  for (int s = 0; s < n; ++s) {
    for (const auto& [c, v] : rows[s]) {
      chain.q.col.push_back(c);
      chain.q.val.push_back(v);
    }
    chain.q.row_ptr.push_back(static_cast<std::int64_t>(chain.q.col.size()));
  }
  return chain;
}

}  // namespace

Evaluation evaluate_atomic(const KernelSet& k, const RewardTable& r, const AtomicPolicyTable& policy, int K,
                           const EvaluateOptions& opts) {
  check_reference(k, opts.reference);
  const int n = k.num_states;
  bool passing_last = false;
  PeriodChain chain = build_atomic_chain(k, r, policy, K, opts.passing_last, opts.workers, passing_last);
  auto table = [&](int step) -> const std::vector<double>& { return policy.probs[policy.probs.size() > 1 ? step : 0]; };
  Evaluation ev = evaluate_chain(chain, opts);
  if (!passing_last) {
    // h_k = sum_a pi_k(a|s) (r(a) - g/K + h_{k+1}(next)), with
    // h_{K+1} = r_H + P_sys h_1.
    std::vector<double> upper(n);
    const auto ph = apply_p_sys(k, ev.h, opts.workers);
    for (int s = 0; s < n; ++s) upper[s] = r.holding[s] + ph[s];
    ev.step_values.assign(K, std::vector<double>(n));
    for (int step = K - 1; step >= 0; --step) {
      const auto& t = table(step);
      for (int s = 0; s < n; ++s) {
        double v = 0.0;
        for (int code = 0; code < k.num_atomic; ++code) {
          const double q = t[static_cast<std::size_t>(s) * k.num_atomic + code];
          if (q > 0.0) v += q * (r.atomic[code] - ev.gain / K + upper[k.next(s, code)]);
        }
        ev.step_values[step][s] = v;
      }
      upper = ev.step_values[step];
    }
  }
  return ev;
}

double evaluate_atomic_from(const KernelSet& k, const RewardTable& r, const AtomicPolicyTable& policy, int K,
                            int start, const EvaluateOptions& opts) {
  check_reference(k, start);
  bool passing_last = false;
  const PeriodChain chain = build_atomic_chain(k, r, policy, K, opts.passing_last, opts.workers, passing_last);
  // Power iteration on the lazy chain (Q + I) / 2: same limiting
  // distribution from `start`, and aperiodic.
  const int n = k.num_states;
  std::vector<double> dist(n, 0.0), nxt(n);
  dist[start] = 1.0;
  for (int it = 0; it < 10000000; ++it) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (int s = 0; s < n; ++s) {
      if (dist[s] == 0.0) continue;
      nxt[s] += 0.5 * dist[s];
      for (auto e = chain.q.begin(s); e < chain.q.end(s); ++e) nxt[chain.q.col[e]] += 0.5 * dist[s] * chain.q.val[e];
    }
    double change = 0.0;
    for (int s = 0; s < n; ++s) change += std::abs(nxt[s] - dist[s]);
    dist.swap(nxt);
    if (change < 1e-14) break;
  }
  double gain = 0.0;
  for (int s = 0; s < n; ++s) gain += dist[s] * chain.reward[s];
  return gain;
}

std::vector<double> per_step_gains(const KernelSet& k, const RewardTable& r, const AtomicPolicyTable& policy, int K,
                                   const std::vector<double>& stationary_first_step) {
  const int n = k.num_states;
  std::vector<double> rho = stationary_first_step;
  std::vector<double> gains(K, 0.0);
  for (int step = 0; step < K; ++step) {
    const auto& t = policy.probs[policy.probs.size() > 1 ? step : 0];
    std::vector<double> nxt(n, 0.0);
    for (int s = 0; s < n; ++s) {
      if (rho[s] == 0.0) continue;
      for (int code = 0; code < k.num_atomic; ++code) {
        const double q = t[static_cast<std::size_t>(s) * k.num_atomic + code];
        if (q <= 0.0) continue;
        gains[step] += rho[s] * q * r.atomic[code];
        nxt[k.next(s, code)] += rho[s] * q;
      }
    }
    rho = std::move(nxt);
  }
  for (int s = 0; s < n; ++s) gains[K - 1] += rho[s] * r.holding[s];
  return gains;
}

double original_bellman_residual(const KernelSet& k, const RewardTable& r, double gain, const std::vector<double>& h) {
  const auto ph = apply_p_sys(k, h, 1);
  double res = 0.0;
  for (int s = 0; s < k.num_states; ++s) {
    double best = kNegInf;
    for (auto e = k.sched_ptr[s]; e < k.sched_ptr[s + 1]; ++e) {
      best = std::max(best, r.schedule(k, e) - gain + ph[k.sched_post[e]]);
    }
    res = std::max(res, std::abs(h[s] - best));
  }
  return res;
}

double atomic_bellman_residual(const KernelSet& k, const RewardTable& r, double gain,
                               const std::vector<std::vector<double>>& step_values) {
  const int K = static_cast<int>(step_values.size());
  const int n = k.num_states;
  std::vector<double> upper(n);
  const auto ph = apply_p_sys(k, step_values[0], 1);
  for (int s = 0; s < n; ++s) upper[s] = r.holding[s] + ph[s];
  double res = 0.0;
  for (int step = K - 1; step >= 0; --step) {
    for (int s = 0; s < n; ++s) {
      double best = kNegInf;
      for (int code = 0; code < k.num_atomic; ++code) {
        const int t = k.next(s, code);
        if (t >= 0) best = std::max(best, r.atomic[code] - gain / K + upper[t]);
      }
      res = std::max(res, std::abs(step_values[step][s] - best));
    }
    upper = step_values[step];
  }
  return res;
}

int count_recurrent_classes(const SparseRows& chain) {
  // Iterative Tarjan; a strongly connected component is recurrent when no
  // edge with positive probability leaves it.
  const int n = chain.rows();
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
  std::vector<char> on_stack(n, 0);
  int counter = 0, components = 0;
  std::vector<std::pair<int, std::int64_t>> call;
  for (int root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    call.push_back({root, chain.begin(root)});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& [v, e] = call.back();
      if (e < chain.end(v)) {
        const int w = chain.col[e];
        const bool live = chain.val[e] > 0.0;
        ++e;
        if (!live) continue;
        if (index[w] < 0) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, chain.begin(w)});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = components;
        } while (w != v);
        ++components;
      }
      const int done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
    }
  }
  std::vector<char> leaves(components, 0);
  for (int v = 0; v < n; ++v) {
    for (auto e = chain.begin(v); e < chain.end(v); ++e) {
      if (chain.val[e] > 0.0 && comp[chain.col[e]] != comp[v]) leaves[comp[v]] = 1;
    }
  }
  return static_cast<int>(std::count(leaves.begin(), leaves.end(), 0));
}

std::string value_table_csv(const std::vector<double>& h) {
  std::ostringstream os;
  os.precision(17);
  os << "state_id,h\n";
  for (std::size_t s = 0; s < h.size(); ++s) os << s << ',' << h[s] << '\n';
  return os.str();
}

}  // namespace spn
