#include "spn/state_space.hpp"

#include <algorithm>
#include <cstring>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "spn/config_io.hpp"
#include "spn/error.hpp"
#include "spn/parallel.hpp"

namespace spn {

StateIndex::StateIndex(std::vector<SystemState> sorted_states) : states_(std::move(sorted_states)) {
  if (!std::is_sorted(states_.begin(), states_.end())) std::sort(states_.begin(), states_.end());
}

int StateIndex::find(const SystemState& s) const {
  auto it = std::lower_bound(states_.begin(), states_.end(), s);
  if (it == states_.end() || !(*it == s)) return -1;
  return static_cast<int>(it - states_.begin());
}

int StateIndex::at(const SystemState& s) const {
  const int id = find(s);
  if (id < 0) throw StructuralError("state " + format_state(s) + " is not in the enumerated set");
  return id;
}

namespace {

void limit_error(std::size_t limit) {
  throw ResourceLimitError("state enumeration exceeded the limit of " + std::to_string(limit) +
                           " states; reduce the item caps or raise the limit");
}

std::vector<SystemState> enumerate_box(const NetworkConfig& cfg, std::span<const ExtraConstraint> extra,
                                       std::size_t limit) {
  std::vector<SystemState> out;
  SystemState s = empty_state(cfg);
  const int cells = cfg.num_types * cfg.slots();

  auto items = [&](auto&& self, int i) -> void {
    if (i == cfg.num_classes) {
      if (state_valid(cfg, s, extra)) {
        if (out.size() >= limit) limit_error(limit);
        out.push_back(s);
      }
      return;
    }
    for (int v = open_services(cfg, s, i); v <= cfg.item_cap[i]; ++v) {
      s.items[i] = v;
      self(self, i + 1);
    }
    s.items[i] = 0;
  };
  auto servers = [&](auto&& self, int cell, int left) -> void {
    if (cell == cells - 1) {
      s.services[cell] = left;
      items(items, 0);
      return;
    }
    for (int v = 0; v <= left; ++v) {
      s.services[cell] = v;
      self(self, cell + 1, left - v);
    }
    s.services[cell] = 0;
  };
  if (cells == 0) {
    if (cfg.num_servers == 0) items(items, 0);
  } else {
    servers(servers, 0, cfg.num_servers);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<SystemState> enumerate_closure(const NetworkConfig& cfg, std::span<const ExtraConstraint> extra,
                                           const EnumerateOptions& opts) {
  std::set<SystemState> seen;
  std::deque<SystemState> frontier;
  auto visit = [&](const SystemState& s) {
    if (seen.insert(s).second) {
      if (seen.size() > opts.limit) limit_error(opts.limit);
      frontier.push_back(s);
    }
  };
  for (const auto& r : opts.roots) {
    check_state_shape(cfg, r);
    if (!state_valid(cfg, r, extra)) throw DimensionError("root state " + format_state(r) + " violates the invariants");
    visit(r);
  }
  while (!frontier.empty()) {
    const SystemState s = std::move(frontier.front());
    frontier.pop_front();
    for (int code = 1; code < cfg.num_atomic(); ++code) {
      const auto act = AtomicAction::decode(code, cfg.num_types);
      if (atomic_feasible(cfg, s, act, extra)) visit(apply_atomic(cfg, s, act, extra));
    }
    for (const auto& o : system_update_distribution(cfg, s)) visit(o.state);
  }
  return {seen.begin(), seen.end()};
}

}  // namespace

StateIndex enumerate_states(const NetworkConfig& cfg, std::span<const ExtraConstraint> extra,
                            const EnumerateOptions& opts) {
  if (opts.roots.empty()) return StateIndex(enumerate_box(cfg, extra, opts.limit));
  return StateIndex(enumerate_closure(cfg, extra, opts));
}

double SparseRows::dot(int r, std::span<const double> x) const {
  double acc = 0.0;
  for (auto e = row_ptr[r]; e < row_ptr[r + 1]; ++e) acc += val[e] * x[col[e]];
  return acc;
}

void SparseRows::multiply(std::span<const double> x, std::span<double> out) const {
  for (int r = 0; r < rows(); ++r) out[r] = dot(r, x);
}

Schedule KernelSet::schedule(std::int64_t entry) const {
  Schedule a(num_types, num_types);
  const auto base = static_cast<std::size_t>(entry) * num_types * num_types;
  std::copy(sched_matrix.begin() + base, sched_matrix.begin() + base + a.size(), a.data().begin());
  return a;
}

KernelSet build_kernels(const NetworkConfig& cfg, const StateIndex& idx, std::span<const ExtraConstraint> extra,
                        const KernelOptions& opts) {
  const int n = idx.size();
  const int A = cfg.num_atomic();
  KernelSet k;
  k.num_states = n;
  k.num_types = cfg.num_types;
  k.num_atomic = A;
  k.atomic_next.assign(static_cast<std::size_t>(n) * A, -1);
  k.idle_count.resize(n);

  struct Row {
    std::vector<int> col;
    std::vector<double> val;
    std::vector<int> post;
    std::vector<int> matrix;
  };
  std::vector<Row> rows(n);

  auto missing = [&](const SystemState& from, const std::string& how, const SystemState& to) {
    throw StructuralError("transition " + how + " from " + format_state(from) + " reaches " + format_state(to) +
                          ", which is not in the enumerated set");
  };

  parallel_for(static_cast<std::size_t>(n), opts.workers, [&](std::size_t sid) {
    const auto& s = idx.state(static_cast<int>(sid));
    k.idle_count[sid] = s.total_idle();
    k.atomic_next[sid * A] = static_cast<int>(sid);
    for (int code = 1; code < A; ++code) {
      const auto act = AtomicAction::decode(code, cfg.num_types);
      if (!atomic_feasible(cfg, s, act, extra)) continue;
      const auto t = apply_atomic(cfg, s, act, extra);
      const int tid = idx.find(t);
      if (tid < 0) missing(s, "by atomic action " + std::to_string(code), t);
      k.atomic_next[sid * A + code] = tid;
    }
    Row& row = rows[sid];
    for (const auto& o : system_update_distribution(cfg, s, opts.support_limit)) {
      const int tid = idx.find(o.state);
      if (tid < 0) missing(s, "by the exogenous update", o.state);
      row.col.push_back(tid);
      row.val.push_back(o.probability);
    }
    if (opts.with_schedules) {
      for (const auto& a : feasible_schedules(cfg, s, extra)) {
        const auto post = apply_schedule(cfg, s, a, extra);
        const int pid = idx.find(post);
        if (pid < 0) missing(s, "by a schedule", post);
        row.post.push_back(pid);
        row.matrix.insert(row.matrix.end(), a.data().begin(), a.data().end());
      }
    }
  });

  for (int s = 0; s < n; ++s) {
    auto& row = rows[s];
    k.p_sys.col.insert(k.p_sys.col.end(), row.col.begin(), row.col.end());
    k.p_sys.val.insert(k.p_sys.val.end(), row.val.begin(), row.val.end());
    k.p_sys.row_ptr.push_back(static_cast<std::int64_t>(k.p_sys.col.size()));
    k.sched_post.insert(k.sched_post.end(), row.post.begin(), row.post.end());
    k.sched_matrix.insert(k.sched_matrix.end(), row.matrix.begin(), row.matrix.end());
    k.sched_ptr.push_back(static_cast<std::int64_t>(k.sched_post.size()));
    row = Row{};
  }
  return k;
}

void RewardTable::scale(double factor) {
  for (auto* v : {&atomic, &holding, &schedule_service}) {
    for (double& x : *v) x *= factor;
  }
}

RewardTable build_rewards(const NetworkConfig& cfg, const StateIndex& idx, const KernelSet& kernels) {
  RewardTable r;
  r.atomic.resize(cfg.num_atomic());
  for (int code = 0; code < cfg.num_atomic(); ++code) r.atomic[code] = atomic_reward(cfg, AtomicAction::decode(code, cfg.num_types));
  r.holding.resize(idx.size());
  for (int s = 0; s < idx.size(); ++s) r.holding[s] = holding_reward(cfg, idx.state(s));
  r.schedule_service.resize(kernels.sched_post.size());
  const int J = cfg.num_types;
  for (std::size_t e = 0; e < kernels.sched_post.size(); ++e) {
    // Lexicographic (j', j) order, one server at a time.
    double total = 0.0;
    const int* m = kernels.sched_matrix.data() + e * J * J;
    for (int jp = 0; jp < J; ++jp) {
      for (int j = 0; j < J; ++j) {
        for (int c = 0; c < m[jp * J + j]; ++c) total += r.atomic[1 + jp * J + j];
      }
    }
    r.schedule_service[e] = total;
  }
  return r;
}

std::string ActionCountReport::text() const {
  std::ostringstream os;
  os << "states " << num_states << "\n"
     << "atomic_actions " << atomic_actions << "\n"
     << "max_joint_schedules " << max_schedules << "\n"
     << "mean_joint_schedules " << mean_schedules << "\n";
  return os.str();
}

ActionCountReport action_count_report(const NetworkConfig& cfg, const StateIndex& idx, const KernelSet& kernels) {
  ActionCountReport rep;
  rep.num_states = idx.size();
  rep.atomic_actions = cfg.num_atomic();
  double total = 0.0;
  for (int s = 0; s < kernels.num_states; ++s) {
    const int c = kernels.num_schedules(s);
    total += c;
    if (c > rep.max_schedules) {
      rep.max_schedules = c;
      rep.max_schedule_state = s;
    }
  }
  rep.mean_schedules = kernels.num_states > 0 ? total / kernels.num_states : 0.0;
  return rep;
}

namespace {

constexpr char kKernelMagic[8] = {'S', 'P', 'N', 'K', 'E', 'R', 'N', '1'};

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
  if (!in) throw FormatError("truncated kernel cache");
  return v;
}

template <class T>
std::vector<T> get_vec(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1ULL << 34)) throw FormatError("kernel cache array too large");
  std::vector<T> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw FormatError("truncated kernel cache");
  return v;
}

}  // namespace

void save_kernels(const std::string& path, const KernelSet& k) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(kKernelMagic, sizeof kKernelMagic);
  put(out, k.config_hash);
  put<std::int32_t>(out, k.num_states);
  put<std::int32_t>(out, k.num_types);
  put<std::int32_t>(out, k.num_atomic);
  put_vec(out, k.p_sys.row_ptr);
  put_vec(out, k.p_sys.col);
  put_vec(out, k.p_sys.val);
  put_vec(out, k.atomic_next);
  put_vec(out, k.sched_ptr);
  put_vec(out, k.sched_post);
  put_vec(out, k.sched_matrix);
  put_vec(out, k.idle_count);
  if (!out) throw IoError("write to '" + path + "' failed");
}

bool load_kernels(const std::string& path, std::uint64_t expected_hash, KernelSet& k) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[sizeof kKernelMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kKernelMagic, sizeof magic) != 0) throw FormatError("'" + path + "' is not a kernel cache");
  KernelSet out;
  out.config_hash = get<std::uint64_t>(in);
  if (out.config_hash != expected_hash) return false;
  out.num_states = get<std::int32_t>(in);
  out.num_types = get<std::int32_t>(in);
  out.num_atomic = get<std::int32_t>(in);
  out.p_sys.row_ptr = get_vec<std::int64_t>(in);
  out.p_sys.col = get_vec<int>(in);
  out.p_sys.val = get_vec<double>(in);
  out.atomic_next = get_vec<int>(in);
  out.sched_ptr = get_vec<std::int64_t>(in);
  out.sched_post = get_vec<int>(in);
  out.sched_matrix = get_vec<int>(in);
  out.idle_count = get_vec<int>(in);
  const auto n = static_cast<std::size_t>(out.num_states);
  if (out.p_sys.row_ptr.size() != n + 1 || out.sched_ptr.size() != n + 1 || out.idle_count.size() != n ||
      out.atomic_next.size() != n * out.num_atomic || out.p_sys.col.size() != out.p_sys.val.size()) {
    throw FormatError("inconsistent kernel cache '" + path + "'");
  }
  auto in_range = [&](int v) { return v >= -1 && v < out.num_states; };
  if (!std::all_of(out.p_sys.col.begin(), out.p_sys.col.end(), [&](int v) { return v >= 0 && v < out.num_states; }) ||
      !std::all_of(out.atomic_next.begin(), out.atomic_next.end(), in_range) ||
      !std::all_of(out.sched_post.begin(), out.sched_post.end(), in_range)) {
    throw FormatError("kernel cache '" + path + "' has out-of-range state ids");
  }
  k = std::move(out);
  return true;
}

}  // namespace spn
