#include "spn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "spn/config_io.hpp"
#include "spn/error.hpp"

namespace spn {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw DimensionError("a network needs an input and an output size");
  for (int s : sizes_) {
    if (s <= 0) throw DimensionError("network layer sizes must be positive");
  }
  std::size_t total = 0;
  for (int l = 0; l + 1 < static_cast<int>(sizes_.size()); ++l) {
    offset_.push_back(total);
    total += static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l] + sizes_[l + 1];
  }
  params_.assign(total, 0.0);
}

Mlp Mlp::orthogonal(std::vector<int> sizes, double output_gain, Philox& rng) {
  Mlp net(std::move(sizes));
  for (int l = 0; l < net.num_layers(); ++l) {
    const int rows = net.sizes_[l + 1], cols = net.sizes_[l];
    const int big = std::max(rows, cols), small = std::min(rows, cols);
    Eigen::MatrixXd g(big, small);
    for (int c = 0; c < small; ++c) {
      for (int r = 0; r < big; ++r) g(r, c) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    for (int c = 0; c < small; ++c) {
      if (qr.matrixQR()(c, c) < 0.0) q.col(c) *= -1.0;
    }
    const double gain = l + 1 == net.num_layers() ? output_gain : std::sqrt(2.0);
    Eigen::MatrixXd w = rows >= cols ? Eigen::MatrixXd(q) : Eigen::MatrixXd(q.transpose());
    w *= gain;
    std::copy(w.data(), w.data() + w.size(), net.params_.begin() + net.offset_[l]);
  }
  return net;
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int l) const {
  return {params_.data() + offset_[l], sizes_[l + 1], sizes_[l]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int l) const {
  return {params_.data() + offset_[l] + static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape* tape) const {
  if (x.rows() != input_dim()) {
    throw DimensionError("network input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(input_dim()));
  }
  if (tape) {
    tape->act.clear();
    tape->act.push_back(x);
  }
  Eigen::MatrixXd a = x;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd z = weight(l) * a;
    z.colwise() += bias(l);
    if (l + 1 < num_layers()) z = z.array().tanh().matrix();
    if (!z.allFinite()) throw StructuralError("non-finite activation in layer " + std::to_string(l + 1));
    a = std::move(z);
    if (tape) tape->act.push_back(a);
  }
  return a;
}

void Mlp::backward(const Tape& tape, const Eigen::MatrixXd& dout, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw DimensionError("gradient buffer has the wrong length");
  if (static_cast<int>(tape.act.size()) != num_layers() + 1) throw DimensionError("tape does not match the network");
  Eigen::MatrixXd delta = dout;
  for (int l = num_layers() - 1; l >= 0; --l) {
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offset_[l], sizes_[l + 1], sizes_[l]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offset_[l] + static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l],
                                   sizes_[l + 1]);
    gw.noalias() += delta * tape.act[l].transpose();
    gb += delta.rowwise().sum();
    if (!gw.allFinite() || !gb.allFinite()) throw StructuralError("non-finite gradient in layer " + std::to_string(l + 1));
    if (l > 0) {
      Eigen::MatrixXd back = weight(l).transpose() * delta;
      delta = back.array() * (1.0 - tape.act[l].array().square());
    }
  }
}

int feature_dim(const NetworkConfig& cfg) { return cfg.num_classes + cfg.num_types * cfg.slots(); }

void state_features(const NetworkConfig& cfg, std::span<const int> flat, std::span<double> out) {
  const int dim = feature_dim(cfg);
  if (static_cast<int>(flat.size()) != dim || static_cast<int>(out.size()) < dim) {
    throw DimensionError("state feature buffers have the wrong length");
  }
  const double servers = std::max(cfg.num_servers, 1);
  for (int i = 0; i < cfg.num_classes; ++i) out[i] = cfg.item_cap[i] > 0 ? flat[i] / static_cast<double>(cfg.item_cap[i]) : 0.0;
  for (int c = cfg.num_classes; c < dim; ++c) out[c] = flat[c] / servers;
}

int critic_input_dim(const NetworkConfig& cfg) { return feature_dim(cfg) + cfg.num_servers; }

void critic_features(const NetworkConfig& cfg, std::span<const int> flat, int step, std::span<double> out) {
  if (step < 1 || step > cfg.num_servers) {
    throw DimensionError("atomic step " + std::to_string(step) + " outside 1.." + std::to_string(cfg.num_servers));
  }
  const int dim = feature_dim(cfg);
  state_features(cfg, flat, out.first(dim));
  for (int k = 0; k < cfg.num_servers; ++k) out[dim + k] = k + 1 == step ? 1.0 : 0.0;
}

void masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask, std::span<double> probs) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (mask[c]) top = std::max(top, logits[c]);
  }
  if (top == -std::numeric_limits<double>::infinity()) throw StructuralError("every atomic action is masked");
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    probs[c] = mask[c] ? std::exp(logits[c] - top) : 0.0;
    sum += probs[c];
  }
  for (std::size_t c = 0; c < logits.size(); ++c) probs[c] /= sum;
}

void policy_forward(const Mlp& policy, const NetworkConfig& cfg, const SystemState& state,
                    std::span<const std::uint8_t> mask, std::span<double> probs) {
  if (policy.output_dim() != cfg.num_atomic() || static_cast<int>(mask.size()) != cfg.num_atomic()) {
    throw DimensionError("policy output does not match the atomic action count");
  }
  Eigen::VectorXd x(feature_dim(cfg));
  state_features(cfg, state.flatten(), {x.data(), static_cast<std::size_t>(x.size())});
  const Eigen::MatrixXd logits = policy.forward(x);
  masked_softmax({logits.data(), static_cast<std::size_t>(logits.size())}, mask, probs);
}

double critic_forward(const Mlp& critic, const NetworkConfig& cfg, const SystemState& state, int step) {
  Eigen::VectorXd x(critic_input_dim(cfg));
  critic_features(cfg, state.flatten(), step, {x.data(), static_cast<std::size_t>(x.size())});
  return critic.forward(x)(0, 0);
}

SampledAction sample_action(std::span<const double> probs, int num_types, Philox& rng) {
  SampledAction out;
  out.code = sample_pmf(probs, rng);
  out.action = AtomicAction::decode(out.code, num_types);
  out.log_prob = std::log(probs[out.code]);
  return out;
}

void NetPolicy::distribution(const SystemState& state, int, std::span<const std::uint8_t> mask,
                             std::span<double> probs) const {
  policy_forward(net_, cfg_, state, mask, probs);
}

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

Mlp make_policy_net(const NetworkConfig& cfg, const std::vector<int>& hidden, Philox& rng) {
  return Mlp::orthogonal(layer_sizes(feature_dim(cfg), hidden, cfg.num_atomic()), 1e-2, rng);
}

Mlp make_critic_net(const NetworkConfig& cfg, const std::vector<int>& hidden, Philox& rng) {
  return Mlp::orthogonal(layer_sizes(critic_input_dim(cfg), hidden, 1), 1.0, rng);
}

SurrogateValue surrogate_objective(const Mlp& policy, const PolicySamples& s, double clip, double entropy_coef,
                                   std::span<double> grad) {
  const int n = s.size();
  const int A = s.num_atomic;
  SurrogateValue out;
  if (n == 0) return out;
  if (policy.output_dim() != A) throw DimensionError("policy output does not match the sample action count");
  Mlp::Tape tape;
  const Eigen::MatrixXd logits = policy.forward(s.x, grad.empty() ? nullptr : &tape);
  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(A, n);
  std::vector<double> p(A);
  const double inv_n = 1.0 / n;
  int clipped = 0;
  for (int i = 0; i < n; ++i) {
    const std::span<const std::uint8_t> mask(s.masks.data() + static_cast<std::size_t>(i) * A, A);
    const double* l = logits.data() + static_cast<std::size_t>(i) * A;
    double top = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < A; ++c) {
      if (mask[c]) top = std::max(top, l[c]);
    }
    if (top == -std::numeric_limits<double>::infinity()) throw StructuralError("sample " + std::to_string(i) + " has an empty mask");
    double sum = 0.0;
    for (int c = 0; c < A; ++c) {
      p[c] = mask[c] ? std::exp(l[c] - top) : 0.0;
      sum += p[c];
    }
    const double log_sum = std::log(sum);
    double entropy = 0.0;
    for (int c = 0; c < A; ++c) {
      p[c] /= sum;
      if (p[c] > 0.0) entropy -= p[c] * (l[c] - top - log_sum);
    }
    const int a = s.actions[i];
    if (a < 0 || a >= A || !mask[a]) throw StructuralError("sample " + std::to_string(i) + " records a masked action");
    const double logp = l[a] - top - log_sum;
    const double ratio = std::exp(logp - s.old_log_probs[i]);
    if (!std::isfinite(ratio)) throw StructuralError("non-finite probability ratio at sample " + std::to_string(i));
    const double adv = s.advantages[i];
    const double plain = ratio * adv;
    const double bounded = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * adv;
    out.surrogate += std::min(plain, bounded);
    out.entropy += entropy;
    if (std::abs(ratio - 1.0) > clip) ++clipped;
    if (grad.empty()) continue;
    // d/dlogp of the min term: ratio * A unless the clipped branch is the
    // strict minimum.
    const double g_logp = plain <= bounded ? plain : 0.0;
    double* d = dlogits.data() + static_cast<std::size_t>(i) * A;
    for (int c = 0; c < A; ++c) {
      if (!mask[c]) continue;
      const double logpc = l[c] - top - log_sum;
      d[c] = inv_n * (g_logp * ((c == a ? 1.0 : 0.0) - p[c]) - entropy_coef * p[c] * (logpc + entropy));
    }
  }
  out.surrogate *= inv_n;
  out.entropy *= inv_n;
  out.clip_fraction = static_cast<double>(clipped) * inv_n;
  out.objective = out.surrogate + entropy_coef * out.entropy;
  if (!grad.empty()) policy.backward(tape, dlogits, grad);
  return out;
}

double critic_loss(const Mlp& critic, const Eigen::MatrixXd& x, std::span<const double> targets,
                   std::span<double> grad) {
  const auto n = static_cast<Eigen::Index>(targets.size());
  if (x.cols() != n) throw DimensionError("critic inputs and targets differ in count");
  if (n == 0) return 0.0;
  Mlp::Tape tape;
  const Eigen::MatrixXd out = critic.forward(x, grad.empty() ? nullptr : &tape);
  Eigen::MatrixXd diff = out - Eigen::Map<const Eigen::RowVectorXd>(targets.data(), n);
  const double loss = diff.squaredNorm() / static_cast<double>(n);
  if (!grad.empty()) {
    diff *= 2.0 / static_cast<double>(n);
    critic.backward(tape, diff, grad);
  }
  return loss;
}

void Adam::step(std::span<double> params, std::span<const double> grad, bool ascend) {
  if (params.size() != grad.size()) throw DimensionError("gradient and parameters differ in length");
  if (m.empty()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  if (m.size() != params.size()) throw DimensionError("optimizer state does not match the parameters");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  const double sign = ascend ? 1.0 : -1.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    params[i] += sign * lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'P', 'N', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  template <class T>
  void put(const T& v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void doubles(std::span<const double> v) {
    put<std::uint64_t>(v.size());
    out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<double> doubles() {
    const auto n = get<std::uint64_t>();
    if (n > (in_.size() - pos_) / sizeof(double)) throw FormatError("checkpoint truncated");
    std::vector<double> v(n);
    std::memcpy(v.data(), in_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

void put_net(Writer& w, const Mlp& net) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(net.sizes().size()));
  for (int s : net.sizes()) w.put<std::int32_t>(s);
  w.doubles(net.params());
}

Mlp get_net(Reader& r) {
  const auto count = r.get<std::uint32_t>();
  if (count < 2 || count > 64) throw FormatError("checkpoint has an invalid layer count");
  std::vector<int> sizes(count);
  for (auto& s : sizes) {
    s = r.get<std::int32_t>();
    if (s <= 0 || s > (1 << 20)) throw FormatError("checkpoint has an invalid layer size");
  }
  Mlp net(sizes);
  const auto params = r.doubles();
  if (params.size() != net.num_params()) throw FormatError("checkpoint parameter count does not match its layer sizes");
  std::copy(params.begin(), params.end(), net.params().begin());
  return net;
}

void put_adam(Writer& w, const Adam& a) {
  w.put(a.lr);
  w.put(a.beta1);
  w.put(a.beta2);
  w.put(a.eps);
  w.put<std::int64_t>(a.t);
  w.doubles(a.m);
  w.doubles(a.v);
}

Adam get_adam(Reader& r) {
  Adam a;
  a.lr = r.get<double>();
  a.beta1 = r.get<double>();
  a.beta2 = r.get<double>();
  a.eps = r.get<double>();
  a.t = r.get<std::int64_t>();
  a.m = r.doubles();
  a.v = r.doubles();
  if (a.m.size() != a.v.size()) throw FormatError("checkpoint optimizer moments differ in length");
  return a;
}

}  // namespace

std::string checkpoint_bytes(const Checkpoint& ck) {
  Writer w;
  for (char c : kCheckpointMagic) w.put(c);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(ck.config_hash);
  w.put<std::uint64_t>(ck.seed);
  w.put<std::uint32_t>(ck.iteration);
  put_net(w, ck.policy);
  put_net(w, ck.critic);
  put_adam(w, ck.policy_opt);
  put_adam(w, ck.critic_opt);
  return w.take();
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  Reader r(bytes);
  for (char c : kCheckpointMagic) {
    if (r.get<char>() != c) throw FormatError("not a checkpoint file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config_hash = r.get<std::uint64_t>();
  ck.seed = r.get<std::uint64_t>();
  ck.iteration = r.get<std::uint32_t>();
  ck.policy = get_net(r);
  ck.critic = get_net(r);
  ck.policy_opt = get_adam(r);
  ck.critic_opt = get_adam(r);
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file(path, checkpoint_bytes(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_bytes(read_file(path)); }

std::string checkpoint_manifest(const Checkpoint& ck) {
  auto sizes = [](const Mlp& net) {
    std::string s;
    for (int v : net.sizes()) s += (s.empty() ? "" : ",") + std::to_string(v);
    return s;
  };
  std::ostringstream os;
  os << "format=spn-checkpoint\n"
     << "version=" << kCheckpointVersion << "\n"
     << "config_hash=" << hash_hex(ck.config_hash) << "\n"
     << "seed=" << ck.seed << "\n"
     << "iteration=" << ck.iteration << "\n"
     << "policy_layers=" << sizes(ck.policy) << "\n"
     << "policy_params=" << ck.policy.num_params() << "\n"
     << "critic_layers=" << sizes(ck.critic) << "\n"
     << "critic_params=" << ck.critic.num_params() << "\n";
  return os.str();
}

}  // namespace spn
