#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spn/network.hpp"
#include "spn/rng.hpp"
#include "spn/sim.hpp"

namespace spn {

// Feed-forward network with tanh hidden layers and a linear output layer.
// Parameters live in one flat vector: per layer the weight matrix
// (out x in, column-major) followed by the bias.
class Mlp {
 public:
  Mlp() = default;
  // All parameters zero. sizes = {input, hidden..., output}.
  explicit Mlp(std::vector<int> sizes);

  // Orthogonal weights (hidden gain sqrt(2)), zero biases, output layer
  // scaled by output_gain.
  static Mlp orthogonal(std::vector<int> sizes, double output_gain, Philox& rng);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  std::size_t num_params() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  // Activations kept for the backward pass; act[0] is the input.
  struct Tape {
    std::vector<Eigen::MatrixXd> act;
  };

  // Columns are samples. Throws StructuralError naming the layer when a
  // non-finite value appears.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape* tape = nullptr) const;
  // Adds dL/dparams to grad given dL/doutput.
  void backward(const Tape& tape, const Eigen::MatrixXd& dout, std::span<double> grad) const;

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  std::vector<int> sizes_;
  std::vector<double> params_;
  std::vector<std::size_t> offset_;  // start of each layer's weights

  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
};

// Items over caps, then every service count (all ages and idle) over K.
// The length depends on (I, J, tau_max) only.
int feature_dim(const NetworkConfig& cfg);
void state_features(const NetworkConfig& cfg, std::span<const int> flat_state, std::span<double> out);
// State features followed by a one-hot of the 1-based atomic step.
int critic_input_dim(const NetworkConfig& cfg);
void critic_features(const NetworkConfig& cfg, std::span<const int> flat_state, int step, std::span<double> out);

inline constexpr double kMaskedLogit = -1e9;

// Softmax over entries with mask 1; masked entries get probability 0.
// Throws StructuralError for an empty mask.
void masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask, std::span<double> probs);

void policy_forward(const Mlp& policy, const NetworkConfig& cfg, const SystemState& state,
                    std::span<const std::uint8_t> mask, std::span<double> probs);
// step is 1-based; throws DimensionError outside 1..K.
double critic_forward(const Mlp& critic, const NetworkConfig& cfg, const SystemState& state, int step);

struct SampledAction {
  AtomicAction action;
  int code = 0;
  double log_prob = 0.0;
};
// One uniform; log_prob is the log of the chosen entry of probs.
SampledAction sample_action(std::span<const double> probs, int num_types, Philox& rng);

// Step-independent atomic policy backed by a policy network.
class NetPolicy : public AtomicPolicy {
 public:
  NetPolicy(const NetworkConfig& cfg, const Mlp& net) : cfg_(cfg), net_(net) {}
  void distribution(const SystemState& state, int step, std::span<const std::uint8_t> mask,
                    std::span<double> probs) const override;
  std::string name() const override { return "policy-net"; }

 private:
  const NetworkConfig& cfg_;
  const Mlp& net_;
};

Mlp make_policy_net(const NetworkConfig& cfg, const std::vector<int>& hidden, Philox& rng);
Mlp make_critic_net(const NetworkConfig& cfg, const std::vector<int>& hidden, Philox& rng);

// Decision samples for the policy loss. Columns of x are state features.
struct PolicySamples {
  Eigen::MatrixXd x;
  int num_atomic = 0;
  std::vector<std::uint8_t> masks;  // samples x num_atomic
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  int size() const { return static_cast<int>(actions.size()); }
};

struct SurrogateValue {
  double objective = 0.0;  // surrogate + entropy_coef * entropy
  double surrogate = 0.0;  // mean of min(rho A, clip(rho) A)
  double entropy = 0.0;    // mean policy entropy
  double clip_fraction = 0.0;
};

// Clipped surrogate with entropy bonus, averaged over the samples. Adds the
// gradient of the objective to grad when it is non-empty.
SurrogateValue surrogate_objective(const Mlp& policy, const PolicySamples& samples, double clip, double entropy_coef,
                                   std::span<double> grad = {});

// Mean squared error of the critic outputs; adds its gradient to grad when
// non-empty.
double critic_loss(const Mlp& critic, const Eigen::MatrixXd& x, std::span<const double> targets,
                   std::span<double> grad = {});

// Adam. step() moves params along +grad when ascend is set.
struct Adam {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;
  std::int64_t t = 0;

  void step(std::span<double> params, std::span<const double> grad, bool ascend);
  friend bool operator==(const Adam&, const Adam&) = default;
};

// Scales grad to at most max_norm; returns the norm before scaling.
double clip_grad_norm(std::span<double> grad, double max_norm);

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::uint32_t iteration = 0;
  Mlp policy, critic;
  Adam policy_opt, critic_opt;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string checkpoint_bytes(const Checkpoint& ck);
Checkpoint checkpoint_from_bytes(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);
// Text summary: version, config hash, iteration, layer sizes.
std::string checkpoint_manifest(const Checkpoint& ck);

}  // namespace spn
