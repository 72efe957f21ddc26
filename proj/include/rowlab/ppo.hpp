#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rowlab/nn.hpp"
#include "rowlab/vector_env.hpp"

namespace rowlab::ppo {

struct PpoConfig {
  double clip = 0.2;
  double learning_rate = 1e-3;
  bool adaptive_lr = true;
  double gamma = 0.99;
  double lambda = 0.95;
  double desired_kl = 0.01;
  double entropy_coef = 0.005;
  double value_coef = 1.0;
  int num_envs = 128;
  int steps_per_env = 32;   // num_envs * steps_per_env = rollout batch (4096)
  int epochs = 5;
  int minibatches = 4;
  double max_grad_norm = 1.0;
  double init_std = 0.5;    // on the pre-tanh action; 1.0 drives the policy to bang-bang steering
  double lr_min = 1e-5;
  double lr_max = 1e-2;
  std::vector<int> actor_hidden{512, 256, 128};
  std::vector<int> critic_hidden{512, 256, 128};
  nn::Activation activation = nn::Activation::kElu;

  int batch_size() const { return num_envs * steps_per_env; }
  void validate() const;
};

// --- advantage estimation --------------------------------------------------------------

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Generalized advantage estimation over one environment's transitions. `dones[k] != 0`
/// means the episode ended after step k, so nothing beyond it is bootstrapped.
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones, double bootstrap_value, double gamma,
              double lambda);

/// In-place (a - mean) / (std + eps) with the population standard deviation.
void normalize_advantages(std::span<double> advantages, double eps = 1e-8);

// --- policy ----------------------------------------------------------------------------

/// Gaussian over the pre-squash action u; the applied command is limit * tanh(u).
/// The standard deviation is a state-independent learned parameter.
class ActorCritic {
 public:
  ActorCritic() = default;
  ActorCritic(int observation_size, const PpoConfig& cfg, double action_limit,
              std::mt19937_64& rng);

  nn::Mlp<float> actor;
  nn::Mlp<float> critic;
  float log_std = 0.0f;
  double action_limit = 1.0;

  int observation_size() const { return actor.input_size(); }
  Eigen::Index parameter_count() const;
  /// [actor params, critic params, log_std]
  Eigen::VectorXf flat_parameters() const;
  void set_flat_parameters(const Eigen::VectorXf& flat);

  double squash(double u) const { return action_limit * std::tanh(u); }
};

/// log density of command limit * tanh(u) when u ~ N(mean, exp(log_std)^2).
double log_prob(double u, double mean, double log_std, double action_limit);
double gaussian_entropy(double log_std);
/// KL(old || new) between 1-D Gaussians.
double gaussian_kl(double old_mean, double old_log_std, double new_mean, double new_log_std);

// --- loss ------------------------------------------------------------------------------

struct SurrogateTerms {
  double value = 0.0;          // -mean(min(r A, clip(r) A))
  double clip_fraction = 0.0;  // share of |r - 1| > clip
};

SurrogateTerms clipped_surrogate(std::span<const double> ratios,
                                 std::span<const double> advantages, double clip);

/// Samples of one minibatch, stored at collection time.
struct Minibatch {
  Eigen::MatrixXf observations;  // observation_size x M
  std::vector<double> actions;   // pre-squash u
  std::vector<double> old_log_prob;
  std::vector<double> old_mean;
  std::vector<double> old_log_std;
  std::vector<double> advantages;  // already normalized
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
};

struct LossResult {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  /// d loss / d network outputs
  Eigen::VectorXd grad_mean;
  Eigen::VectorXd grad_value;
  double grad_log_std = 0.0;
};

/// loss = policy surrogate + value_coef * mean((R - V)^2) - entropy_coef * entropy,
/// evaluated from the current network outputs. Throws nn::NonFiniteError on NaN/Inf.
LossResult evaluate_loss(const Minibatch& batch, std::span<const double> mean, double log_std,
                         std::span<const double> values, const PpoConfig& cfg);

/// Runs the networks on the minibatch and evaluates the loss.
LossResult surrogate_loss(const Minibatch& batch, const ActorCritic& policy,
                          const PpoConfig& cfg);

/// KL-targeting learning-rate schedule.
double adapt_lr(double current_lr, double approx_kl, double desired_kl, double lr_min = 1e-5,
                double lr_max = 1e-2);

// --- checkpoints ----------------------------------------------------------------------

struct Checkpoint {
  ActorCritic policy;
  nn::AdamState<float> optimizer;
  std::uint64_t iteration = 0;
  std::uint64_t env_steps = 0;
  std::string metadata;  // effective run configuration, free text

  bool operator==(const Checkpoint& other) const;
};

/// Versioned little-endian binary dump; round-trips exactly.
std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// --- training --------------------------------------------------------------------------

struct IterationMetrics {
  int iteration = 0;
  std::uint64_t env_steps = 0;
  double mean_return = 0.0;
  double mean_episode_length = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double learning_rate = 0.0;
  double entropy = 0.0;
  double value_loss = 0.0;
  double success_rate = 0.0;
  int episodes = 0;  // finished during this iteration
};

std::string metrics_csv_header();
std::string metrics_csv_row(const IterationMetrics& m);

/// Training stopped on a NaN loss or exploding gradient. Carries the last good state.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, Checkpoint last_good)
      : std::runtime_error(what), checkpoint_(std::move(last_good)) {}
  const Checkpoint& checkpoint() const { return checkpoint_; }

 private:
  Checkpoint checkpoint_;
};

/// Collect -> GAE -> minibatch epochs -> learning-rate adaptation, one call per iteration.
/// The policy is frozen during collection; all randomness comes from `seed`.
class Trainer {
 public:
  Trainer(VectorEnv& envs, PpoConfig cfg, std::uint64_t seed);
  Trainer(VectorEnv& envs, PpoConfig cfg, std::uint64_t seed, const Checkpoint& resume);

  IterationMetrics iterate();

  const ActorCritic& policy() const { return policy_; }
  const PpoConfig& config() const { return cfg_; }
  Checkpoint checkpoint(std::string metadata = {}) const;

 private:
  void collect();
  IterationMetrics update();

  VectorEnv& envs_;
  PpoConfig cfg_;
  std::mt19937_64 rng_;
  ActorCritic policy_;
  nn::AdamState<float> optimizer_;
  std::uint64_t iteration_ = 0;
  std::uint64_t env_steps_ = 0;

  // Rollout storage, column t * num_envs + i.
  Eigen::MatrixXf observations_;
  std::vector<double> actions_, log_probs_, means_, log_stds_, rewards_, values_;
  std::vector<std::uint8_t> dones_;
  std::vector<double> advantages_, returns_;
  Eigen::MatrixXf current_obs_;

  std::deque<double> recent_returns_, recent_lengths_, recent_success_;
  int episodes_this_iteration_ = 0;
};

struct TrainOptions {
  int iterations = 1;
  std::uint64_t seed = 0;
  /// Called after every iteration with the trainer state.
  std::function<void(const IterationMetrics&, const Trainer&)> on_iteration;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<IterationMetrics> metrics;
};

TrainResult train(VectorEnv& envs, const PpoConfig& cfg, const TrainOptions& options);

}  // namespace rowlab::ppo
