#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Core>

namespace rowlab {

/// Per-environment outcome of one batched step. Episode statistics are valid when `done`.
struct EnvTransition {
  double reward = 0.0;
  bool done = false;
  bool time_out = false;
  bool success = false;
  double episode_return = 0.0;
  int episode_length = 0;
};

/// N independent environments with a scalar continuous action, stepped in lockstep.
/// Terminated environments reset themselves before the next observation is read.
class VectorEnv {
 public:
  virtual ~VectorEnv() = default;

  virtual int num_envs() const = 0;
  virtual int observation_size() const = 0;
  /// Actions are squashed into [-action_limit, action_limit] by the policy.
  virtual double action_limit() const = 0;

  virtual void reset(std::uint64_t seed) = 0;
  /// Writes the current observations, one column per environment.
  virtual void observations(Eigen::Ref<Eigen::MatrixXf> out) const = 0;
  virtual void step(std::span<const double> actions, std::span<EnvTransition> out) = 0;
};

}  // namespace rowlab
