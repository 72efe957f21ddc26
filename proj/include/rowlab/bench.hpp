#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rowlab/env.hpp"
#include "rowlab/ppo.hpp"

namespace rowlab::bench {

struct TrialResult {
  double distance = 0.0;  // m, final progress along the row
  double time = 0.0;      // s, steps * dt
  bool success = false;
  std::optional<Eigen::Vector2d> collision_pose;
  int steps = 0;

  bool operator==(const TrialResult&) const = default;
};

struct Summary {
  double avg_distance = 0.0;
  double std_distance = 0.0;
  double avg_time = 0.0;
  double std_time = 0.0;
  double success_rate = 0.0;
  int trials = 0;
};

/// Mean and population standard deviation. Throws std::invalid_argument on empty input.
Summary summarize(std::span<const TrialResult> results);

/// Yaw-rate controller. `act` must be safe to call concurrently; per-trial randomness
/// comes in through `rng`.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual double act(const env::Observation& observation, std::mt19937_64& rng) const = 0;
  /// Required observation length, or 0 if the agent ignores observations.
  virtual int observation_size() const { return 0; }
  /// Scripted agents are evaluated from the nominal start pose.
  virtual bool uses_start_jitter() const { return true; }
};

/// Holds a constant yaw rate.
class ScriptedAgent final : public Agent {
 public:
  explicit ScriptedAgent(double omega) : omega_(omega) {}
  double act(const env::Observation&, std::mt19937_64&) const override { return omega_; }
  bool uses_start_jitter() const override { return false; }

 private:
  double omega_;
};

/// Samples the trained Gaussian policy, or takes its mean when deterministic.
class PolicyAgent final : public Agent {
 public:
  PolicyAgent(ppo::ActorCritic policy, bool deterministic = false)
      : policy_(std::move(policy)), deterministic_(deterministic) {}
  double act(const env::Observation& observation, std::mt19937_64& rng) const override;
  int observation_size() const override { return policy_.observation_size(); }

 private:
  ppo::ActorCritic policy_;
  bool deterministic_;
};

struct TrialOptions {
  int threads = 1;
  bool record_trajectories = false;
};

struct TrialRun {
  std::vector<TrialResult> results;
  std::vector<std::string> trajectories;  // CSV per trial when recorded
};

/// One episode per seed on `scenario` (the map is regenerated per trial when the
/// scenario asks for it). Results come back in seed order.
TrialRun run_trials(const Agent& agent, const env::Scenario& scenario,
                    std::span<const std::uint64_t> seeds, const TrialOptions& options = {});

/// Seeds base+0 .. base+n-1 mixed into independent streams.
std::vector<std::uint64_t> trial_seeds(std::uint64_t base, int count);

struct SweepSpec {
  std::vector<std::pair<double, double>> configs;  // (frequency, amplitude); (0, 0) = straight
  int trials = 15;
  double row_length = 100.0;
  std::uint64_t seed = 0;
  TrialOptions options;

  void validate() const;
  /// The ten plantation configurations of the published evaluation table.
  static SweepSpec paper();
};

struct SweepRow {
  double frequency = 0.0;
  double amplitude = 0.0;
  std::vector<TrialResult> results;
  std::vector<std::string> trajectories;
  std::optional<Summary> summary;
  std::string error;  // non-empty when the configuration could not be evaluated
};

world::RowSpec row_for(double frequency, double amplitude, double length,
                       const world::RowSpec& base);

std::vector<SweepRow> sweep(const Agent& agent, const env::Scenario& base, const SweepSpec& spec);

/// frequency_hz,amplitude_m,avg_distance_m,std_distance_m,avg_time_s,std_time_s,
/// success_rate,trials,error
std::string table_csv(std::span<const SweepRow> rows);
/// frequency_hz,amplitude_m,trial,distance_m,time_s,success
std::string distances_csv(std::span<const SweepRow> rows);
/// Box plot of per-configuration distances as a standalone SVG document.
std::string distance_boxplot_svg(std::span<const SweepRow> rows, const std::string& title);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};
/// Line chart of one or more series as a standalone SVG document.
std::string line_plot_svg(std::span<const Series> series, const std::string& title,
                          const std::string& x_label, const std::string& y_label);

/// Writes table.csv, distances.csv, plots/*.svg and trajectories/ under `dir`.
void write_sweep(const std::string& dir, std::span<const SweepRow> rows);

}  // namespace rowlab::bench
