#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "rowlab/env.hpp"
#include "rowlab/text_io.hpp"

using namespace rowlab;
using namespace rowlab::env;

namespace {

Scenario straight_scenario(double length, bool jitter) {
  Scenario s;
  s.row = world::RowSpec::straight(length, 5);
  if (!jitter) {
    s.env.start_lateral_jitter = 0.0;
    s.env.start_heading_jitter_deg = 0.0;
  }
  return s;
}

RobotState at_rest(double last_omega = 0.0) {
  RobotState s;
  s.last_omega = last_omega;
  return s;
}

}  // namespace

TEST_CASE("unicycle integration") {
  const RobotState s0;
  const RobotState s1 = step_dynamics(s0, 0.0, 0.1);
  CHECK(s1.position.x() == doctest::Approx(0.05635).epsilon(1e-15));
  CHECK(s1.position.y() == 0.0);
  CHECK(s1.heading == 0.0);
  const RobotState s2 = step_dynamics(s0, 1.0, 0.1);
  CHECK(s2.heading == 0.1);
  CHECK(s2.last_omega == 1.0);
  CHECK_THROWS_AS(step_dynamics(s0, std::numeric_limits<double>::quiet_NaN(), 0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(step_dynamics(s0, std::numeric_limits<double>::infinity(), 0.1),
                  std::invalid_argument);

  // Full circle at small dt returns to the starting heading.
  const double omega = 1.0, dt = 1e-4;
  RobotState s = s0;
  const int steps = static_cast<int>(std::llround(2 * std::numbers::pi / omega / dt));
  for (int i = 0; i < steps; ++i) s = step_dynamics(s, omega, dt);
  CHECK(std::abs(wrap_angle(s.heading - s0.heading)) <= omega * dt / 2);
  CHECK(s.position.norm() < 1e-3);

  // Constant speed: every step moves exactly v * dt.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> w(-1.5, 1.5);
  s = s0;
  for (int i = 0; i < 1000; ++i) {
    const RobotState n = step_dynamics(s, w(rng), 0.1);
    CHECK((n.position - s.position).norm() == doctest::Approx(0.05635).epsilon(1e-12));
    CHECK(n.heading > -std::numbers::pi);
    CHECK(n.heading <= std::numbers::pi);
    s = n;
  }
}

TEST_CASE("reward worked examples") {
  const RewardConfig cfg;
  const RobotState prev = at_rest();
  CHECK(reward(prev, prev, 0.0, false, cfg, 0.1) == doctest::Approx(0.28175).epsilon(1e-14));
  CHECK(reward(prev, prev, 1.5, true, cfg, 0.1) == -1.0);
  CHECK(reward(at_rest(-1.0), prev, 1.0, true, cfg, 0.1) == -1.0);
  CHECK(reward(prev, prev, std::sqrt(2.25 / 2), false, cfg, 0.1) ==
        doctest::Approx(0.140875).epsilon(1e-13));
}

TEST_CASE("reward bounds and penalty monotonicity") {
  const RewardConfig cfg;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> w(-1.5, 1.5);
  const double top = 5.0 * 0.5635 * 0.1;
  for (int i = 0; i < 20000; ++i) {
    const double last = w(rng), a = w(rng), b = w(rng);
    const bool hit = i % 3 == 0;
    const double ra = reward(at_rest(last), at_rest(), a, hit, cfg, 0.1);
    const double rb = reward(at_rest(last), at_rest(), b, hit, cfg, 0.1);
    CHECK(ra >= -1.0);
    CHECK(ra <= top);
    if (std::abs(a - last) <= std::abs(b - last)) {
      CHECK(ra >= rb);
    } else {
      CHECK(ra <= rb);
    }
  }
}

TEST_CASE("reset places the robot") {
  CropRowEnv env(straight_scenario(10.0, false));
  const Observation& obs = env.reset({1, 2, 3});
  CHECK(env.state().position == Eigen::Vector2d(0, 0));
  CHECK(env.state().heading == 0.0);
  CHECK(obs.history_length == 3);
  CHECK(obs.data.size() == 2700);
  CHECK(obs.frame(0).size() == 900);
  for (int i = 1; i < 3; ++i) {
    CHECK(std::equal(obs.frame(i).begin(), obs.frame(i).end(), obs.frame(0).begin()));
  }

  Scenario curved;
  curved.env.start_lateral_jitter = 0.0;
  curved.env.start_heading_jitter_deg = 0.0;
  CropRowEnv curved_env(curved);
  curved_env.reset({4, 5, 6});
  CHECK(curved_env.state().heading ==
        doctest::Approx(std::atan(0.2 * 2 * std::numbers::pi * 1.8 / 10.0)));

  CropRowEnv a(straight_scenario(10.0, true)), b(straight_scenario(10.0, true));
  CHECK(a.reset({7, 8, 9}) == b.reset({7, 8, 9}));
  CHECK(a.state().position == b.state().position);
}

TEST_CASE("seeded resets start collision-free") {
  Scenario s;  // curved training row with full plant jitter
  CropRowEnv env(s);
  double max_lateral = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    env.reset(episode_seeds(11, 0, k));
    CHECK_FALSE(world::collides(env.state().pose(), s.env.footprint, env.map()));
    max_lateral = std::max(max_lateral, std::abs(env.state().position.y()));
  }
  CHECK(max_lateral > 0.01);
}

TEST_CASE("straight driving completes a 10 m row in 178 steps") {
  CropRowEnv env(straight_scenario(10.0, false));
  env.reset({1, 2, 3});
  StepResult r;
  int steps = 0;
  double total = 0.0;
  do {
    r = env.step(0.0);
    total += r.reward;
    ++steps;
  } while (!r.terminated);
  CHECK(steps == static_cast<int>(std::ceil(10.0 / 0.5635 / 0.1)));
  CHECK(steps == 178);
  CHECK(r.info.success);
  CHECK_FALSE(r.info.collided);
  CHECK_FALSE(r.info.time_out);
  CHECK(r.info.progress == 10.0);
  CHECK(total == doctest::Approx(178 * 0.28175));
  CHECK(env.episode_return() == doctest::Approx(total));
  CHECK_THROWS_AS(env.step(0.0), std::logic_error);
}

TEST_CASE("driving into a plant terminates with the collision penalty") {
  CropRowEnv env(straight_scenario(10.0, false));
  env.reset({1, 2, 3});
  StepResult r;
  int steps = 0;
  do {
    r = env.step(1.5);
    ++steps;
  } while (!r.terminated && steps < 200);
  CHECK(r.terminated);
  CHECK(r.info.collided);
  CHECK_FALSE(r.info.success);
  CHECK(r.reward <= 0.28175 - 1.0 + 1e-12);
  CHECK(r.info.progress < 2.0);
}

TEST_CASE("commands are clamped and the time limit ends episodes") {
  Scenario s = straight_scenario(10.0, false);
  s.env.time_limit_factor = 0.1;  // 1.77 s
  CropRowEnv env(s);
  env.reset({1, 2, 3});
  StepResult r = env.step(100.0);
  CHECK(env.state().last_omega == 1.5);
  CHECK(env.state().heading == doctest::Approx(0.15));
  env.reset({1, 2, 3});
  int steps = 0;
  do {
    r = env.step(0.0);
    ++steps;
  } while (!r.terminated);
  CHECK(r.info.time_out);
  CHECK_FALSE(r.info.collided);
  CHECK(steps == 18);
  CHECK_THROWS_AS(CropRowEnv(s).step(0.0), std::logic_error);
}

TEST_CASE("observation history stacks the latest maps") {
  Scenario s;
  CropRowEnv env(s);
  env.reset({3, 4, 5});
  const std::vector<float> m0 = env.last_row_map().cells;
  env.step(0.3);
  const std::vector<float> m1 = env.last_row_map().cells;
  env.step(-0.2);
  const std::vector<float> m2 = env.last_row_map().cells;
  const Observation& obs = env.observation();
  CHECK(std::vector<float>(obs.frame(0).begin(), obs.frame(0).end()) == m0);
  CHECK(std::vector<float>(obs.frame(1).begin(), obs.frame(1).end()) == m1);
  CHECK(std::vector<float>(obs.frame(2).begin(), obs.frame(2).end()) == m2);
  CHECK(m0 != m2);
}

TEST_CASE("raw-cloud observations") {
  Scenario s;
  s.env.observation = ObservationMode::kRawCloud;
  s.env.history_length = 1;
  CHECK(s.observation_size() == 21600);
  CropRowEnv env(s);
  const Observation& obs = env.reset({1, 2, 3});
  REQUIRE(obs.data.size() == 21600);
  const auto& cloud = env.last_cloud();
  REQUIRE(cloud.size() > 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto slot = static_cast<std::size_t>(cloud.ray_index[i]) * 3;
    CHECK(obs.data[slot] == static_cast<float>(cloud.points[i].x() / 10.0));
    CHECK(obs.data[slot + 2] == static_cast<float>(cloud.points[i].z() / 10.0));
  }
  std::size_t nonzero = 0;
  for (float v : obs.data) nonzero += v != 0.0f ? 1 : 0;
  CHECK(nonzero <= 3 * cloud.size());
}

TEST_CASE("batched stepping equals sequential stepping") {
  Scenario s;
  s.row = world::RowSpec::sinusoidal(1.8, 0.2, 2.0);  // short rows: several resets
  const std::uint64_t seed = 99;
  for (int threads : {1, 3}) {
    CropRowVecEnv batch(s, 8, seed, threads);
    std::vector<CropRowEnv> solo(8, CropRowEnv(s));
    std::vector<std::uint64_t> episode(8, 0);
    for (int i = 0; i < 8; ++i) solo[i].reset(episode_seeds(seed, i, 0));
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> w(-1.5, 1.5);
    int resets = 0;
    for (int t = 0; t < 60; ++t) {
      std::vector<double> actions(8);
      for (double& a : actions) a = w(rng);
      const auto results = batch.step_batch(actions);
      for (int i = 0; i < 8; ++i) {
        const StepResult expected = solo[i].step(actions[i]);
        CHECK(results[i].reward == expected.reward);
        CHECK(results[i].terminated == expected.terminated);
        CHECK(results[i].observation == expected.observation);
        if (expected.terminated) {
          solo[i].reset(episode_seeds(seed, i, ++episode[i]));
          ++resets;
        }
        CHECK(batch.env(i).observation() == solo[i].observation());
      }
    }
    CHECK(resets > 8);
  }
  CropRowVecEnv batch(s, 2, 1);
  CHECK_THROWS_AS(batch.step_batch(std::vector<double>{0.0}), std::invalid_argument);
}

TEST_CASE("a single-env batch equals the plain environment") {
  Scenario s;
  CropRowVecEnv batch(s, 1, 5);
  CropRowEnv env(s);
  env.reset(episode_seeds(5, 0, 0));
  for (int t = 0; t < 30; ++t) {
    const double w = 0.05 * t - 0.7;
    const auto r = batch.step_batch(std::vector<double>{w});
    const auto e = env.step(w);
    CHECK(r[0].reward == e.reward);
    CHECK(r[0].observation == e.observation);
    if (e.terminated) break;
  }
}

TEST_CASE("vector interface yields 4096 transitions per rollout") {
  Scenario s;
  CropRowVecEnv envs(s, 128, 1);
  CHECK(envs.observation_size() == 2700);
  CHECK(envs.action_limit() == 1.5);
  Eigen::MatrixXf obs(2700, 128);
  std::vector<EnvTransition> out(128);
  std::vector<double> actions(128, 0.0);
  int transitions = 0, finished = 0;
  std::vector<bool> seen(128, false);
  for (int t = 0; t < 32; ++t) {
    envs.observations(obs);
    envs.step(actions, out);
    transitions += static_cast<int>(out.size());
    for (const auto& tr : out) {
    }
    for (int i = 0; i < 128; ++i) {
      if (!out[i].done) continue;
      ++finished;
      if (!seen[i]) CHECK(out[i].episode_length == t + 1);
      seen[i] = true;
    }
  }
  CHECK(transitions == 4096);
  CHECK(finished > 0);  // straight driving leaves the curved row within 32 steps
  Eigen::MatrixXf wrong(10, 128);
  CHECK_THROWS_AS(envs.observations(wrong), std::invalid_argument);
}

TEST_CASE("trajectory log") {
  TrajectoryLog log;
  RobotState s;
  log.record(0, 0.0, s, 0.0, 0.0, 0.0, false);
  s = step_dynamics(s, 0.5, 0.1);
  log.record(1, 0.1, s, 0.5, 0.28, 0.05635, true);
  const std::string csv = log.csv();
  CHECK(csv.rfind("step,t,x,y,theta,omega,reward,progress,collided\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  const std::string row = "1,0.1," + format_double(s.position.x()) + "," +
                          format_double(s.position.y()) + ",0.05,0.5,0.28,0.05635,1\n";
  CHECK(csv.find(row) != std::string::npos);
}
