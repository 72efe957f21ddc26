#include "rowlab/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <sstream>

#include "rowlab/text_io.hpp"

namespace rowlab::ppo {

namespace {

constexpr double kLogSqrtTwoPi = 0.91893853320467274178;
constexpr double kExplodingGradNorm = 1e6;
constexpr std::size_t kEpisodeWindow = 100;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double mean_of(const std::deque<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

void push_window(std::deque<double>& window, double value) {
  window.push_back(value);
  if (window.size() > kEpisodeWindow) window.pop_front();
}

}  // namespace

void PpoConfig::validate() const {
  if (!(clip > 0.0)) throw std::invalid_argument("ppo clip must be > 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("ppo learning_rate must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo gamma must be in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("ppo lambda must be in [0, 1]");
  if (!(desired_kl > 0.0)) throw std::invalid_argument("ppo desired_kl must be > 0");
  if (!(entropy_coef >= 0.0) || !(value_coef >= 0.0)) {
    throw std::invalid_argument("ppo loss coefficients must be >= 0");
  }
  if (num_envs < 1 || steps_per_env < 1) throw std::invalid_argument("ppo rollout shape must be >= 1");
  if (epochs < 1 || minibatches < 1) throw std::invalid_argument("ppo epochs/minibatches must be >= 1");
  if (batch_size() % minibatches != 0) {
    throw std::invalid_argument("ppo batch size " + std::to_string(batch_size()) +
                                " is not divisible by minibatch count " +
                                std::to_string(minibatches));
  }
  if (!(max_grad_norm > 0.0)) throw std::invalid_argument("ppo max_grad_norm must be > 0");
  if (!(init_std > 0.0)) throw std::invalid_argument("ppo init_std must be > 0");
  if (!(lr_min > 0.0) || !(lr_max >= lr_min)) throw std::invalid_argument("ppo lr bounds invalid");
  for (int h : actor_hidden) {
    if (h < 1) throw std::invalid_argument("ppo actor hidden sizes must be >= 1");
  }
  for (int h : critic_hidden) {
    if (h < 1) throw std::invalid_argument("ppo critic hidden sizes must be >= 1");
  }
}

// ---------------------------------------------------------------------------

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones, double bootstrap_value, double gamma,
              double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("gae: rewards, values and dones must have equal length");
  }
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_value = k + 1 == n ? bootstrap_value : values[k + 1];
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    running = delta + gamma * lambda * live * running;
    out.advantages[k] = running;
    out.returns[k] = running + values[k];
  }
  return out;
}

void normalize_advantages(std::span<double> advantages, double eps) {
  if (advantages.empty()) return;
  const double n = static_cast<double>(advantages.size());
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double scale = 1.0 / (std::sqrt(var / n) + eps);
  for (double& a : advantages) a = (a - mean) * scale;
}

// ---------------------------------------------------------------------------

ActorCritic::ActorCritic(int observation_size, const PpoConfig& cfg, double limit,
                         std::mt19937_64& rng)
    : log_std(static_cast<float>(std::log(cfg.init_std))), action_limit(limit) {
  std::vector<int> actor_sizes{observation_size};
  actor_sizes.insert(actor_sizes.end(), cfg.actor_hidden.begin(), cfg.actor_hidden.end());
  actor_sizes.push_back(1);
  std::vector<int> critic_sizes{observation_size};
  critic_sizes.insert(critic_sizes.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
  critic_sizes.push_back(1);
  actor = nn::Mlp<float>(actor_sizes, cfg.activation);
  critic = nn::Mlp<float>(critic_sizes, cfg.activation);
  actor.init_orthogonal(rng, std::numbers::sqrt2, 0.01);
  critic.init_orthogonal(rng, std::numbers::sqrt2, 1.0);
}

Eigen::Index ActorCritic::parameter_count() const {
  return actor.parameter_count() + critic.parameter_count() + 1;
}

Eigen::VectorXf ActorCritic::flat_parameters() const {
  Eigen::VectorXf flat(parameter_count());
  flat << actor.parameters(), critic.parameters(), log_std;
  return flat;
}

void ActorCritic::set_flat_parameters(const Eigen::VectorXf& flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("flat parameter size mismatch");
  actor.mutable_parameters() = flat.head(actor.parameter_count());
  critic.mutable_parameters() = flat.segment(actor.parameter_count(), critic.parameter_count());
  log_std = flat[flat.size() - 1];
}

double log_prob(double u, double mean, double log_std, double action_limit) {
  const double z = (u - mean) * std::exp(-log_std);
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
  const double log_jacobian =
      std::log(action_limit) + 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
  return -0.5 * z * z - log_std - kLogSqrtTwoPi - log_jacobian;
}

double gaussian_entropy(double log_std) { return 0.5 + kLogSqrtTwoPi + log_std; }

double gaussian_kl(double old_mean, double old_log_std, double new_mean, double new_log_std) {
  const double old_var = std::exp(2.0 * old_log_std);
  const double new_var = std::exp(2.0 * new_log_std);
  const double diff = old_mean - new_mean;
  return new_log_std - old_log_std + (old_var + diff * diff) / (2.0 * new_var) - 0.5;
}

// ---------------------------------------------------------------------------

SurrogateTerms clipped_surrogate(std::span<const double> ratios,
                                 std::span<const double> advantages, double clip) {
  if (ratios.size() != advantages.size() || ratios.empty()) {
    throw std::invalid_argument("clipped_surrogate: need equal, non-empty inputs");
  }
  SurrogateTerms terms;
  double total = 0.0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double r = ratios[i];
    const double a = advantages[i];
    total += std::min(r * a, std::clamp(r, 1.0 - clip, 1.0 + clip) * a);
    if (std::abs(r - 1.0) > clip) ++clipped;
  }
  const double n = static_cast<double>(ratios.size());
  terms.value = -total / n;
  terms.clip_fraction = static_cast<double>(clipped) / n;
  return terms;
}

LossResult evaluate_loss(const Minibatch& batch, std::span<const double> mean, double log_std,
                         std::span<const double> values, const PpoConfig& cfg) {
  const std::size_t m = batch.size();
  if (m == 0 || mean.size() != m || values.size() != m || batch.old_log_prob.size() != m ||
      batch.old_mean.size() != m || batch.old_log_std.size() != m ||
      batch.advantages.size() != m || batch.returns.size() != m) {
    throw std::invalid_argument("evaluate_loss: inconsistent minibatch");
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  const double inv_var = std::exp(-2.0 * log_std);

  LossResult out;
  out.grad_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  out.grad_value = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));

  std::vector<double> ratios(m);
  double kl = 0.0;
  double value_loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double u = batch.actions[i];
    // The tanh Jacobian is the same for old and new densities, so it cancels in the ratio.
    const double new_lp = log_prob(u, mean[i], log_std, 1.0);
    const double old_lp = log_prob(u, batch.old_mean[i], batch.old_log_std[i], 1.0);
    ratios[i] = std::exp(new_lp - old_lp);
    kl += gaussian_kl(batch.old_mean[i], batch.old_log_std[i], mean[i], log_std);
    const double err = values[i] - batch.returns[i];
    value_loss += err * err;
  }
  const SurrogateTerms surrogate = clipped_surrogate(ratios, batch.advantages, cfg.clip);

  double grad_log_std = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = ratios[i];
    const double a = batch.advantages[i];
    const double unclipped = r * a;
    const double clipped = std::clamp(r, 1.0 - cfg.clip, 1.0 + cfg.clip) * a;
    const double d_ratio = unclipped <= clipped ? -a * inv_m : 0.0;
    const double diff = batch.actions[i] - mean[i];
    out.grad_mean[static_cast<Eigen::Index>(i)] = d_ratio * r * diff * inv_var;
    grad_log_std += d_ratio * r * (diff * diff * inv_var - 1.0);
    out.grad_value[static_cast<Eigen::Index>(i)] =
        cfg.value_coef * 2.0 * (values[i] - batch.returns[i]) * inv_m;
  }
  out.policy_loss = surrogate.value;
  out.value_loss = value_loss * inv_m;
  out.entropy = gaussian_entropy(log_std);
  out.approx_kl = kl * inv_m;
  out.clip_fraction = surrogate.clip_fraction;
  out.grad_log_std = grad_log_std - cfg.entropy_coef;
  out.loss = out.policy_loss + cfg.value_coef * out.value_loss - cfg.entropy_coef * out.entropy;
  if (!std::isfinite(out.loss) || !out.grad_mean.allFinite() || !out.grad_value.allFinite() ||
      !std::isfinite(out.grad_log_std)) {
    std::ostringstream msg;
    msg << "non-finite PPO loss: loss=" << out.loss << " policy=" << out.policy_loss
        << " value=" << out.value_loss << " kl=" << out.approx_kl << " log_std=" << log_std;
    throw nn::NonFiniteError(msg.str());
  }
  return out;
}

LossResult surrogate_loss(const Minibatch& batch, const ActorCritic& policy,
                          const PpoConfig& cfg) {
  const Eigen::MatrixXf mean = policy.actor.forward(batch.observations);
  const Eigen::MatrixXf value = policy.critic.forward(batch.observations);
  const std::vector<double> mean_d(mean.data(), mean.data() + mean.size());
  const std::vector<double> value_d(value.data(), value.data() + value.size());
  return evaluate_loss(batch, mean_d, policy.log_std, value_d, cfg);
}

double adapt_lr(double current_lr, double approx_kl, double desired_kl, double lr_min,
                double lr_max) {
  double lr = current_lr;
  if (approx_kl > 2.0 * desired_kl) {
    lr = current_lr / 1.5;
  } else if (approx_kl < 0.5 * desired_kl && approx_kl > 0.0) {
    lr = current_lr * 1.5;
  }
  return std::clamp(lr, lr_min, lr_max);
}

// ---------------------------------------------------------------------------
// Checkpoint layout (little-endian):
//   "RLABCKPT" u32 version
//   u64 len, metadata bytes
//   mlp actor, mlp critic: u32 layers+1, i32 sizes..., u8 hidden act, u8 output act,
//                          u64 n, f32 params[n]
//   f32 log_std, f64 action_limit
//   adam: i64 step, f64 lr, f64 beta1, f64 beta2, f64 eps, u64 n, f32 m[n], f32 v[n]
//   u64 iteration, u64 env_steps

namespace {

constexpr char kCheckpointMagic[8] = {'R', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    bytes_.append(raw, sizeof(T));
  }
  void put_bytes(std::string_view data) {
    put<std::uint64_t>(data.size());
    bytes_.append(data);
  }
  void put_floats(const Eigen::VectorXf& v) {
    put<std::uint64_t>(static_cast<std::uint64_t>(v.size()));
    bytes_.append(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::size_t>(v.size()) * sizeof(float));
  }
  std::string take() { return std::move(bytes_); }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_bytes() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string out(bytes_.substr(pos_, n));
    pos_ += n;
    return out;
  }
  Eigen::VectorXf get_floats() {
    const auto n = get<std::uint64_t>();
    need(n * sizeof(float));
    Eigen::VectorXf v(static_cast<Eigen::Index>(n));
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return v;
  }
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw ParseError("truncated checkpoint", pos_);
  }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_mlp(ByteWriter& w, const nn::Mlp<float>& net) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (int s : net.layer_sizes()) w.put<std::int32_t>(s);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(net.hidden_activation()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(net.output_activation()));
  w.put_floats(net.parameters());
}

nn::Mlp<float> get_mlp(ByteReader& r) {
  const std::size_t at = r.offset();
  const auto count = r.get<std::uint32_t>();
  if (count < 2 || count > 64) throw ParseError("bad layer count in checkpoint", at);
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < count; ++i) sizes.push_back(r.get<std::int32_t>());
  const auto hidden = r.get<std::uint8_t>();
  const auto output = r.get<std::uint8_t>();
  if (hidden > 2 || output > 2) throw ParseError("bad activation in checkpoint", at);
  nn::Mlp<float> net;
  try {
    net = nn::Mlp<float>(sizes, static_cast<nn::Activation>(hidden),
                         static_cast<nn::Activation>(output));
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), at);
  }
  const std::size_t params_at = r.offset();
  Eigen::VectorXf params = r.get_floats();
  if (params.size() != net.parameter_count()) {
    throw ParseError("checkpoint parameter count does not match layer sizes", params_at);
  }
  net.mutable_parameters() = std::move(params);
  return net;
}

bool same_mlp(const nn::Mlp<float>& a, const nn::Mlp<float>& b) {
  return a.layer_sizes() == b.layer_sizes() && a.hidden_activation() == b.hidden_activation() &&
         a.output_activation() == b.output_activation() && a.parameters() == b.parameters();
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& other) const {
  return same_mlp(policy.actor, other.policy.actor) &&
         same_mlp(policy.critic, other.policy.critic) && policy.log_std == other.policy.log_std &&
         policy.action_limit == other.policy.action_limit &&
         optimizer.first_moment == other.optimizer.first_moment &&
         optimizer.second_moment == other.optimizer.second_moment &&
         optimizer.step == other.optimizer.step &&
         optimizer.learning_rate == other.optimizer.learning_rate &&
         optimizer.beta1 == other.optimizer.beta1 && optimizer.beta2 == other.optimizer.beta2 &&
         optimizer.epsilon == other.optimizer.epsilon && iteration == other.iteration &&
         env_steps == other.env_steps && metadata == other.metadata;
}

std::string encode_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  for (char ch : kCheckpointMagic) w.put<char>(ch);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_bytes(c.metadata);
  put_mlp(w, c.policy.actor);
  put_mlp(w, c.policy.critic);
  w.put<float>(c.policy.log_std);
  w.put<double>(c.policy.action_limit);
  w.put<std::int64_t>(c.optimizer.step);
  w.put<double>(c.optimizer.learning_rate);
  w.put<double>(c.optimizer.beta1);
  w.put<double>(c.optimizer.beta2);
  w.put<double>(c.optimizer.epsilon);
  w.put_floats(c.optimizer.first_moment);
  w.put_floats(c.optimizer.second_moment);
  w.put<std::uint64_t>(c.iteration);
  w.put<std::uint64_t>(c.env_steps);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  for (char ch : kCheckpointMagic) {
    if (r.get<char>() != ch) throw ParseError("not a rowlab checkpoint", 0);
  }
  if (r.get<std::uint32_t>() != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version", sizeof(kCheckpointMagic));
  }
  Checkpoint c;
  c.metadata = r.get_bytes();
  c.policy.actor = get_mlp(r);
  c.policy.critic = get_mlp(r);
  if (c.policy.actor.input_size() != c.policy.critic.input_size()) {
    throw ParseError("actor and critic input sizes differ", r.offset());
  }
  c.policy.log_std = r.get<float>();
  c.policy.action_limit = r.get<double>();
  c.optimizer.step = r.get<std::int64_t>();
  c.optimizer.learning_rate = r.get<double>();
  c.optimizer.beta1 = r.get<double>();
  c.optimizer.beta2 = r.get<double>();
  c.optimizer.epsilon = r.get<double>();
  c.optimizer.first_moment = r.get_floats();
  c.optimizer.second_moment = r.get_floats();
  if (c.optimizer.first_moment.size() != c.optimizer.second_moment.size() ||
      (c.optimizer.first_moment.size() != 0 &&
       c.optimizer.first_moment.size() != c.policy.parameter_count())) {
    throw ParseError("optimizer state does not match the policy", r.offset());
  }
  c.iteration = r.get<std::uint64_t>();
  c.env_steps = r.get<std::uint64_t>();
  if (!r.done()) throw ParseError("trailing bytes in checkpoint", r.offset());
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

// ---------------------------------------------------------------------------

std::string metrics_csv_header() {
  return "iteration,env_steps,mean_return,mean_episode_length,approx_kl,clip_fraction,"
         "learning_rate,entropy,value_loss,success_rate,episodes\n";
}

std::string metrics_csv_row(const IterationMetrics& m) {
  std::ostringstream out;
  out << m.iteration << ',' << m.env_steps << ',' << format_double(m.mean_return) << ','
      << format_double(m.mean_episode_length) << ',' << format_double(m.approx_kl) << ','
      << format_double(m.clip_fraction) << ',' << format_double(m.learning_rate) << ','
      << format_double(m.entropy) << ',' << format_double(m.value_loss) << ','
      << format_double(m.success_rate) << ',' << m.episodes << '\n';
  return out.str();
}

Trainer::Trainer(VectorEnv& envs, PpoConfig cfg, std::uint64_t seed)
    : envs_(envs), cfg_(std::move(cfg)), rng_(seed) {
  cfg_.validate();
  if (envs_.num_envs() != cfg_.num_envs) {
    throw std::invalid_argument("trainer expects " + std::to_string(cfg_.num_envs) +
                                " environments, got " + std::to_string(envs_.num_envs()));
  }
  policy_ = ActorCritic(envs_.observation_size(), cfg_, envs_.action_limit(), rng_);
  optimizer_ = nn::AdamState<float>(policy_.parameter_count(), cfg_.learning_rate);
  envs_.reset(rng_());
}

Trainer::Trainer(VectorEnv& envs, PpoConfig cfg, std::uint64_t seed, const Checkpoint& resume)
    : Trainer(envs, std::move(cfg), seed) {
  if (resume.policy.observation_size() != envs_.observation_size()) {
    throw std::invalid_argument("checkpoint observation size does not match the environment");
  }
  policy_ = resume.policy;
  if (resume.optimizer.first_moment.size() == policy_.parameter_count()) {
    optimizer_ = resume.optimizer;
  }
  iteration_ = resume.iteration;
  env_steps_ = resume.env_steps;
}

Checkpoint Trainer::checkpoint(std::string metadata) const {
  Checkpoint c;
  c.policy = policy_;
  c.optimizer = optimizer_;
  c.iteration = iteration_;
  c.env_steps = env_steps_;
  c.metadata = std::move(metadata);
  return c;
}

void Trainer::collect() {
  const int n = cfg_.num_envs;
  const int steps = cfg_.steps_per_env;
  const auto batch = static_cast<std::size_t>(cfg_.batch_size());
  const int obs_size = envs_.observation_size();

  observations_.resize(obs_size, static_cast<Eigen::Index>(batch));
  actions_.assign(batch, 0.0);
  log_probs_.assign(batch, 0.0);
  means_.assign(batch, 0.0);
  log_stds_.assign(batch, 0.0);
  rewards_.assign(batch, 0.0);
  values_.assign(batch, 0.0);
  dones_.assign(batch, 0);
  current_obs_.resize(obs_size, n);
  envs_.observations(current_obs_);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> commands(static_cast<std::size_t>(n));
  std::vector<EnvTransition> transitions(static_cast<std::size_t>(n));
  const double log_std = policy_.log_std;
  const double std_dev = std::exp(log_std);
  episodes_this_iteration_ = 0;

  for (int t = 0; t < steps; ++t) {
    const Eigen::MatrixXf mean = policy_.actor.forward(current_obs_);
    const Eigen::MatrixXf value = policy_.critic.forward(current_obs_);
    observations_.middleCols(static_cast<Eigen::Index>(t) * n, n) = current_obs_;
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(t) * static_cast<std::size_t>(n) +
                     static_cast<std::size_t>(i);
      const double mu = mean(0, i);
      const double u = mu + std_dev * normal(rng_);
      actions_[k] = u;
      means_[k] = mu;
      log_stds_[k] = log_std;
      log_probs_[k] = log_prob(u, mu, log_std, policy_.action_limit);
      values_[k] = value(0, i);
      commands[static_cast<std::size_t>(i)] = policy_.squash(u);
    }
    envs_.step(commands, transitions);
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(t) * static_cast<std::size_t>(n) +
                     static_cast<std::size_t>(i);
      const EnvTransition& tr = transitions[static_cast<std::size_t>(i)];
      double r = tr.reward;
      if (tr.time_out) r += cfg_.gamma * values_[k];
      rewards_[k] = r;
      dones_[k] = tr.done ? 1 : 0;
      if (tr.done) {
        push_window(recent_returns_, tr.episode_return);
        push_window(recent_lengths_, tr.episode_length);
        push_window(recent_success_, tr.success ? 1.0 : 0.0);
        ++episodes_this_iteration_;
      }
    }
    envs_.observations(current_obs_);
  }
  env_steps_ += batch;

  const Eigen::MatrixXf last_value = policy_.critic.forward(current_obs_);
  advantages_.assign(batch, 0.0);
  returns_.assign(batch, 0.0);
  std::vector<double> r(static_cast<std::size_t>(steps)), v(static_cast<std::size_t>(steps));
  std::vector<std::uint8_t> d(static_cast<std::size_t>(steps));
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < steps; ++t) {
      const auto k = static_cast<std::size_t>(t * n + i);
      r[static_cast<std::size_t>(t)] = rewards_[k];
      v[static_cast<std::size_t>(t)] = values_[k];
      d[static_cast<std::size_t>(t)] = dones_[k];
    }
    const GaeResult g = gae(r, v, d, last_value(0, i), cfg_.gamma, cfg_.lambda);
    for (int t = 0; t < steps; ++t) {
      const auto k = static_cast<std::size_t>(t * n + i);
      advantages_[k] = g.advantages[static_cast<std::size_t>(t)];
      returns_[k] = g.returns[static_cast<std::size_t>(t)];
    }
  }
}

IterationMetrics Trainer::update() {
  const auto batch = static_cast<std::size_t>(cfg_.batch_size());
  const std::size_t mb_size = batch / static_cast<std::size_t>(cfg_.minibatches);
  std::vector<double> advantages = advantages_;
  normalize_advantages(advantages);

  std::vector<std::size_t> order(batch);
  std::iota(order.begin(), order.end(), 0);

  IterationMetrics metrics;
  int updates = 0;
  Minibatch mb;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (int part = 0; part < cfg_.minibatches; ++part) {
      const std::size_t first = static_cast<std::size_t>(part) * mb_size;
      mb.observations.resize(observations_.rows(), static_cast<Eigen::Index>(mb_size));
      mb.actions.resize(mb_size);
      mb.old_log_prob.resize(mb_size);
      mb.old_mean.resize(mb_size);
      mb.old_log_std.resize(mb_size);
      mb.advantages.resize(mb_size);
      mb.returns.resize(mb_size);
      for (std::size_t j = 0; j < mb_size; ++j) {
        const std::size_t k = order[first + j];
        mb.observations.col(static_cast<Eigen::Index>(j)) =
            observations_.col(static_cast<Eigen::Index>(k));
        mb.actions[j] = actions_[k];
        mb.old_log_prob[j] = log_probs_[k];
        mb.old_mean[j] = means_[k];
        mb.old_log_std[j] = log_stds_[k];
        mb.advantages[j] = advantages[k];
        mb.returns[j] = returns_[k];
      }

      nn::Mlp<float>::Cache actor_cache, critic_cache;
      const Eigen::MatrixXf mean = policy_.actor.forward(mb.observations, &actor_cache);
      const Eigen::MatrixXf value = policy_.critic.forward(mb.observations, &critic_cache);
      const std::vector<double> mean_d(mean.data(), mean.data() + mean.size());
      const std::vector<double> value_d(value.data(), value.data() + value.size());

      LossResult loss;
      try {
        loss = evaluate_loss(mb, mean_d, policy_.log_std, value_d, cfg_);
      } catch (const nn::NonFiniteError& e) {
        throw TrainingAborted(e.what(), checkpoint());
      }

      if (cfg_.adaptive_lr) {
        optimizer_.learning_rate =
            adapt_lr(optimizer_.learning_rate, loss.approx_kl, cfg_.desired_kl, cfg_.lr_min,
                     cfg_.lr_max);
      }

      const Eigen::VectorXf actor_grad =
          policy_.actor.backward(actor_cache, loss.grad_mean.cast<float>().transpose());
      const Eigen::VectorXf critic_grad =
          policy_.critic.backward(critic_cache, loss.grad_value.cast<float>().transpose());
      Eigen::VectorXf grad(policy_.parameter_count());
      grad << actor_grad, critic_grad, static_cast<float>(loss.grad_log_std);

      const double norm = grad.cast<double>().norm();
      if (!std::isfinite(norm) || norm > kExplodingGradNorm) {
        throw TrainingAborted("gradient norm exploded (" + format_double(norm) + ")",
                              checkpoint());
      }
      if (norm > cfg_.max_grad_norm) grad *= static_cast<float>(cfg_.max_grad_norm / norm);

      Eigen::VectorXf params = policy_.flat_parameters();
      try {
        nn::adam_step(optimizer_, params, grad);
      } catch (const nn::NonFiniteError& e) {
        throw TrainingAborted(e.what(), checkpoint());
      }
      policy_.set_flat_parameters(params);

      metrics.approx_kl += loss.approx_kl;
      metrics.clip_fraction += loss.clip_fraction;
      metrics.entropy += loss.entropy;
      metrics.value_loss += loss.value_loss;
      ++updates;
    }
  }
  metrics.approx_kl /= updates;
  metrics.clip_fraction /= updates;
  metrics.entropy /= updates;
  metrics.value_loss /= updates;
  return metrics;
}

IterationMetrics Trainer::iterate() {
  collect();
  IterationMetrics metrics = update();
  ++iteration_;
  metrics.iteration = static_cast<int>(iteration_);
  metrics.env_steps = env_steps_;
  metrics.mean_return = mean_of(recent_returns_);
  metrics.mean_episode_length = mean_of(recent_lengths_);
  metrics.success_rate = mean_of(recent_success_);
  metrics.learning_rate = optimizer_.learning_rate;
  metrics.episodes = episodes_this_iteration_;
  return metrics;
}

TrainResult train(VectorEnv& envs, const PpoConfig& cfg, const TrainOptions& options) {
  Trainer trainer(envs, cfg, options.seed);
  TrainResult result;
  for (int it = 0; it < options.iterations; ++it) {
    result.metrics.push_back(trainer.iterate());
    if (options.on_iteration) options.on_iteration(result.metrics.back(), trainer);
  }
  result.checkpoint = trainer.checkpoint();
  return result;
}

}  // namespace rowlab::ppo
