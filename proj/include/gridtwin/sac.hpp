#pragma once

// Soft actor-critic battery agent: tanh-Gaussian actor, twin critics with
// target copies, uniform replay and a fixed temperature. During the first
// `exploration_steps` environment steps actions come from a reference
// rule-based controller instead of random sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridtwin/env.hpp"
#include "gridtwin/nn.hpp"
#include "gridtwin/rbc.hpp"

namespace gridtwin {

struct SacHyperparams {
  double tau{0.05};
  double gamma{0.9};
  double learning_rate{0.005};
  double temperature{0.2};
  std::size_t batch_size{256};
  std::size_t buffer_capacity{100'000};
  std::size_t exploration_steps{3'671};
  std::size_t episodes{10};
  std::vector<int> hidden_layers{256, 256};

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("discount must be in [0, 1]");
    if (!(temperature >= 0.0 && temperature <= 1.0)) throw std::invalid_argument("temperature must be in [0, 1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("decay rate must be in [0, 1]");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
    if (batch_size == 0 || buffer_capacity == 0) throw std::invalid_argument("batch size and buffer capacity must be > 0");
    if (hidden_layers.empty()) throw std::invalid_argument("at least one hidden layer is required");
  }
};

inline void to_json(nlohmann::json& j, const SacHyperparams& h) {
  j = {{"tau", h.tau},
       {"gamma", h.gamma},
       {"learning_rate", h.learning_rate},
       {"temperature", h.temperature},
       {"batch_size", h.batch_size},
       {"buffer_capacity", h.buffer_capacity},
       {"exploration_steps", h.exploration_steps},
       {"episodes", h.episodes},
       {"hidden_layers", h.hidden_layers}};
}

inline void from_json(const nlohmann::json& j, SacHyperparams& h) {
  const SacHyperparams d{};
  h.tau = j.value("tau", d.tau);
  h.gamma = j.value("gamma", d.gamma);
  h.learning_rate = j.value("learning_rate", d.learning_rate);
  h.temperature = j.value("temperature", d.temperature);
  h.batch_size = j.value("batch_size", d.batch_size);
  h.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
  h.exploration_steps = j.value("exploration_steps", d.exploration_steps);
  h.episodes = j.value("episodes", d.episodes);
  h.hidden_layers = j.value("hidden_layers", d.hidden_layers);
}

struct Transition {
  Observation observation{};
  double action{0.0};
  double reward{0.0};
  Observation next_observation{};
  bool done{false};
};

/// Fixed-capacity FIFO of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100'000) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("replay capacity must be > 0");
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  void clear() {
    data_.clear();
    next_ = 0;
  }

  void store(const Transition& t) {
    if (data_.size() < capacity_) {
      data_.push_back(t);
    } else {
      data_[next_] = t;
    }
    next_ = (next_ + 1) % capacity_;
  }

  /// Transition at age-ordered position i (0 = oldest).
  const Transition& oldest(std::size_t i) const {
    return data_.size() < capacity_ ? data_.at(i) : data_.at((next_ + i) % capacity_);
  }
  const Transition& at(std::size_t slot) const { return data_.at(slot); }

  /// `count` distinct slots drawn uniformly without replacement.
  std::vector<std::size_t> sample_indices(std::size_t count, nn::Rng& rng) const {
    if (count > data_.size()) throw std::invalid_argument("sample larger than buffer");
    // Floyd's algorithm.
    std::vector<std::size_t> out;
    out.reserve(count);
    std::unordered_set<std::size_t> seen;
    const std::size_t n = data_.size();
    for (std::size_t j = n - count; j < n; ++j) {
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
      if (seen.insert(t).second)
        out.push_back(t);
      else {
        seen.insert(j);
        out.push_back(j);
      }
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> data_;
  std::size_t next_{0};
};

enum class ActionMode { RbcGuided, Stochastic, Deterministic };

/// Inputs a rule-based controller needs to act for one building-hour.
struct RbcContext {
  RbcStrategy strategy;
  int hour{0};
  double net_export_kwh{0.0};
  BatteryState battery;
};

struct UpdateStats {
  double critic1_loss{0.0};
  double critic2_loss{0.0};
  double actor_loss{0.0};
  double mean_log_prob{0.0};
};

class SacAgent {
 public:
  static constexpr double kLogStdMin = -20.0;
  static constexpr double kLogStdMax = 2.0;

  explicit SacAgent(SacHyperparams hp = {}, std::uint64_t seed = 0, int observation_size = kObservationSize)
      : hp_(std::move(hp)), rng_(seed), buffer_(hp_.buffer_capacity) {
    hp_.validate();
    std::vector<int> actor_sizes{observation_size};
    std::vector<int> critic_sizes{observation_size + 1};
    for (int w : hp_.hidden_layers) {
      actor_sizes.push_back(w);
      critic_sizes.push_back(w);
    }
    actor_sizes.push_back(2);
    critic_sizes.push_back(1);
    using nn::Activation;
    actor_ = nn::DenseNet(actor_sizes, Activation::Relu, Activation::Identity, rng_);
    critic1_ = nn::DenseNet(critic_sizes, Activation::Relu, Activation::Identity, rng_);
    critic2_ = nn::DenseNet(critic_sizes, Activation::Relu, Activation::Identity, rng_);
    target1_ = critic1_;
    target2_ = critic2_;
    actor_opt_ = nn::AdamState(actor_, hp_.learning_rate);
    critic1_opt_ = nn::AdamState(critic1_, hp_.learning_rate);
    critic2_opt_ = nn::AdamState(critic2_, hp_.learning_rate);
  }

  const SacHyperparams& hyperparams() const { return hp_; }
  const nn::DenseNet& actor() const { return actor_; }
  const nn::DenseNet& critic1() const { return critic1_; }
  const nn::DenseNet& critic2() const { return critic2_; }
  const nn::DenseNet& target1() const { return target1_; }
  const nn::DenseNet& target2() const { return target2_; }
  nn::DenseNet& actor() { return actor_; }
  nn::DenseNet& critic1() { return critic1_; }
  nn::DenseNet& critic2() { return critic2_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::size_t step_count() const { return steps_; }
  void count_step() { ++steps_; }
  bool exploring() const { return steps_ < hp_.exploration_steps; }

  /// tanh(mean) of the actor; a pure function of the observation.
  double deterministic_action(const Observation& o) const {
    const nn::Vector out = actor_.forward_one(as_vector(o));
    return std::tanh(out(0));
  }

  double select_action(const Observation& o, ActionMode mode, const RbcContext* rbc = nullptr) {
    switch (mode) {
      case ActionMode::RbcGuided:
        if (!rbc) throw std::invalid_argument("RBC-guided action needs an RBC context");
        return rbc_action(rbc->strategy, rbc->hour, rbc->net_export_kwh, rbc->battery);
      case ActionMode::Deterministic:
        return deterministic_action(o);
      case ActionMode::Stochastic: {
        const nn::Vector out = actor_.forward_one(as_vector(o));
        const double log_std = std::clamp(out(1), kLogStdMin, kLogStdMax);
        const double u = out(0) + std::exp(log_std) * gauss_(rng_);
        return std::tanh(u);
      }
    }
    return 0.0;
  }

  void store(const Transition& t) { buffer_.store(t); }

  /// One gradient step on critics and actor plus a soft target update.
  /// Returns nullopt while the buffer holds fewer than batch_size samples.
  std::optional<UpdateStats> update() {
    const std::size_t batch = hp_.batch_size;
    if (buffer_.size() < batch) return std::nullopt;
    const auto idx = buffer_.sample_indices(batch, rng_);
    const Eigen::Index obs_n = actor_.input_size();
    const auto bsz = static_cast<Eigen::Index>(batch);
    const double inv_b = 1.0 / static_cast<double>(batch);

    nn::Matrix sa(obs_n + 1, bsz), next(obs_n, bsz);
    nn::Vector reward(bsz), not_done(bsz);
    for (Eigen::Index k = 0; k < bsz; ++k) {
      const auto& t = buffer_.at(idx[static_cast<std::size_t>(k)]);
      for (Eigen::Index i = 0; i < obs_n; ++i) {
        sa(i, k) = t.observation[static_cast<std::size_t>(i)];
        next(i, k) = t.next_observation[static_cast<std::size_t>(i)];
      }
      sa(obs_n, k) = t.action;
      reward(k) = t.reward;
      not_done(k) = t.done ? 0.0 : 1.0;
    }

    UpdateStats stats;
    const double temp = hp_.temperature;

    // Critic targets.
    nn::Vector target_q(bsz);
    {
      const Sample s = sample_policy(actor_.forward(next), nullptr);
      nn::Matrix next_sa(obs_n + 1, bsz);
      next_sa.topRows(obs_n) = next;
      next_sa.row(obs_n) = s.action.transpose();
      const nn::Matrix q1 = target1_.forward(next_sa), q2 = target2_.forward(next_sa);
      for (Eigen::Index k = 0; k < bsz; ++k) {
        const double soft_v = std::min(q1(0, k), q2(0, k)) - temp * s.log_prob(k);
        target_q(k) = reward(k) + hp_.gamma * not_done(k) * soft_v;
      }
    }

    auto fit_critic = [&](nn::DenseNet& critic, nn::AdamState& opt) {
      nn::DenseNet::Tape tape;
      const nn::Matrix q = critic.forward(sa, tape);
      const nn::Matrix err = q - target_q.transpose();
      const auto g = critic.backward(tape, err * inv_b);
      nn::optimizer_step(opt, critic, g);
      return 0.5 * err.squaredNorm() * inv_b;
    };
    stats.critic1_loss = fit_critic(critic1_, critic1_opt_);
    stats.critic2_loss = fit_critic(critic2_, critic2_opt_);

    // Actor: minimize mean(T * log_prob - min(Q1, Q2)) via reparameterization.
    {
      const nn::Matrix obs_batch = sa.topRows(obs_n);
      nn::DenseNet::Tape actor_tape;
      const nn::Matrix head = actor_.forward(obs_batch, actor_tape);
      nn::Vector noise(bsz);
      const Sample s = sample_policy(head, &noise);
      nn::Matrix new_sa(obs_n + 1, bsz);
      new_sa.topRows(obs_n) = obs_batch;
      new_sa.row(obs_n) = s.action.transpose();
      nn::DenseNet::Tape t1, t2;
      const nn::Matrix q1 = critic1_.forward(new_sa, t1), q2 = critic2_.forward(new_sa, t2);
      nn::Matrix d1 = nn::Matrix::Zero(1, bsz), d2 = nn::Matrix::Zero(1, bsz);
      double loss = 0.0;
      for (Eigen::Index k = 0; k < bsz; ++k) {
        const bool first = q1(0, k) <= q2(0, k);
        (first ? d1 : d2)(0, k) = -inv_b;
        loss += (temp * s.log_prob(k) - std::min(q1(0, k), q2(0, k))) * inv_b;
      }
      nn::Matrix g_in1, g_in2;
      critic1_.backward(t1, d1, &g_in1, false);
      critic2_.backward(t2, d2, &g_in2, false);

      nn::Matrix d_head = nn::Matrix::Zero(2, bsz);
      for (Eigen::Index k = 0; k < bsz; ++k) {
        const double a = s.action(k);
        const double dl_da = g_in1(obs_n, k) + g_in2(obs_n, k);
        // d log_prob / du through the tanh Jacobian term is 2a.
        const double dl_du = dl_da * (1.0 - a * a) + temp * inv_b * 2.0 * a;
        d_head(0, k) = dl_du;
        if (s.log_std_active[static_cast<std::size_t>(k)]) d_head(1, k) = dl_du * s.std(k) * noise(k) - temp * inv_b;
      }
      const auto g = actor_.backward(actor_tape, d_head);
      nn::optimizer_step(actor_opt_, actor_, g);
      stats.actor_loss = loss;
      stats.mean_log_prob = s.log_prob.mean();
    }

    nn::soft_update(target1_, critic1_, hp_.tau);
    nn::soft_update(target2_, critic2_, hp_.tau);
    return stats;
  }

  /// Copies all networks and optimizer states from `source`, clears the
  /// replay buffer and skips the RBC-guided exploration phase.
  friend void transfer_policy(const SacAgent& source, SacAgent& target) {
    if (!source.actor_.same_architecture(target.actor_) || !source.critic1_.same_architecture(target.critic1_))
      throw std::invalid_argument("transfer_policy: architecture mismatch");
    target.actor_ = source.actor_;
    target.critic1_ = source.critic1_;
    target.critic2_ = source.critic2_;
    target.target1_ = source.target1_;
    target.target2_ = source.target2_;
    target.actor_opt_ = source.actor_opt_;
    target.critic1_opt_ = source.critic1_opt_;
    target.critic2_opt_ = source.critic2_opt_;
    target.buffer_.clear();
    target.steps_ = target.hp_.exploration_steps;
  }

  friend void to_json(nlohmann::json& j, const SacAgent& a) {
    j["hyperparams"] = a.hp_;
    j["actor"] = a.actor_;
    j["critic1"] = a.critic1_;
    j["critic2"] = a.critic2_;
    j["target1"] = a.target1_;
    j["target2"] = a.target2_;
    j["step_count"] = a.steps_;
  }

  /// Rebuilds an agent from its serialized networks (optimizer moments and
  /// replay contents are not persisted).
  static SacAgent from_json(const nlohmann::json& j, std::uint64_t seed = 0) {
    SacAgent a(j.at("hyperparams").get<SacHyperparams>(), seed,
               j.at("actor").at("architecture").at("sizes").front().get<int>());
    a.actor_ = j.at("actor").get<nn::DenseNet>();
    a.critic1_ = j.at("critic1").get<nn::DenseNet>();
    a.critic2_ = j.at("critic2").get<nn::DenseNet>();
    a.target1_ = j.at("target1").get<nn::DenseNet>();
    a.target2_ = j.at("target2").get<nn::DenseNet>();
    a.actor_opt_ = nn::AdamState(a.actor_, a.hp_.learning_rate);
    a.critic1_opt_ = nn::AdamState(a.critic1_, a.hp_.learning_rate);
    a.critic2_opt_ = nn::AdamState(a.critic2_, a.hp_.learning_rate);
    a.steps_ = j.value("step_count", a.hp_.exploration_steps);
    return a;
  }

 private:
  struct Sample {
    nn::Vector action, log_prob, std;
    std::vector<bool> log_std_active;
  };

  static nn::Vector as_vector(const Observation& o) {
    return Eigen::Map<const nn::Vector>(o.data(), static_cast<Eigen::Index>(o.size()));
  }

  // Draws tanh-squashed Gaussian actions for a batch of actor outputs.
  Sample sample_policy(const nn::Matrix& head, nn::Vector* noise_out) {
    const Eigen::Index n = head.cols();
    Sample s{nn::Vector(n), nn::Vector(n), nn::Vector(n), std::vector<bool>(static_cast<std::size_t>(n))};
    if (noise_out) noise_out->resize(n);
    static const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double raw = head(1, k);
      const double log_std = std::clamp(raw, kLogStdMin, kLogStdMax);
      s.log_std_active[static_cast<std::size_t>(k)] = raw > kLogStdMin && raw < kLogStdMax;
      const double sd = std::exp(log_std);
      const double eps = gauss_(rng_);
      const double u = head(0, k) + sd * eps;
      const double a = std::tanh(u);
      // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
      const double log_jac = 2.0 * (std::numbers::ln2 - u - std::log1p(std::exp(-2.0 * u)));
      const double log_jac_stable = u < -20.0 ? 2.0 * (std::numbers::ln2 + u) : log_jac;
      s.action(k) = a;
      s.std(k) = sd;
      s.log_prob(k) = -0.5 * eps * eps - log_std - kHalfLog2Pi - log_jac_stable;
      if (noise_out) (*noise_out)(k) = eps;
    }
    return s;
  }

  SacHyperparams hp_;
  nn::Rng rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  nn::DenseNet actor_, critic1_, critic2_, target1_, target2_;
  nn::AdamState actor_opt_, critic1_opt_, critic2_opt_;
  ReplayBuffer buffer_;
  std::size_t steps_{0};
};

struct TrainResult {
  std::vector<double> episode_rewards;  // reward sum of each episode
  std::vector<double> net_kwh;          // last episode, per hour
  std::vector<double> battery_kwh;      // last episode, per hour
  std::vector<TraceRow> trace;          // last episode
};

/// Runs `episodes` episodes of building `b` in `env` (other buildings idle).
/// With learn, actions come from the RBC during exploration and then from
/// the stochastic policy, with one update per step. Without learn, the
/// deterministic policy runs and the agent is left untouched.
inline TrainResult train(SacAgent& agent, DistrictEnv& env, std::size_t b, std::size_t episodes, bool learn,
                         const RbcStrategy& reference = RbcStrategy::tou_peak_reduction()) {
  TrainResult result;
  std::vector<double> actions(env.building_count(), 0.0);
  const auto& bd = env.community().buildings.at(b);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    auto observations = env.reset();
    Observation o = observations[b];
    double total = 0.0;
    const bool last = ep + 1 == episodes;
    if (last) {
      result.net_kwh.clear();
      result.battery_kwh.clear();
      result.trace.clear();
    }
    while (!env.done()) {
      const std::size_t h = env.hour();
      double a = 0.0;
      if (!learn) {
        a = agent.deterministic_action(o);
      } else if (agent.exploring()) {
        const RbcContext ctx{reference, env.hour_of_day(h), bd.pv_generation[h] - bd.non_shiftable[h], env.battery(b)};
        a = agent.select_action(o, ActionMode::RbcGuided, &ctx);
      } else {
        a = agent.select_action(o, ActionMode::Stochastic);
      }
      actions[b] = a;
      const auto step = env.step(actions);
      const auto& r = step.buildings[b];
      total += r.reward;
      if (learn) {
        agent.store({o, a, r.reward, r.observation, step.done});
        agent.count_step();
        agent.update();
      }
      if (last) {
        result.net_kwh.push_back(r.net_kwh);
        result.battery_kwh.push_back(r.battery_kwh);
        result.trace.push_back({h, bd.id, a, r.battery_kwh, r.soc, r.net_kwh, r.reward});
      }
      o = r.observation;
    }
    result.episode_rewards.push_back(total);
  }
  return result;
}

}  // namespace gridtwin
