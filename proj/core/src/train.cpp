#include "relucert/train.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace relucert {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(lr_drop_last_frac >= 0.0 && lr_drop_last_frac <= 1.0))
    throw ConfigError("lr_drop_last_frac must lie in [0, 1]");
}

double TrainConfig::learning_rate_at(int epoch) const {
  const int dropped = static_cast<int>(std::floor(lr_drop_last_frac * epochs));
  return epoch >= epochs - dropped ? learning_rate / 10.0 : learning_rate;
}

namespace {

class Adam {
 public:
  Adam(const Network& net, const TrainConfig& cfg)
      : m_(ParamGradient::zeros_like(net)), v_(ParamGradient::zeros_like(net)), cfg_(cfg) {}

  void step(Network& net, const ParamGradient& g, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (int l = 0; l < net.num_layers(); ++l) {
      Layer& layer = net.mutable_layer(l);
      update(layer.weights, m_.weights[l], v_.weights[l], g.weights[l], lr, c1, c2);
      update(layer.bias, m_.bias[l], v_.bias[l], g.bias[l], lr, c1, c2);
    }
  }

 private:
  template <typename T>
  void update(T& param, T& m, T& v, const T& g, double lr, double c1, double c2) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.adam_eps);
  }

  ParamGradient m_;
  ParamGradient v_;
  const TrainConfig& cfg_;
  int t_ = 0;
};

}  // namespace

TrainResult train(Network net, const Dataset& data, const MMRConfig& mmr, const TrainConfig& cfg,
                  const std::optional<AttackConfig>& attack) {
  cfg.validate();
  mmr.validate();
  if (data.empty()) throw ConfigError("training set is empty");
  if (cfg.adversarial_mix == AdversarialMix::Half && !attack)
    throw ConfigError("adversarial mixing needs an attack configuration");

  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 attack_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam(net, cfg);
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with an explicit draw keeps runs reproducible across
    // standard library implementations.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    const MarginSettings settings = mmr.at_epoch(epoch, cfg.epochs, net);
    const double lr = cfg.learning_rate_at(epoch);
    double loss_sum = 0.0;
    int batches = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Dataset batch;
      for (std::size_t i = start; i < end; ++i) batch.add(data.inputs[order[i]], data.labels[order[i]]);
      if (cfg.adversarial_mix == AdversarialMix::Half) {
        for (std::size_t i = batch.size() / 2; i < batch.size(); ++i)
          batch.inputs[i] = pgd_perturb(net, batch.inputs[i], batch.labels[i], *attack, attack_rng).point;
      }
      double value = 0.0;
      const ParamGradient grad = objective_gradient(net, batch, settings, &value);
      if (!std::isfinite(value)) throw TrainingDiverged("loss became non-finite in epoch " + std::to_string(epoch));
      adam.step(net, grad, lr);
      loss_sum += value;
      ++batches;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / batches;
    stats.train_error = clean_error(net, data);
    stats.lambda = settings.lambda;
    stats.k_B = settings.k_B;
    stats.learning_rate = lr;
    result.history.push_back(stats);
  }
  result.net = std::move(net);
  return result;
}

}  // namespace relucert
