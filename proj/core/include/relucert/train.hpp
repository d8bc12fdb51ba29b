#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "relucert/attack.hpp"
#include "relucert/dataset.hpp"
#include "relucert/error.hpp"
#include "relucert/mmr.hpp"
#include "relucert/network.hpp"

namespace relucert {

enum class AdversarialMix { Off, Half };

struct TrainConfig {
  int epochs = 10;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_drop_last_frac = 0.1;  // last fraction of epochs runs at lr / 10
  std::uint64_t seed = 0;
  AdversarialMix adversarial_mix = AdversarialMix::Off;

  void validate() const;
  double learning_rate_at(int epoch) const;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;  // mean objective over the epoch's batches
  double train_error = 0.0;
  double lambda = 0.0;
  int k_B = 0;
  double learning_rate = 0.0;
};

struct TrainResult {
  Network net;
  std::vector<EpochStats> history;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// Adam on cross-entropy + lambda * kMMR. With AdversarialMix::Half the
/// second half of every batch is replaced by PGD examples generated with
/// `attack` against the current parameters. Deterministic for a fixed seed.
TrainResult train(Network net, const Dataset& data, const MMRConfig& mmr, const TrainConfig& cfg,
                  const std::optional<AttackConfig>& attack = std::nullopt);

}  // namespace relucert
