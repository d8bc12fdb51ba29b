#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "relucert/dataset.hpp"
#include "relucert/geometry.hpp"
#include "relucert/network.hpp"

namespace relucert {

struct AttackConfig {
  PNorm norm = PNorm::L2;
  double epsilon = 0.3;
  int iters = 40;
  double step = 0.0;  // 0 selects 2 * epsilon / iters
  int restarts = 1;
  std::optional<Box> box;
  std::uint64_t seed = 0;

  double effective_step() const { return step > 0.0 ? step : 2.0 * epsilon / iters; }
  void validate() const;
};

/// Gradient of the cross-entropy at `label` with respect to the input.
Vector input_gradient(const Network& net, const Vector& x, int label);

/// Projection onto B_p(center, eps) intersected with the box. l_inf is exact
/// clipping; l2 alternates ball and box projections and finishes with a
/// radial pull towards the centre so both constraints hold.
Vector project_ball_box(const Vector& z, const Vector& center, double eps, PNorm p, const Box* box);

struct PgdOutcome {
  Vector point;  // first adversarial iterate, else the last iterate
  bool success = false;
};

/// Untargeted PGD on the cross-entropy: steps along sign(grad) for l_inf and
/// grad/||grad||_2 for l2. Restart 0 starts at x, later restarts start at a
/// uniformly random point of the ball.
PgdOutcome pgd_perturb(const Network& net, const Vector& x, int label, const AttackConfig& cfg,
                       std::mt19937_64& rng);

/// Adversarial point within the ball, or nullopt. Returns x itself when x is
/// already misclassified.
std::optional<Vector> pgd_attack(const Network& net, const Vector& x, int label, const AttackConfig& cfg,
                                 std::mt19937_64& rng);

/// Fraction of points misclassified or successfully attacked at radius eps;
/// a lower bound on the robust error.
double empirical_robust_error(const Network& net, const Dataset& data, double eps, const AttackConfig& cfg);

/// Smallest perturbation norm found by bisecting the PGD radius over
/// (0, eps_max]; 0 for misclassified points and +inf if eps_max fails.
/// eps_max <= 0 selects the box diameter (or 10 without a box).
double min_perturbation_upper_bound(const Network& net, const Vector& x, int label, const AttackConfig& base,
                                    int bisection_iters = 20, double eps_max = 0.0);

}  // namespace relucert
