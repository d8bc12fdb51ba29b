#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "relucert/dataset.hpp"
#include "relucert/geometry.hpp"
#include "relucert/network.hpp"

namespace relucert {

/// Regularizer settings in effect for one optimisation step.
struct MarginSettings {
  double gamma_B = 1.0;
  double gamma_D = 1.0;
  double lambda = 0.0;
  int k_B = 1;
  int k_D = 1;
  PNorm norm = PNorm::L2;
};

/// Regularizer configuration with its training schedules: lambda ramps from
/// lambda/10 to lambda over the warm-up epochs and k_B decays linearly from
/// k_B_start_frac to k_B_end_frac of the hidden units.
struct MMRConfig {
  double gamma_B = 1.0;
  double gamma_D = 1.0;
  double lambda = 0.0;
  double k_B_start_frac = 0.10;
  double k_B_end_frac = 0.02;
  int k_D = 0;  // 0 selects the number of classes
  int warmup_epochs = 10;
  PNorm norm = PNorm::L2;

  void validate() const;
  MarginSettings at_epoch(int epoch, int epochs, const Network& net) const;
};

/// Margins of 2 * eps for a target robustness radius eps.
MMRConfig mmr_defaults_for_radius(double eps, PNorm norm);

inline double hinge(double distance, double gamma) { return std::max(0.0, 1.0 - distance / gamma); }

struct ClassDistance {
  double distance;
  int cls;
};

/// (f_y - f_s) / ||V_y - V_s||_q for every s != y, ascending. Negative
/// entries mean x is on the wrong side. Planes with V_y = V_s are dropped
/// unless the logits tie, in which case they score 0.
std::vector<ClassDistance> signed_decision_distances(const AffineMap& affine, const Vector& logits,
                                                     int label, PNorm p);

/// Smallest entry of signed_decision_distances (+inf if none).
double signed_decision_distance(const AffineMap& affine, const Vector& logits, int label, PNorm p);

/// |f_j^(l)(x)| / ||V_j^(l)||_q for every live hidden unit, ascending, ties
/// broken by (layer, unit).
std::vector<double> boundary_distances(const AffineMap& affine, const ForwardTrace& trace, PNorm p);

double mmr_penalty(double d_B, double signed_d_D, double gamma_B, double gamma_D);

/// Mean hinge over the k_B closest region planes plus mean hinge over the
/// k_D closest decision planes. k is clamped to the number of available
/// distances; an empty list contributes 0.
double kmmr_penalty(std::span<const double> d_B_sorted, std::span<const double> d_D_sorted, int k_B,
                    int k_D, double gamma_B, double gamma_D);

double cross_entropy(const Vector& logits, int label);

/// CE(f(x), y) + lambda * kMMR(x) for a single point.
double point_objective(const Network& net, const Vector& x, int label, const MarginSettings& s);

/// Mean of point_objective over the batch.
double objective(const Network& net, const Dataset& batch, const MarginSettings& s);

/// Gradient with the same shapes as the network parameters.
struct ParamGradient {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;

  static ParamGradient zeros_like(const Network& net);
  double dot(const ParamGradient& other) const;
};

/// Reverse-mode gradient of `objective`, holding the activation pattern and
/// the selection of the k closest planes fixed. Degenerate points contribute
/// only their cross-entropy gradient. Writes the objective value to
/// `value` when non-null.
ParamGradient objective_gradient(const Network& net, const Dataset& batch, const MarginSettings& s,
                                 double* value = nullptr);

/// Network with parameters theta + step * direction.
Network displaced(const Network& net, const ParamGradient& direction, double step);

}  // namespace relucert
