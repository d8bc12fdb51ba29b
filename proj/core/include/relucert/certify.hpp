#pragma once

#include <optional>
#include <string>

#include "relucert/dataset.hpp"
#include "relucert/geometry.hpp"
#include "relucert/network.hpp"

namespace relucert {

/// Maximum number of realised neighbouring regions visited after the
/// starting one. Flips whose witness fails are visited without using the
/// budget, up to kMaxRegions of them.
class NeighborBudget {
 public:
  static constexpr int kMaxRegions = 64;

  NeighborBudget() = default;
  explicit NeighborBudget(int max_regions);

  int max_regions() const { return max_regions_; }

 private:
  int max_regions_ = 5;
};

enum class CertStatus { CertifiedLowerBound, Exact, Misclassified, Degenerate };

std::string to_string(CertStatus status);

struct RegionDistances {
  int predicted = 0;
  ActivationPattern pattern;
  bool degenerate = false;

  double d_B = 0.0;  // +inf without region planes
  std::optional<PlaneSource> boundary_plane;

  double d_D = 0.0;  // +inf when no decision plane is reachable
  int closest_class = -1;
  Vector decision_point;  // minimiser on the closest decision plane
};

/// Distances from x to the boundary of its linear region and to the decision
/// boundary inside it, box-constrained when `box` is non-null.
RegionDistances region_distances(const Network& net, const Vector& x, PNorm p,
                                 const Box* box = nullptr, double tol = kDegeneracyTol);

struct CertifyOptions {
  PNorm norm = PNorm::L2;
  std::optional<Box> box;
  NeighborBudget budget;
  double tol = kDegeneracyTol;
};

struct Certificate {
  int point_index = 0;
  PNorm norm = PNorm::L2;
  int true_label = 0;
  int predicted_class = 0;
  double d_B = 0.0;
  double d_D = 0.0;
  double lower_bound = 0.0;
  /// Distance of the closest verified adversarial point found while
  /// certifying; +inf when none was found.
  double upper_bound = 0.0;
  bool is_exact = false;
  std::optional<Vector> minimal_perturbation;
  bool used_box = false;
  int regions_explored = 0;
  int witness_rejections = 0;
  CertStatus status = CertStatus::CertifiedLowerBound;
};

struct ExplorationResult {
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  bool exact = false;
  std::optional<Vector> minimal_perturbation;
  int regions_explored = 0;
  int witness_rejections = 0;
};

/// Best-first search over the linear regions around x. Budget 0 evaluates
/// only the region of x, which reproduces the single-region guarantee:
/// exact when d_D <= d_B, otherwise the lower bound d_B.
ExplorationResult explore_neighbors(const Network& net, const Vector& x, PNorm p, const Box* box,
                                    NeighborBudget budget, double tol = kDegeneracyTol);

Certificate certify_point(const Network& net, const Vector& x, int true_label,
                          const CertifyOptions& options, int point_index = 0);

/// Upper bound on the robust error at radius eps: the fraction of points that
/// are misclassified, degenerate, or have lower_bound < eps.
double certified_robust_error(const Network& net, const Dataset& data, double eps,
                              const CertifyOptions& options);

}  // namespace relucert
