#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "relucert/network.hpp"

namespace relucert {

/// Perturbation norm l_p, p in {1, 2, inf}. Distances to hyperplanes use the
/// dual norm l_q with 1/p + 1/q = 1.
enum class PNorm { L1, L2, Linf };

PNorm parse_norm(std::string_view text);
std::string to_string(PNorm p);

double norm(const Vector& v, PNorm p);
/// ||v||_q for the dual exponent of p.
double dual_norm(const Vector& v, PNorm p);

/// Axis-aligned input domain, [0,1]^d by default.
struct Box {
  Vector lower;
  Vector upper;

  static Box unit(int dim);
  bool contains(const Vector& x, double tol = 0.0) const;
  Vector clip(const Vector& x) const;
};

/// |<w,x> + b| / ||w||_q. Throws DeadPlaneError for a zero normal.
double point_hyperplane_distance(const OrientedHyperplane& h, const Vector& x, PNorm p);

/// Point on the plane achieving point_hyperplane_distance.
Vector hyperplane_projection(const OrientedHyperplane& h, const Vector& x, PNorm p);

struct PlanePoint {
  double distance = 0.0;
  Vector point;
};

/// min ||z - x||_p subject to <w,z> + b = 0 and z in the box, or nullopt when
/// the plane misses the box. Supported for p in {2, inf}; the minimiser is
/// found exactly by walking the breakpoints of the piecewise-linear dual
/// curve. The reported distance never falls below the unconstrained one.
std::optional<PlanePoint> box_constrained_distance(const OrientedHyperplane& h, const Vector& x,
                                                   PNorm p, const Box& box);

/// z(mu) = clip(x - mu * w, box): the l2 minimiser family parametrised by
/// the dual multiplier. <w, z(mu)> is nonincreasing in mu.
Vector clipped_dual_point(const Vector& x, const Vector& w, double mu, const Box& box);

/// Distance to a plane, box-constrained when a box is given and p supports
/// it; p = 1 with a box falls back to the (smaller) unconstrained distance.
/// nullopt means the plane misses the box or is dead.
std::optional<PlanePoint> reach_plane(const OrientedHyperplane& h, const Vector& x, PNorm p,
                                      const Box* box);

struct PlaneMinimum {
  double distance = 0.0;
  std::size_t index = 0;  // into the input span
  Vector point;
  std::size_t box_solves = 0;
};

/// Minimum box-constrained distance over the planes, evaluating box problems
/// lazily in ascending order of unconstrained distance. Dead and infeasible
/// planes are skipped; throws AllInfeasibleError when nothing is reachable.
PlaneMinimum min_box_distance_over_planes(std::span<const OrientedHyperplane> planes,
                                          const Vector& x, PNorm p, const Box& box);

}  // namespace relucert
