#include "relucert/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "relucert/error.hpp"

namespace relucert {

PNorm parse_norm(std::string_view text) {
  if (text == "1" || text == "l1") return PNorm::L1;
  if (text == "2" || text == "l2") return PNorm::L2;
  if (text == "inf" || text == "linf" || text == "Inf") return PNorm::Linf;
  throw ConfigError("unsupported norm '" + std::string(text) + "' (expected 1, 2 or inf)");
}

std::string to_string(PNorm p) {
  switch (p) {
    case PNorm::L1: return "1";
    case PNorm::L2: return "2";
    case PNorm::Linf: return "inf";
  }
  return "?";
}

double norm(const Vector& v, PNorm p) {
  switch (p) {
    case PNorm::L1: return v.lpNorm<1>();
    case PNorm::L2: return v.norm();
    case PNorm::Linf: return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

double dual_norm(const Vector& v, PNorm p) {
  switch (p) {
    case PNorm::L1: return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
    case PNorm::L2: return v.norm();
    case PNorm::Linf: return v.lpNorm<1>();
  }
  return 0.0;
}

Box Box::unit(int dim) { return Box{Vector::Zero(dim), Vector::Ones(dim)}; }

bool Box::contains(const Vector& x, double tol) const {
  return ((x - lower).array() >= -tol).all() && ((upper - x).array() >= -tol).all();
}

Vector Box::clip(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

double point_hyperplane_distance(const OrientedHyperplane& h, const Vector& x, PNorm p) {
  if (h.dead) throw DeadPlaneError();
  const double q = dual_norm(h.normal, p);
  if (q == 0.0) throw DeadPlaneError();
  return std::abs(h.value(x)) / q;
}

Vector hyperplane_projection(const OrientedHyperplane& h, const Vector& x, PNorm p) {
  if (h.dead) throw DeadPlaneError();
  const double s = h.value(x);
  const Vector& w = h.normal;
  switch (p) {
    case PNorm::L2: {
      const double sq = w.squaredNorm();
      if (sq == 0.0) throw DeadPlaneError();
      return x - (s / sq) * w;
    }
    case PNorm::Linf: {
      const double l1 = w.lpNorm<1>();
      if (l1 == 0.0) throw DeadPlaneError();
      const double r = s / l1;
      Vector z = x;
      for (int i = 0; i < w.size(); ++i) {
        if (w(i) > 0.0) z(i) -= r;
        else if (w(i) < 0.0) z(i) += r;
      }
      return z;
    }
    case PNorm::L1: {
      int k = 0;
      for (int i = 1; i < w.size(); ++i)
        if (std::abs(w(i)) > std::abs(w(k))) k = i;
      if (w(k) == 0.0) throw DeadPlaneError();
      Vector z = x;
      z(k) -= s / w(k);
      return z;
    }
  }
  return x;
}

Vector clipped_dual_point(const Vector& x, const Vector& w, double mu, const Box& box) {
  return box.clip(x - mu * w);
}

namespace {

// Coordinates move away from x towards the plane. Moving coordinate i by its
// parameter t reduces the oriented plane value at rate alpha_i until the box
// face is hit at parameter cap_i; the total decrease is
// D(t) = sum_i alpha_i * min(t, cap_i), piecewise linear and nondecreasing.
struct Breakpoint {
  double cap;
  double alpha;
};

// Smallest t with D(t) = target, or nullopt if sup D < target.
std::optional<double> solve_piecewise(std::vector<Breakpoint> bps, double target) {
  std::sort(bps.begin(), bps.end(), [](const Breakpoint& a, const Breakpoint& b) { return a.cap < b.cap; });
  double slope = 0.0;
  double reach = 0.0;
  for (const auto& bp : bps) {
    slope += bp.alpha;
    reach += bp.alpha * bp.cap;
  }
  if (reach < target * (1.0 - 1e-12)) return std::nullopt;
  double t = 0.0;
  double value = 0.0;
  for (const auto& bp : bps) {
    if (slope <= 0.0) break;
    const double next = value + slope * (bp.cap - t);
    if (next >= target) return t + (target - value) / slope;
    value = next;
    t = bp.cap;
    slope -= bp.alpha;
  }
  return t;  // rounding left the target marginally above the reachable sum
}

}  // namespace

std::optional<PlanePoint> box_constrained_distance(const OrientedHyperplane& h, const Vector& x,
                                                   PNorm p, const Box& box) {
  if (h.dead) throw DeadPlaneError();
  if (p == PNorm::L1) throw ConfigError("box-constrained distance is not supported for p = 1");
  const double unconstrained = point_hyperplane_distance(h, x, p);
  const double s = h.value(x);
  if (s == 0.0) return PlanePoint{0.0, x};

  // Orient so that the plane value must decrease by |s|.
  const Vector w = (s > 0.0 ? 1.0 : -1.0) * h.normal;
  const double target = std::abs(s);
  std::vector<Breakpoint> bps;
  bps.reserve(static_cast<std::size_t>(w.size()));
  for (int i = 0; i < w.size(); ++i) {
    if (w(i) == 0.0) continue;
    const double room = w(i) > 0.0 ? x(i) - box.lower(i) : box.upper(i) - x(i);
    const double aw = std::abs(w(i));
    if (p == PNorm::Linf) bps.push_back({std::max(room, 0.0), aw});
    else bps.push_back({std::max(room, 0.0) / aw, aw * aw});
  }
  const auto t = solve_piecewise(std::move(bps), target);
  if (!t) return std::nullopt;

  Vector z = x;
  for (int i = 0; i < w.size(); ++i) {
    if (w(i) == 0.0) continue;
    const double sign = w(i) > 0.0 ? 1.0 : -1.0;
    const double step = p == PNorm::Linf ? *t : *t * std::abs(w(i));
    z(i) -= sign * step;
  }
  z = box.clip(z);
  return PlanePoint{std::max(unconstrained, norm(z - x, p)), std::move(z)};
}

std::optional<PlanePoint> reach_plane(const OrientedHyperplane& h, const Vector& x, PNorm p,
                                      const Box* box) {
  if (h.dead) return std::nullopt;
  if (box != nullptr && p != PNorm::L1) return box_constrained_distance(h, x, p, *box);
  return PlanePoint{point_hyperplane_distance(h, x, p), hyperplane_projection(h, x, p)};
}

PlaneMinimum min_box_distance_over_planes(std::span<const OrientedHyperplane> planes,
                                          const Vector& x, PNorm p, const Box& box) {
  struct Entry {
    double distance;
    std::size_t index;
  };
  std::vector<Entry> order;
  order.reserve(planes.size());
  for (std::size_t i = 0; i < planes.size(); ++i)
    if (!planes[i].dead) order.push_back({point_hyperplane_distance(planes[i], x, p), i});
  std::sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  });

  PlaneMinimum best;
  best.distance = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const Entry& e : order) {
    if (found && best.distance <= e.distance) break;
    ++best.box_solves;
    auto hit = box_constrained_distance(planes[e.index], x, p, box);
    if (hit && hit->distance < best.distance) {
      best.distance = hit->distance;
      best.index = e.index;
      best.point = std::move(hit->point);
      found = true;
    }
  }
  if (!found) throw AllInfeasibleError();
  return best;
}

}  // namespace relucert
