#include "relucert/certify.hpp"

#include <cmath>
#include <limits>
#include <queue>
#include <unordered_set>
#include <vector>

#include "relucert/error.hpp"

namespace relucert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Relative push used to confirm that a decision-boundary point flips the class.
constexpr double kVerifyPush = 1e-6;
// Absolute push across a region face when testing that a flip is realised.
constexpr double kWitnessPush = 1e-7;

bool verify_adversarial(const Network& net, const Vector& x, const Vector& z, int cls) {
  const Vector pushed = x + (1.0 + kVerifyPush) * (z - x);
  return is_adversarial(logits(net, pushed), cls);
}

}  // namespace

NeighborBudget::NeighborBudget(int max_regions) : max_regions_(max_regions) {
  if (max_regions < 0 || max_regions > kMaxRegions)
    throw ConfigError("neighbor budget must lie in [0, " + std::to_string(kMaxRegions) + "]");
}

std::string to_string(CertStatus status) {
  switch (status) {
    case CertStatus::CertifiedLowerBound: return "CERTIFIED_LB";
    case CertStatus::Exact: return "EXACT";
    case CertStatus::Misclassified: return "MISCLASSIFIED";
    case CertStatus::Degenerate: return "DEGENERATE";
  }
  return "?";
}

double clean_error(const Network& net, const Dataset& data) {
  if (data.empty()) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (argmax(logits(net, data.inputs[i])) != data.labels[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

RegionDistances region_distances(const Network& net, const Vector& x, PNorm p, const Box* box,
                                 double tol) {
  const ForwardTrace trace = forward(net, x);
  RegionDistances out;
  out.predicted = trace.predicted();
  out.pattern = activation_pattern(trace, tol);
  out.degenerate = out.pattern.any_degenerate();
  const AffineMap affine = affine_coefficients(net, out.pattern);

  const auto region = region_hyperplanes(affine, out.pattern);
  out.d_B = kInf;
  if (box != nullptr && p != PNorm::L1) {
    bool any_live = false;
    for (const auto& h : region) any_live = any_live || !h.dead;
    if (any_live) {
      try {
        const PlaneMinimum best = min_box_distance_over_planes(region, x, p, *box);
        out.d_B = best.distance;
        out.boundary_plane = region[best.index].source;
      } catch (const AllInfeasibleError&) {
      }
    }
  } else {
    for (const auto& h : region) {
      if (h.dead) continue;
      const double d = point_hyperplane_distance(h, x, p);
      if (d < out.d_B) {
        out.d_B = d;
        out.boundary_plane = h.source;
      }
    }
  }

  out.d_D = kInf;
  for (const auto& h : decision_hyperplanes(affine, out.predicted)) {
    if (h.dead) {
      // Constant logit gap inside the region: on the boundary only when tied.
      if (h.offset == 0.0 && out.d_D > 0.0) {
        out.d_D = 0.0;
        out.closest_class = h.source.cls;
        out.decision_point = x;
      }
      continue;
    }
    auto hit = reach_plane(h, x, p, box);
    if (hit && hit->distance < out.d_D) {
      out.d_D = hit->distance;
      out.closest_class = h.source.cls;
      out.decision_point = std::move(hit->point);
    }
  }
  return out;
}

namespace {

struct FrontierEntry {
  double key;
  std::size_t seq;
  bool lazy;  // key is the unconstrained distance; box distance still pending
  ActivationPattern target;
  OrientedHyperplane plane;  // oriented as in the parent region
  double parent_key;
  Vector point;  // closest point on the plane (valid when !lazy)
};

struct EntryOrder {
  bool operator()(const FrontierEntry& a, const FrontierEntry& b) const {
    if (a.key != b.key) return a.key > b.key;
    return a.seq > b.seq;
  }
};

class RegionSearch {
 public:
  RegionSearch(const Network& net, const Vector& x, PNorm p, const Box* box, int cls)
      : net_(net), x_(x), p_(p), box_(box), cls_(cls) {}

  // Adds the region's decision information and its faces to the frontier.
  // entry_key lower-bounds the distance from x to any point of the region.
  void visit(const ActivationPattern& pattern, double entry_key) {
    explored_.insert(pattern.key());
    const AffineMap affine = affine_coefficients(net_, pattern);

    for (const auto& h : decision_hyperplanes(affine, cls_)) {
      double reach = kInf;
      if (h.dead) {
        reach = h.offset <= 0.0 ? 0.0 : kInf;
      } else if (h.value(x_) < 0.0) {
        // x is on the competitor's side of this region's affine extension.
        reach = 0.0;
      } else if (auto hit = reach_plane(h, x_, p_, box_)) {
        reach = hit->distance;
        const bool in_box = box_ == nullptr || box_->contains(hit->point, 1e-12);
        if (in_box && hit->distance < upper_ && verify_adversarial(net_, x_, hit->point, cls_)) {
          upper_ = hit->distance;
          best_point_ = hit->point;
        }
      }
      lower_explored_ = std::min(lower_explored_, std::max(entry_key, reach));
    }

    for (auto& h : region_hyperplanes(affine, pattern)) {
      if (h.dead) continue;
      ActivationPattern target = pattern;
      target.flip(h.source.layer, h.source.unit);
      if (explored_.contains(target.key())) continue;
      const double unconstrained = point_hyperplane_distance(h, x_, p_);
      const bool lazy = box_ != nullptr && p_ != PNorm::L1;
      FrontierEntry entry{std::max(entry_key, unconstrained), seq_++, lazy, std::move(target),
                          std::move(h), entry_key, Vector()};
      if (!lazy) entry.point = hyperplane_projection(entry.plane, x_, p_);
      frontier_.push(std::move(entry));
    }
  }

  // Smallest live frontier key; resolves pending box distances on the way.
  double next_key() {
    while (!frontier_.empty()) {
      const FrontierEntry& top = frontier_.top();
      if (explored_.contains(top.target.key())) {
        frontier_.pop();
        continue;
      }
      if (!top.lazy) return top.key;
      FrontierEntry entry = top;
      frontier_.pop();
      auto hit = box_constrained_distance(entry.plane, x_, p_, *box_);
      if (!hit) continue;  // the face lies outside the box
      entry.key = std::max(entry.parent_key, hit->distance);
      entry.point = std::move(hit->point);
      entry.lazy = false;
      frontier_.push(std::move(entry));
    }
    return kInf;
  }

  FrontierEntry pop() {
    FrontierEntry entry = frontier_.top();
    frontier_.pop();
    return entry;
  }

  bool realised(const FrontierEntry& entry, double tol) const {
    const Vector& n = entry.plane.normal;
    const Vector witness = entry.point - (entry.plane.orientation * kWitnessPush / n.norm()) * n;
    if (box_ != nullptr && !box_->contains(witness)) return false;
    return activation_pattern(forward(net_, witness), tol) == entry.target;
  }

  double upper() const { return upper_; }
  double lower_explored() const { return lower_explored_; }
  const Vector& best_point() const { return best_point_; }

 private:
  const Network& net_;
  const Vector& x_;
  PNorm p_;
  const Box* box_;
  int cls_;
  std::priority_queue<FrontierEntry, std::vector<FrontierEntry>, EntryOrder> frontier_;
  std::unordered_set<std::string> explored_;
  std::size_t seq_ = 0;
  double upper_ = kInf;
  double lower_explored_ = kInf;
  Vector best_point_;
};

}  // namespace

ExplorationResult explore_neighbors(const Network& net, const Vector& x, PNorm p, const Box* box,
                                    NeighborBudget budget, double tol) {
  const ForwardTrace trace = forward(net, x);
  const int cls = trace.predicted();
  RegionSearch search(net, x, p, box, cls);
  search.visit(activation_pattern(trace, tol), 0.0);

  ExplorationResult result;
  while (true) {
    const double bound = std::min(search.next_key(), search.lower_explored());
    if (std::isfinite(search.upper()) && search.upper() <= bound) {
      result.exact = true;
      result.lower_bound = search.upper();
      result.upper_bound = search.upper();
      result.minimal_perturbation = search.best_point() - x;
      return result;
    }
    if (result.regions_explored >= budget.max_regions() || !std::isfinite(search.next_key())) {
      result.lower_bound = bound;
      result.upper_bound = search.upper();
      return result;
    }
    if (result.witness_rejections >= NeighborBudget::kMaxRegions) {
      result.lower_bound = bound;
      result.upper_bound = search.upper();
      return result;
    }
    FrontierEntry entry = search.pop();
    // Unrealised patterns are still visited, since the witness only probes
    // one point of the face, but they do not use up the budget.
    if (search.realised(entry, tol)) ++result.regions_explored;
    else ++result.witness_rejections;
    search.visit(entry.target, entry.key);
  }
}

Certificate certify_point(const Network& net, const Vector& x, int true_label,
                          const CertifyOptions& options, int point_index) {
  const Box* box = options.box ? &*options.box : nullptr;
  if (box != nullptr && !box->contains(x, 1e-12)) throw DimensionError("point lies outside the box");
  const RegionDistances rd = region_distances(net, x, options.norm, box, options.tol);

  Certificate cert;
  cert.point_index = point_index;
  cert.norm = options.norm;
  cert.true_label = true_label;
  cert.predicted_class = rd.predicted;
  cert.d_B = rd.d_B;
  cert.d_D = rd.d_D;
  cert.used_box = box != nullptr;
  cert.upper_bound = kInf;

  if (rd.predicted != true_label) {
    cert.status = CertStatus::Misclassified;
    cert.lower_bound = 0.0;
    cert.upper_bound = 0.0;
    return cert;
  }
  if (rd.degenerate) {
    cert.status = CertStatus::Degenerate;
    cert.lower_bound = 0.0;
    return cert;
  }

  const ExplorationResult ex = explore_neighbors(net, x, options.norm, box, options.budget, options.tol);
  cert.lower_bound = ex.lower_bound;
  cert.upper_bound = ex.upper_bound;
  cert.is_exact = ex.exact;
  cert.minimal_perturbation = ex.minimal_perturbation;
  cert.regions_explored = ex.regions_explored;
  cert.witness_rejections = ex.witness_rejections;
  cert.status = ex.exact ? CertStatus::Exact : CertStatus::CertifiedLowerBound;
  return cert;
}

double certified_robust_error(const Network& net, const Dataset& data, double eps,
                              const CertifyOptions& options) {
  if (data.empty()) return 0.0;
  std::size_t uncertified = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Certificate cert = certify_point(net, data.inputs[i], data.labels[i], options, static_cast<int>(i));
    const bool ok = cert.status == CertStatus::CertifiedLowerBound || cert.status == CertStatus::Exact;
    if (!ok || cert.lower_bound < eps) ++uncertified;
  }
  return static_cast<double>(uncertified) / static_cast<double>(data.size());
}

}  // namespace relucert
