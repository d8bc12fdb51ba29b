#include "relucert/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include <Eigen/LU>

namespace relucert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-11;
constexpr double kEnumTol = 1e-5;
constexpr int kBisectionIters = 60;

// Constraint a.z + b <= 0 with ||a||_2 = 1.
struct Row {
  Vector a;
  double b = 0.0;
};

enum class AddResult { Added, Redundant, Infeasible };

AddResult add_row(std::vector<Row>& rows, const Vector& a, double b) {
  const double n = a.norm();
  if (n <= 1e-14) return b <= kFeasTol ? AddResult::Redundant : AddResult::Infeasible;
  rows.push_back({a / n, b / n});
  return AddResult::Added;
}

bool satisfies(const std::vector<Row>& rows, const Vector& z) {
  for (const Row& r : rows)
    if (r.a.dot(z) + r.b > kFeasTol) return false;
  return true;
}

// Euclidean projection of x onto {z : rows hold}. The projection is the
// projection onto the affine hull of some linearly independent active set
// of at most d rows, so the feasible candidate closest to x among all such
// sets is the exact answer. nullopt means the polyhedron is empty.
std::optional<Vector> project_polyhedron(const std::vector<Row>& rows, const Vector& x) {
  if (satisfies(rows, x)) return x;
  const int d = static_cast<int>(x.size());
  const int m = static_cast<int>(rows.size());
  std::optional<Vector> best;
  double best_dist = kInf;
  std::vector<int> subset;

  std::function<void(int)> extend = [&](int start) {
    if (!subset.empty()) {
      const int k = static_cast<int>(subset.size());
      Matrix A(k, d);
      Vector b(k);
      for (int i = 0; i < k; ++i) {
        A.row(i) = rows[static_cast<std::size_t>(subset[static_cast<std::size_t>(i)])].a.transpose();
        b(i) = rows[static_cast<std::size_t>(subset[static_cast<std::size_t>(i)])].b;
      }
      Eigen::FullPivLU<Matrix> lu(A * A.transpose());
      lu.setThreshold(1e-12);
      if (lu.rank() < k) return;  // dependent rows; a smaller subset covers it
      const Vector z = x - A.transpose() * lu.solve(A * x + b);
      const double dist = (z - x).norm();
      if (dist < best_dist && satisfies(rows, z)) {
        best_dist = dist;
        best = z;
      }
    }
    if (static_cast<int>(subset.size()) == d) return;
    for (int i = start; i < m; ++i) {
      subset.push_back(i);
      extend(i + 1);
      subset.pop_back();
    }
  };
  extend(0);
  return best;
}

void append_ball_rows(std::vector<Row>& rows, const Vector& x, double t, PNorm p) {
  const int d = static_cast<int>(x.size());
  if (p == PNorm::Linf) {
    for (int i = 0; i < d; ++i) {
      Vector e = Vector::Zero(d);
      e(i) = 1.0;
      rows.push_back({e, -x(i) - t});
      rows.push_back({-e, x(i) - t});
    }
    return;
  }
  // l1 ball as the 2^d halfspaces sigma.(z - x) <= t.
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int mask = 0; mask < (1 << d); ++mask) {
    Vector s(d);
    for (int i = 0; i < d; ++i) s(i) = (mask >> i) & 1 ? 1.0 : -1.0;
    rows.push_back({scale * s, scale * (-s.dot(x) - t)});
  }
}

// min ||z - x||_p over the polyhedron, skipping the solve once a lower bound
// shows it cannot beat `incumbent`.
std::optional<PlanePoint> solve_subproblem(const std::vector<Row>& rows, const Vector& x, PNorm p,
                                           double incumbent) {
  const auto z2 = project_polyhedron(rows, x);
  if (!z2) return std::nullopt;
  const double d2 = (*z2 - x).norm();
  if (p == PNorm::L2) return PlanePoint{d2, *z2};

  const double d = static_cast<double>(x.size());
  double lo = p == PNorm::Linf ? d2 / std::sqrt(d) : d2;
  Vector witness = *z2;
  double hi = norm(witness - x, p);
  if (lo >= incumbent) return PlanePoint{hi, witness};
  std::vector<Row> with_ball;
  for (int it = 0; it < kBisectionIters && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    with_ball = rows;
    append_ball_rows(with_ball, x, mid, p);
    if (const auto z = project_polyhedron(with_ball, x)) {
      witness = *z;
      hi = std::min(mid, norm(witness - x, p));
    } else {
      lo = mid;
    }
  }
  return PlanePoint{norm(witness - x, p), witness};
}

// Nudges a boundary point just past the decision boundary so that the
// network's argmax actually changes there.
Vector strict_witness(const Network& net, const Vector& x, const Vector& z, int cls, const Box* box) {
  if (argmax(logits(net, z)) != cls) return z;
  const Vector dir = z - x;
  const double n = dir.norm();
  if (n == 0.0) return z;
  for (double t = 1e-10; t <= 1e-6; t *= 10.0) {
    Vector w = z + (t / n) * dir;
    if (box != nullptr) w = box->clip(w);
    if (argmax(logits(net, w)) != cls) return w;
  }
  return z;
}

class PatternSearch {
 public:
  PatternSearch(const Network& net, const Vector& x, PNorm p, const Box* box)
      : net_(net), x_(x), p_(p), box_(box), cls_(argmax(logits(net, x))) {}

  void run() {
    const int d = static_cast<int>(x_.size());
    std::vector<Row> rows;
    if (box_ != nullptr) {
      for (int i = 0; i < d; ++i) {
        Vector e = Vector::Zero(d);
        e(i) = 1.0;
        rows.push_back({-e, box_->lower(i)});
        rows.push_back({e, -box_->upper(i)});
      }
    }
    const auto start = project_polyhedron(rows, x_);
    if (!start) return;
    descend_layer(0, Matrix::Identity(d, d), Vector::Zero(d), rows, *start);
  }

  double best() const { return best_; }
  const Vector& witness() const { return witness_; }
  int cls() const { return cls_; }

 private:
  // post_M z + post_m is the input of hidden layer `layer` on the current
  // partial region.
  void descend_layer(int layer, const Matrix& post_M, const Vector& post_m, std::vector<Row>& rows,
                     const Vector& point) {
    const Layer& W = net_.layer(layer);
    const Matrix pre_M = W.weights * post_M;
    const Vector pre_m = W.weights * post_m + W.bias;
    if (layer == net_.num_hidden_layers()) {
      solve_leaf(pre_M, pre_m, rows);
      return;
    }
    Matrix next_M = Matrix::Zero(pre_M.rows(), pre_M.cols());
    Vector next_m = Vector::Zero(pre_m.size());
    descend_unit(layer, 0, pre_M, pre_m, next_M, next_m, rows, point);
  }

  void descend_unit(int layer, int unit, const Matrix& pre_M, const Vector& pre_m, Matrix& next_M,
                    Vector& next_m, std::vector<Row>& rows, const Vector& point) {
    if (unit == pre_M.rows()) {
      descend_layer(layer + 1, next_M, next_m, rows, point);
      return;
    }
    for (const bool active : {true, false}) {
      const double sign = active ? -1.0 : 1.0;
      const std::size_t before = rows.size();
      const AddResult added = add_row(rows, sign * pre_M.row(unit).transpose(), sign * pre_m(unit));
      if (added == AddResult::Infeasible) continue;
      std::optional<Vector> inside = point;
      if (added == AddResult::Added && !satisfies(rows, point)) inside = project_polyhedron(rows, x_);
      if (inside) {
        if (active) {
          next_M.row(unit) = pre_M.row(unit);
          next_m(unit) = pre_m(unit);
        } else {
          next_M.row(unit).setZero();
          next_m(unit) = 0.0;
        }
        descend_unit(layer, unit + 1, pre_M, pre_m, next_M, next_m, rows, *inside);
      }
      rows.resize(before);
    }
  }

  void solve_leaf(const Matrix& F, const Vector& f, std::vector<Row>& rows) {
    for (int s = 0; s < F.rows(); ++s) {
      if (s == cls_) continue;
      const std::size_t before = rows.size();
      const AddResult added = add_row(rows, (F.row(cls_) - F.row(s)).transpose(), f(cls_) - f(s));
      if (added != AddResult::Infeasible) {
        if (const auto sol = solve_subproblem(rows, x_, p_, best_); sol && sol->distance < best_) {
          best_ = sol->distance;
          witness_ = sol->point;
        }
      }
      rows.resize(before);
    }
  }

  const Network& net_;
  const Vector& x_;
  PNorm p_;
  const Box* box_;
  int cls_;
  double best_ = kInf;
  Vector witness_;
};

struct Candidate {
  double distance;
  Vector point;
  bool operator<(const Candidate& other) const { return distance < other.distance; }
};

}  // namespace

OracleResult enumerate_patterns_oracle(const Network& net, const Vector& x, PNorm p, const Box* box) {
  if (x.size() != net.input_dim()) throw DimensionError("input dimension does not match the network");
  if (net.num_hidden_units() > kEnumMaxUnits)
    throw OracleBudgetExceeded("pattern enumeration needs at most " + std::to_string(kEnumMaxUnits) +
                               " hidden units");
  if (net.input_dim() > kEnumMaxDim)
    throw OracleBudgetExceeded("pattern enumeration needs input dimension at most " +
                               std::to_string(kEnumMaxDim));
  PatternSearch search(net, x, p, box);
  search.run();
  if (!std::isfinite(search.best())) throw NoAdversarialFound("no adversarial point exists");
  OracleResult result;
  result.value = search.best();
  result.witness = strict_witness(net, x, search.witness(), search.cls(), box);
  result.method = OracleMethod::PatternEnum;
  result.guarantee = OracleGuarantee::ExactWithinTol;
  result.tol = kEnumTol;
  return result;
}

OracleResult grid_oracle(const Network& net, const Vector& x, PNorm p, double radius, int resolution,
                         const Box* box, std::optional<int> label) {
  const int d = static_cast<int>(x.size());
  if (d != net.input_dim()) throw DimensionError("input dimension does not match the network");
  if (d > kGridMaxDim) throw OracleBudgetExceeded("grid oracle needs input dimension at most 3");
  if (resolution < 1) throw ConfigError("grid resolution must be at least 1");
  if (!(radius > 0.0)) throw ConfigError("grid radius must be positive");
  if (std::pow(static_cast<double>(resolution), d) > kGridMaxCells)
    throw OracleBudgetExceeded("grid exceeds 1e7 cells");

  OracleResult result;
  result.method = OracleMethod::Grid;
  result.guarantee = OracleGuarantee::UpperOnly;
  const int cls = argmax(logits(net, x));
  if (label && cls != *label) {
    result.value = 0.0;
    result.witness = x;
    return result;
  }

  Vector lo = x.array() - radius;
  Vector hi = x.array() + radius;
  if (box != nullptr) {
    lo = lo.cwiseMax(box->lower);
    hi = hi.cwiseMin(box->upper);
  }
  Vector h = resolution > 1 ? Vector((hi - lo) / (resolution - 1)) : Vector::Zero(d);

  constexpr int kRayBisections = 40;
  const std::size_t keep = d >= 3 ? 4 : 16;
  std::priority_queue<Candidate> top;  // max-heap on distance, size <= keep
  auto consider = [&](const Vector& z) {
    const double dist = norm(z - x, p);
    if (dist > radius) return;
    if (top.size() == keep && dist >= top.top().distance) return;
    if (argmax(logits(net, z)) == cls) return;
    // Pull the point back along the ray from x to the first class change,
    // which removes the lattice's offset normal to the decision boundary.
    double in = 0.0;
    double out = 1.0;
    for (int it = 0; it < kRayBisections; ++it) {
      const double mid = 0.5 * (in + out);
      if (argmax(logits(net, x + mid * (z - x))) == cls) in = mid;
      else out = mid;
    }
    top.push({out * dist, x + out * (z - x)});
    if (top.size() > keep) top.pop();
  };

  // Visits every point of a lattice with `count` points per axis.
  auto scan = [&](const Vector& origin, const Vector& step, int count) {
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    Vector z(d);
    while (true) {
      bool inside = true;
      for (int i = 0; i < d; ++i) {
        z(i) = origin(i) + step(i) * idx[static_cast<std::size_t>(i)];
        if (z(i) < lo(i) - 1e-15 || z(i) > hi(i) + 1e-15) inside = false;
      }
      if (inside) consider(z);
      int i = 0;
      while (i < d && ++idx[static_cast<std::size_t>(i)] == count) idx[static_cast<std::size_t>(i++)] = 0;
      if (i == d) break;
    }
  };

  scan(lo, h, resolution);
  if (top.empty()) throw NoAdversarialFound("no misclassified grid point within the radius");

  auto best_candidate = [&] {
    Candidate best = top.top();
    for (auto copy = top; !copy.empty(); copy.pop())
      if (copy.top().distance < best.distance) best = copy.top();
    return best;
  };

  // Each round re-centres the windows while the best point keeps improving,
  // so a thin adversarial sliver can be followed beyond one window.
  constexpr int kWindow = 2;
  constexpr int kMaxDrift = 25;
  for (int round = 0; round < kGridRefineRounds; ++round) {
    const Vector fine = h / 10.0;
    for (int pass = 0; pass < kMaxDrift; ++pass) {
      const double before = best_candidate().distance;
      std::vector<Candidate> anchors;
      for (auto copy = top; !copy.empty(); copy.pop()) anchors.push_back(copy.top());
      for (const Candidate& c : anchors) scan(c.point - kWindow * h, fine, 2 * kWindow * 10 + 1);
      if (!(best_candidate().distance < before)) break;
    }
    h = fine;
  }

  const Candidate best = best_candidate();
  result.value = best.distance;
  result.witness = best.point;
  result.tol = norm(h, p);
  return result;
}

}  // namespace relucert
