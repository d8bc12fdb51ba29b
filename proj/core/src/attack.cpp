#include "relucert/attack.hpp"

#include <cmath>
#include <limits>

#include "relucert/error.hpp"

namespace relucert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kAlternatingRounds = 50;
constexpr double kAlternatingTol = 1e-10;

Vector random_unit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  do {
    for (int i = 0; i < dim; ++i) v(i) = normal(rng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

Vector random_in_ball(const Vector& center, double eps, PNorm p, std::mt19937_64& rng) {
  const int d = static_cast<int>(center.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (p == PNorm::Linf) {
    Vector z = center;
    for (int i = 0; i < d; ++i) z(i) += eps * (2.0 * unit(rng) - 1.0);
    return z;
  }
  // Uniform in the l2 ball; also a valid (if not uniform) start for l1.
  const double radius = eps * std::pow(unit(rng), 1.0 / d);
  Vector z = center + radius * random_unit(d, rng);
  if (p == PNorm::L1) {
    const double n = (z - center).lpNorm<1>();
    if (n > eps) z = center + (eps / n) * (z - center);
  }
  return z;
}

}  // namespace

void AttackConfig::validate() const {
  if (norm == PNorm::L1) throw ConfigError("PGD supports p = 2 and p = inf only");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be nonnegative");
  if (iters < 1) throw ConfigError("iters must be at least 1");
  if (step < 0.0) throw ConfigError("step must be positive");
  if (restarts < 1) throw ConfigError("restarts must be at least 1");
}

Vector input_gradient(const Network& net, const Vector& x, int label) {
  const ForwardTrace trace = forward(net, x);
  const double m = trace.logits.maxCoeff();
  Vector delta = (trace.logits.array() - m).exp();
  delta /= delta.sum();
  delta(label) -= 1.0;
  for (int k = net.num_hidden_layers(); k >= 1; --k) {
    Vector back = net.layer(k).weights.transpose() * delta;
    for (int j = 0; j < back.size(); ++j)
      if (!(trace.pre[k - 1](j) > 0.0)) back(j) = 0.0;
    delta = std::move(back);
  }
  return net.layer(0).weights.transpose() * delta;
}

Vector project_ball_box(const Vector& z, const Vector& center, double eps, PNorm p, const Box* box) {
  if (p == PNorm::Linf) {
    const Vector lo = center.array() - eps;
    const Vector hi = center.array() + eps;
    Vector out = z.cwiseMax(lo).cwiseMin(hi);
    return box != nullptr ? box->clip(out) : out;
  }
  if (p != PNorm::L2) throw ConfigError("ball projection supports p = 2 and p = inf only");
  auto to_ball = [&](const Vector& v) -> Vector {
    const double n = (v - center).norm();
    return n > eps ? Vector(center + (eps / n) * (v - center)) : v;
  };
  Vector out = to_ball(z);
  if (box == nullptr) return out;
  for (int round = 0; round < kAlternatingRounds; ++round) {
    const Vector clipped = box->clip(out);
    const Vector next = to_ball(clipped);
    const double moved = (next - out).norm();
    out = next;
    if (moved <= kAlternatingTol) break;
  }
  out = box->clip(out);
  // The centre lies in the box, so pulling towards it keeps box membership.
  const double n = (out - center).norm();
  if (n > eps) out = center + (eps / n) * (out - center);
  return out;
}

PgdOutcome pgd_perturb(const Network& net, const Vector& x, int label, const AttackConfig& cfg,
                       std::mt19937_64& rng) {
  cfg.validate();
  const Box* box = cfg.box ? &*cfg.box : nullptr;
  PgdOutcome outcome{x, false};
  if (argmax(logits(net, x)) != label) return {x, true};
  if (cfg.epsilon == 0.0) return outcome;
  const double step = cfg.effective_step();

  for (int restart = 0; restart < cfg.restarts; ++restart) {
    Vector z = restart == 0 ? x : project_ball_box(random_in_ball(x, cfg.epsilon, cfg.norm, rng), x, cfg.epsilon, cfg.norm, box);
    for (int it = 0; it < cfg.iters; ++it) {
      Vector g = input_gradient(net, z, label);
      Vector dir;
      if (cfg.norm == PNorm::Linf) {
        dir = g.unaryExpr([](double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); });
        if (dir.isZero()) dir = random_unit(static_cast<int>(z.size()), rng).unaryExpr([](double t) { return t >= 0.0 ? 1.0 : -1.0; });
      } else {
        const double n = g.norm();
        dir = n > 0.0 ? Vector(g / n) : random_unit(static_cast<int>(z.size()), rng);
      }
      z = project_ball_box(z + step * dir, x, cfg.epsilon, cfg.norm, box);
      if (argmax(logits(net, z)) != label) return {z, true};
    }
    outcome.point = z;
  }
  return outcome;
}

std::optional<Vector> pgd_attack(const Network& net, const Vector& x, int label, const AttackConfig& cfg,
                                 std::mt19937_64& rng) {
  PgdOutcome out = pgd_perturb(net, x, label, cfg, rng);
  if (!out.success) return std::nullopt;
  return std::move(out.point);
}

double empirical_robust_error(const Network& net, const Dataset& data, double eps, const AttackConfig& cfg) {
  if (data.empty()) return 0.0;
  AttackConfig at = cfg;
  at.epsilon = eps;
  std::mt19937_64 rng(cfg.seed);
  std::size_t broken = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (pgd_attack(net, data.inputs[i], data.labels[i], at, rng)) ++broken;
  return static_cast<double>(broken) / static_cast<double>(data.size());
}

double min_perturbation_upper_bound(const Network& net, const Vector& x, int label, const AttackConfig& base,
                                    int bisection_iters, double eps_max) {
  if (argmax(logits(net, x)) != label) return 0.0;
  if (eps_max <= 0.0) {
    eps_max = base.box ? norm(base.box->upper - base.box->lower, base.norm) : 10.0;
  }
  std::mt19937_64 rng(base.seed);
  AttackConfig cfg = base;
  cfg.step = 0.0;
  double best = kInf;
  auto attempt = [&](double eps) {
    cfg.epsilon = eps;
    if (auto adv = pgd_attack(net, x, label, cfg, rng)) {
      best = std::min(best, norm(*adv - x, cfg.norm));
      return true;
    }
    return false;
  };
  if (!attempt(eps_max)) return kInf;
  double lo = 0.0;
  double hi = eps_max;
  for (int it = 0; it < bisection_iters; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (attempt(mid)) hi = mid;
    else lo = mid;
  }
  return best;
}

}  // namespace relucert
