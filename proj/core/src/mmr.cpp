#include "relucert/mmr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "relucert/error.hpp"

namespace relucert {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct RegionTerm {
  double distance;
  int layer;
  int unit;
  double pre;  // f_j^(l)(x)
  double den;  // ||V_j^(l)||_q
};

struct DecisionTerm {
  double distance;
  int cls;
  double gap;  // f_y - f_s
  double den;  // ||V_y - V_s||_q, 0 for a tied dead plane
};

std::vector<RegionTerm> region_terms(const AffineMap& affine, const ForwardTrace& trace, PNorm p) {
  std::vector<RegionTerm> terms;
  for (std::size_t l = 0; l < trace.pre.size(); ++l) {
    const Matrix& V = affine.V[l];
    for (int j = 0; j < V.rows(); ++j) {
      const double den = dual_norm(V.row(j).transpose(), p);
      if (den == 0.0) continue;
      const double pre = trace.pre[l](j);
      terms.push_back({std::abs(pre) / den, static_cast<int>(l), j, pre, den});
    }
  }
  std::sort(terms.begin(), terms.end(), [](const RegionTerm& a, const RegionTerm& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.unit < b.unit;
  });
  return terms;
}

std::vector<DecisionTerm> decision_terms(const AffineMap& affine, const Vector& logits, int label,
                                         PNorm p) {
  const Matrix& V = affine.output_matrix();
  if (label < 0 || label >= V.rows()) throw DimensionError("label out of range");
  std::vector<DecisionTerm> terms;
  for (int s = 0; s < V.rows(); ++s) {
    if (s == label) continue;
    const double gap = logits(label) - logits(s);
    const double den = dual_norm((V.row(label) - V.row(s)).transpose(), p);
    if (den == 0.0) {
      if (gap == 0.0) terms.push_back({0.0, s, gap, 0.0});
      continue;
    }
    terms.push_back({gap / den, s, gap, den});
  }
  std::sort(terms.begin(), terms.end(), [](const DecisionTerm& a, const DecisionTerm& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.cls < b.cls);
  });
  return terms;
}

// Subgradient of ||v||_q with respect to v.
Vector dual_norm_gradient(const Vector& v, PNorm p) {
  switch (p) {
    case PNorm::L2: return v / v.norm();
    case PNorm::Linf:  // q = 1
      return v.unaryExpr([](double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); });
    case PNorm::L1: {  // q = inf
      Vector g = Vector::Zero(v.size());
      int k = 0;
      for (int i = 1; i < v.size(); ++i)
        if (std::abs(v(i)) > std::abs(v(k))) k = i;
      g(k) = v(k) > 0.0 ? 1.0 : -1.0;
      return g;
    }
  }
  return Vector::Zero(v.size());
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

}  // namespace

void MMRConfig::validate() const {
  if (!(gamma_B > 0.0) || !(gamma_D > 0.0)) throw ConfigError("gamma_B and gamma_D must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (!(k_B_end_frac > 0.0 && k_B_end_frac <= k_B_start_frac && k_B_start_frac <= 1.0))
    throw ConfigError("need 0 < k_B_end_frac <= k_B_start_frac <= 1");
  if (k_D < 0) throw ConfigError("k_D must be positive (0 selects the class count)");
  if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be nonnegative");
}

MarginSettings MMRConfig::at_epoch(int epoch, int epochs, const Network& net) const {
  MarginSettings s;
  s.gamma_B = gamma_B;
  s.gamma_D = gamma_D;
  s.norm = norm;
  const double ramp = warmup_epochs > 0 ? std::min(1.0, static_cast<double>(epoch) / warmup_epochs) : 1.0;
  s.lambda = lambda * (0.1 + 0.9 * ramp);
  const double progress = epochs > 1 ? static_cast<double>(epoch) / (epochs - 1) : 1.0;
  const double frac = k_B_start_frac + (k_B_end_frac - k_B_start_frac) * std::clamp(progress, 0.0, 1.0);
  s.k_B = std::max(1, static_cast<int>(std::lround(frac * net.num_hidden_units())));
  s.k_D = k_D > 0 ? k_D : net.num_classes();
  return s;
}

MMRConfig mmr_defaults_for_radius(double eps, PNorm norm) {
  MMRConfig cfg;
  cfg.gamma_B = 2.0 * eps;
  cfg.gamma_D = 2.0 * eps;
  cfg.norm = norm;
  return cfg;
}

std::vector<ClassDistance> signed_decision_distances(const AffineMap& affine, const Vector& logits,
                                                     int label, PNorm p) {
  std::vector<ClassDistance> out;
  for (const auto& t : decision_terms(affine, logits, label, p)) out.push_back({t.distance, t.cls});
  return out;
}

double signed_decision_distance(const AffineMap& affine, const Vector& logits, int label, PNorm p) {
  const auto all = signed_decision_distances(affine, logits, label, p);
  return all.empty() ? kInf : all.front().distance;
}

std::vector<double> boundary_distances(const AffineMap& affine, const ForwardTrace& trace, PNorm p) {
  std::vector<double> out;
  for (const auto& t : region_terms(affine, trace, p)) out.push_back(t.distance);
  return out;
}

double mmr_penalty(double d_B, double signed_d_D, double gamma_B, double gamma_D) {
  return hinge(d_B, gamma_B) + hinge(signed_d_D, gamma_D);
}

double kmmr_penalty(std::span<const double> d_B_sorted, std::span<const double> d_D_sorted, int k_B,
                    int k_D, double gamma_B, double gamma_D) {
  auto mean_hinge = [](std::span<const double> d, int k, double gamma) {
    const std::size_t n = std::min(d.size(), static_cast<std::size_t>(std::max(k, 0)));
    if (n == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += hinge(d[i], gamma);
    return sum / static_cast<double>(n);
  };
  return mean_hinge(d_B_sorted, k_B, gamma_B) + mean_hinge(d_D_sorted, k_D, gamma_D);
}

double cross_entropy(const Vector& logits, int label) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(label);
}

double point_objective(const Network& net, const Vector& x, int label, const MarginSettings& s) {
  const ForwardTrace trace = forward(net, x);
  double value = cross_entropy(trace.logits, label);
  if (s.lambda == 0.0) return value;
  const AffineMap affine = affine_coefficients(net, activation_pattern(trace));
  const std::vector<double> d_B = boundary_distances(affine, trace, s.norm);
  std::vector<double> d_D;
  for (const auto& cd : signed_decision_distances(affine, trace.logits, label, s.norm))
    d_D.push_back(cd.distance);
  return value + s.lambda * kmmr_penalty(d_B, d_D, s.k_B, s.k_D, s.gamma_B, s.gamma_D);
}

double objective(const Network& net, const Dataset& batch, const MarginSettings& s) {
  if (batch.empty()) throw DimensionError("objective needs a nonempty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) sum += point_objective(net, batch.inputs[i], batch.labels[i], s);
  return sum / static_cast<double>(batch.size());
}

ParamGradient ParamGradient::zeros_like(const Network& net) {
  ParamGradient g;
  for (const Layer& layer : net.layers()) {
    g.weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
    g.bias.push_back(Vector::Zero(layer.bias.size()));
  }
  return g;
}

double ParamGradient::dot(const ParamGradient& other) const {
  double sum = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    sum += weights[l].cwiseProduct(other.weights[l]).sum();
    sum += bias[l].dot(other.bias[l]);
  }
  return sum;
}

Network displaced(const Network& net, const ParamGradient& direction, double step) {
  std::vector<Layer> layers;
  for (int l = 0; l < net.num_layers(); ++l) {
    layers.push_back({net.layer(l).weights + step * direction.weights[l],
                      net.layer(l).bias + step * direction.bias[l]});
  }
  return Network(std::move(layers));
}

ParamGradient objective_gradient(const Network& net, const Dataset& batch, const MarginSettings& s,
                                 double* value) {
  if (batch.empty()) throw DimensionError("objective needs a nonempty batch");
  const int hidden = net.num_hidden_layers();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  ParamGradient grad = ParamGradient::zeros_like(net);
  double total = 0.0;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector& x = batch.inputs[i];
    const int y = batch.labels[i];
    const ForwardTrace trace = forward(net, x);

    Vector dlogits = softmax(trace.logits);
    total += cross_entropy(trace.logits, y);
    dlogits(y) -= 1.0;
    dlogits *= inv_n;

    std::vector<Vector> pre_seed(hidden);
    for (int l = 0; l < hidden; ++l) pre_seed[l] = Vector::Zero(trace.pre[l].size());
    std::vector<Matrix> v_seed;  // d(objective)/dV^(k)
    bool need_chain = false;

    if (s.lambda != 0.0) {
      const ActivationPattern pattern = activation_pattern(trace);
      const bool degenerate = pattern.any_degenerate();
      const AffineMap affine = affine_coefficients(net, pattern);
      const auto rterms = region_terms(affine, trace, s.norm);
      const auto dterms = decision_terms(affine, trace.logits, y, s.norm);
      const std::size_t kb = std::min(rterms.size(), static_cast<std::size_t>(std::max(s.k_B, 0)));
      const std::size_t kd = std::min(dterms.size(), static_cast<std::size_t>(std::max(s.k_D, 0)));

      for (int k = 0; k <= hidden; ++k) v_seed.push_back(Matrix::Zero(affine.V[k].rows(), affine.V[k].cols()));

      for (std::size_t t = 0; t < kb; ++t) {
        const RegionTerm& r = rterms[t];
        total += s.lambda * hinge(r.distance, s.gamma_B) / static_cast<double>(kb);
        if (degenerate || r.distance >= s.gamma_B) continue;
        // d/d(distance) of lambda/n * mean hinge.
        const double coef = -s.lambda * inv_n / (s.gamma_B * static_cast<double>(kb));
        const double sign = r.pre > 0.0 ? 1.0 : -1.0;
        pre_seed[r.layer](r.unit) += coef * sign / r.den;
        const Vector row = affine.V[r.layer].row(r.unit).transpose();
        v_seed[r.layer].row(r.unit) +=
            (-coef * std::abs(r.pre) / (r.den * r.den)) * dual_norm_gradient(row, s.norm).transpose();
        need_chain = true;
      }
      for (std::size_t t = 0; t < kd; ++t) {
        const DecisionTerm& d = dterms[t];
        total += s.lambda * hinge(d.distance, s.gamma_D) / static_cast<double>(kd);
        if (degenerate || d.den == 0.0 || d.distance >= s.gamma_D) continue;
        const double coef = -s.lambda * inv_n / (s.gamma_D * static_cast<double>(kd));
        dlogits(y) += coef / d.den;
        dlogits(d.cls) -= coef / d.den;
        const Matrix& V = affine.output_matrix();
        const Vector diff = (V.row(y) - V.row(d.cls)).transpose();
        const Vector g = (-coef * d.gap / (d.den * d.den)) * dual_norm_gradient(diff, s.norm);
        v_seed[hidden].row(y) += g.transpose();
        v_seed[hidden].row(d.cls) -= g.transpose();
        need_chain = true;
      }

      if (need_chain) {
        // V^(k) = W^(k) Sigma^(k-1) V^(k-1), V^(1) = W^(1).
        for (int k = hidden; k >= 1; --k) {
          Matrix masked_prev = affine.V[k - 1];
          for (int j = 0; j < masked_prev.rows(); ++j)
            if (!pattern.active[k - 1][j]) masked_prev.row(j).setZero();
          grad.weights[k].noalias() += v_seed[k] * masked_prev.transpose();
          Matrix back = net.layer(k).weights.transpose() * v_seed[k];
          for (int j = 0; j < back.rows(); ++j)
            if (!pattern.active[k - 1][j]) back.row(j).setZero();
          v_seed[k - 1] += back;
        }
        grad.weights[0] += v_seed[0];
      }
    }

    // Standard backpropagation of the logit and preactivation seeds.
    Vector delta = dlogits;
    for (int k = hidden; k >= 0; --k) {
      const Vector& input = k == 0 ? x : trace.post[k - 1];
      grad.weights[k].noalias() += delta * input.transpose();
      grad.bias[k] += delta;
      if (k == 0) break;
      Vector back = net.layer(k).weights.transpose() * delta;
      for (int j = 0; j < back.size(); ++j)
        if (!(trace.pre[k - 1](j) > 0.0)) back(j) = 0.0;
      delta = back + pre_seed[k - 1];
    }
  }
  if (value != nullptr) *value = total * inv_n;
  return grad;
}

}  // namespace relucert
