#include "relucert/network.hpp"

#include <cmath>
#include <string>

#include "relucert/error.hpp"

namespace relucert {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw DimensionError("network needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (layer.weights.rows() == 0 || layer.weights.cols() == 0)
      throw DimensionError("layer " + std::to_string(l) + " has an empty weight matrix");
    if (layer.bias.size() != layer.weights.rows())
      throw DimensionError("layer " + std::to_string(l) + ": bias length does not match rows");
    if (l > 0 && layer.weights.cols() != layers_[l - 1].weights.rows())
      throw DimensionError("layer " + std::to_string(l) + ": input dim does not match previous output");
    if (!all_finite(layer.weights) || !layer.bias.allFinite())
      throw DimensionError("layer " + std::to_string(l) + " has non-finite entries");
  }
}

int Network::num_hidden_units() const {
  int n = 0;
  for (int l = 0; l < num_hidden_layers(); ++l) n += static_cast<int>(layers_[l].weights.rows());
  return n;
}

std::vector<int> Network::hidden_widths() const {
  std::vector<int> widths;
  for (int l = 0; l < num_hidden_layers(); ++l) widths.push_back(static_cast<int>(layers_[l].weights.rows()));
  return widths;
}

Network init_network(std::span<const int> widths, std::mt19937_64& rng) {
  if (widths.size() < 2) throw DimensionError("need at least input and output widths");
  std::vector<Layer> layers;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const int fan_in = widths[l - 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer{Matrix(widths[l], fan_in), Vector(widths[l])};
    for (int i = 0; i < layer.weights.rows(); ++i)
      for (int j = 0; j < layer.weights.cols(); ++j) layer.weights(i, j) = dist(rng);
    for (int i = 0; i < layer.bias.size(); ++i) layer.bias(i) = dist(rng);
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers));
}

int argmax(const Vector& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

bool is_adversarial(const Vector& logits, int cls) {
  for (int s = 0; s < logits.size(); ++s)
    if (s != cls && logits(s) >= logits(cls)) return true;
  return false;
}

int ForwardTrace::predicted() const { return argmax(logits); }

ForwardTrace forward(const Network& net, const Vector& x) {
  if (x.size() != net.input_dim())
    throw DimensionError("input has length " + std::to_string(x.size()) + ", network expects " +
                         std::to_string(net.input_dim()));
  ForwardTrace trace;
  const int hidden = net.num_hidden_layers();
  trace.pre.reserve(hidden);
  trace.post.reserve(hidden);
  Vector g = x;
  for (int l = 0; l < hidden; ++l) {
    const Layer& layer = net.layer(l);
    Vector f = layer.weights * g + layer.bias;
    g = f.cwiseMax(0.0);
    trace.pre.push_back(std::move(f));
    trace.post.push_back(g);
  }
  const Layer& out = net.layer(hidden);
  trace.logits = out.weights * g + out.bias;
  return trace;
}

Vector logits(const Network& net, const Vector& x) {
  if (x.size() != net.input_dim()) throw DimensionError("input dimension mismatch");
  Vector g = x;
  for (int l = 0; l < net.num_hidden_layers(); ++l)
    g = (net.layer(l).weights * g + net.layer(l).bias).cwiseMax(0.0);
  const Layer& out = net.layer(net.num_hidden_layers());
  return out.weights * g + out.bias;
}

bool ActivationPattern::any_degenerate() const {
  for (const auto& layer : degenerate)
    for (bool d : layer)
      if (d) return true;
  return false;
}

int ActivationPattern::num_units() const {
  int n = 0;
  for (const auto& layer : active) n += static_cast<int>(layer.size());
  return n;
}

void ActivationPattern::flip(int layer, int unit) {
  auto& bits = active[static_cast<std::size_t>(layer)];
  bits[static_cast<std::size_t>(unit)] = !bits[static_cast<std::size_t>(unit)];
}

std::string ActivationPattern::key() const {
  std::string out;
  out.reserve(static_cast<std::size_t>(num_units() / 8 + active.size() + 1));
  for (const auto& layer : active) {
    unsigned char byte = 0;
    int filled = 0;
    for (bool bit : layer) {
      byte = static_cast<unsigned char>((byte << 1) | (bit ? 1 : 0));
      if (++filled == 8) {
        out.push_back(static_cast<char>(byte));
        byte = 0;
        filled = 0;
      }
    }
    if (filled > 0) out.push_back(static_cast<char>(byte << (8 - filled)));
    out.push_back('|');
  }
  return out;
}

ActivationPattern activation_pattern(const ForwardTrace& trace, double tol) {
  ActivationPattern pattern;
  pattern.active.reserve(trace.pre.size());
  pattern.degenerate.reserve(trace.pre.size());
  for (const Vector& f : trace.pre) {
    std::vector<bool> active(static_cast<std::size_t>(f.size()));
    std::vector<bool> degenerate(static_cast<std::size_t>(f.size()));
    for (int i = 0; i < f.size(); ++i) {
      active[i] = f(i) > 0.0;
      degenerate[i] = std::abs(f(i)) <= tol;
    }
    pattern.active.push_back(std::move(active));
    pattern.degenerate.push_back(std::move(degenerate));
  }
  return pattern;
}

AffineMap affine_coefficients(const Network& net, const ActivationPattern& pattern) {
  const int hidden = net.num_hidden_layers();
  if (static_cast<int>(pattern.active.size()) != hidden)
    throw DimensionError("pattern has the wrong number of hidden layers");
  for (int l = 0; l < hidden; ++l)
    if (static_cast<int>(pattern.active[l].size()) != net.layer(l).weights.rows())
      throw DimensionError("pattern width mismatch in layer " + std::to_string(l));

  AffineMap map;
  map.V.reserve(hidden + 1);
  map.a.reserve(hidden + 1);
  map.V.push_back(net.layer(0).weights);
  map.a.push_back(net.layer(0).bias);
  for (int k = 1; k <= hidden; ++k) {
    // W^(k) Sigma^(k-1): zero the columns of inactive units.
    Matrix masked = net.layer(k).weights;
    const auto& active = pattern.active[k - 1];
    for (int j = 0; j < masked.cols(); ++j)
      if (!active[j]) masked.col(j).setZero();
    map.V.push_back(masked * map.V.back());
    map.a.push_back(masked * map.a.back() + net.layer(k).bias);
  }
  return map;
}

std::vector<OrientedHyperplane> region_hyperplanes(const AffineMap& affine,
                                                   const ActivationPattern& pattern) {
  std::vector<OrientedHyperplane> planes;
  const int hidden = static_cast<int>(pattern.active.size());
  if (static_cast<int>(affine.V.size()) != hidden + 1)
    throw DimensionError("affine map and pattern disagree on depth");
  for (int l = 0; l < hidden; ++l) {
    const Matrix& V = affine.V[l];
    for (int i = 0; i < V.rows(); ++i) {
      OrientedHyperplane h;
      h.normal = V.row(i).transpose();
      h.offset = affine.a[l](i);
      h.orientation = pattern.active[l][i] ? 1 : -1;
      h.source = {PlaneSource::Kind::Region, l, i, 0};
      h.dead = (h.normal.array() == 0.0).all();
      planes.push_back(std::move(h));
    }
  }
  return planes;
}

std::vector<OrientedHyperplane> decision_hyperplanes(const AffineMap& affine, int predicted) {
  const Matrix& V = affine.output_matrix();
  const Vector& a = affine.output_offset();
  if (predicted < 0 || predicted >= V.rows()) throw DimensionError("class index out of range");
  std::vector<OrientedHyperplane> planes;
  for (int s = 0; s < V.rows(); ++s) {
    if (s == predicted) continue;
    OrientedHyperplane h;
    h.normal = (V.row(predicted) - V.row(s)).transpose();
    h.offset = a(predicted) - a(s);
    h.orientation = 1;
    h.source = {PlaneSource::Kind::Decision, 0, 0, s};
    h.dead = (h.normal.array() == 0.0).all();
    planes.push_back(std::move(h));
  }
  return planes;
}

}  // namespace relucert
