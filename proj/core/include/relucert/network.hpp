#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace relucert {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Default tolerance below which a preactivation is flagged degenerate.
inline constexpr double kDegeneracyTol = 1e-10;

struct Layer {
  Matrix weights;  // n_l x n_{l-1}
  Vector bias;     // n_l
};

/// Weights and biases of a fully connected ReLU classifier with L hidden
/// layers followed by a linear output layer of K logits. L = 0 is a linear
/// classifier.
class Network {
 public:
  Network() = default;
  /// Validates the dimension chain and that every entry is finite.
  explicit Network(std::vector<Layer> layers);

  int input_dim() const { return static_cast<int>(layers_.front().weights.cols()); }
  int num_classes() const { return static_cast<int>(layers_.back().weights.rows()); }
  int num_hidden_layers() const { return static_cast<int>(layers_.size()) - 1; }
  /// Total hidden-unit count N (equals the number of region hyperplanes).
  int num_hidden_units() const;
  std::vector<int> hidden_widths() const;

  std::span<const Layer> layers() const { return layers_; }
  const Layer& layer(int l) const { return layers_[static_cast<std::size_t>(l)]; }
  Layer& mutable_layer(int l) { return layers_[static_cast<std::size_t>(l)]; }
  int num_layers() const { return static_cast<int>(layers_.size()); }

  bool empty() const { return layers_.empty(); }

 private:
  std::vector<Layer> layers_;
};

/// Builds a network with the given widths {d, n_1, ..., n_L, K} using the
/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation for weights and
/// biases.
Network init_network(std::span<const int> widths, std::mt19937_64& rng);

struct ForwardTrace {
  std::vector<Vector> pre;   // f^(l), l = 1..L
  std::vector<Vector> post;  // g^(l) = max(0, f^(l))
  Vector logits;             // f^(L+1)

  /// Argmax of the logits, lowest index on ties.
  int predicted() const;
};

ForwardTrace forward(const Network& net, const Vector& x);

/// Logits only; avoids storing the hidden activations.
Vector logits(const Network& net, const Vector& x);

/// Lowest-index argmax.
int argmax(const Vector& v);

/// True when some class other than `cls` scores at least as high as `cls`.
bool is_adversarial(const Vector& logits, int cls);

struct ActivationPattern {
  std::vector<std::vector<bool>> active;      // per hidden layer, per unit
  std::vector<std::vector<bool>> degenerate;  // |f_i^(l)| <= tol

  bool any_degenerate() const;
  int num_units() const;
  void flip(int layer, int unit);
  /// Compact key over the active bits, usable in sets and maps.
  std::string key() const;
  bool operator==(const ActivationPattern& other) const { return active == other.active; }
};

/// ACTIVE iff the preactivation is strictly positive; exact zero is INACTIVE.
ActivationPattern activation_pattern(const ForwardTrace& trace, double tol = kDegeneracyTol);

/// Per-layer V^(k), a^(k) such that f^(k)(z) = V^(k) z + a^(k) on the region
/// of the pattern. Index k-1 holds layer k; the last entry is the logit map.
struct AffineMap {
  std::vector<Matrix> V;
  std::vector<Vector> a;

  const Matrix& output_matrix() const { return V.back(); }
  const Vector& output_offset() const { return a.back(); }
};

AffineMap affine_coefficients(const Network& net, const ActivationPattern& pattern);

struct PlaneSource {
  enum class Kind : std::uint8_t { Region, Decision };
  Kind kind = Kind::Region;
  int layer = 0;  // hidden layer index, 0-based (Region)
  int unit = 0;   // unit index within the layer (Region)
  int cls = 0;    // competitor class s (Decision)
};

struct OrientedHyperplane {
  Vector normal;
  double offset = 0.0;
  int orientation = 1;
  PlaneSource source;
  bool dead = false;  // normal identically zero

  double value(const Vector& x) const { return normal.dot(x) + offset; }
  double oriented_value(const Vector& x) const { return orientation * value(x); }
};

/// One plane per hidden unit: normal V_i^(l), offset a_i^(l), orientation +1
/// for ACTIVE and -1 for INACTIVE units.
std::vector<OrientedHyperplane> region_hyperplanes(const AffineMap& affine,
                                                   const ActivationPattern& pattern);

/// K-1 planes separating class c from every s != c, oriented so that the
/// region of class c is nonnegative.
std::vector<OrientedHyperplane> decision_hyperplanes(const AffineMap& affine, int predicted);

}  // namespace relucert
