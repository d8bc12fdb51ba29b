#pragma once

#include <optional>

#include "relucert/error.hpp"
#include "relucert/geometry.hpp"
#include "relucert/network.hpp"

namespace relucert {

enum class OracleMethod { Grid, PatternEnum };
enum class OracleGuarantee { UpperOnly, ExactWithinTol };

struct OracleResult {
  double value = 0.0;
  Vector witness;  // classified differently from x
  OracleMethod method = OracleMethod::Grid;
  OracleGuarantee guarantee = OracleGuarantee::UpperOnly;
  double tol = 0.0;
};

class NoAdversarialFound : public Error {
 public:
  using Error::Error;
};

class OracleBudgetExceeded : public Error {
 public:
  using Error::Error;
};

inline constexpr int kGridMaxDim = 3;
inline constexpr double kGridMaxCells = 1e7;
inline constexpr int kGridRefineRounds = 3;
inline constexpr int kEnumMaxUnits = 14;
inline constexpr int kEnumMaxDim = 4;

/// Brute-force scan of a grid with `resolution` points per axis over
/// [x - radius, x + radius] (intersected with the box), restricted to the
/// p-ball, followed by 3 rounds of 10x finer local grids around the best
/// points. Misclassified grid points are pulled back along the ray from x to
/// the first class change. The value is an upper bound; tol is the
/// p-diameter of the final grid cell. With a label, a misclassified x
/// returns 0.
OracleResult grid_oracle(const Network& net, const Vector& x, PNorm p, double radius, int resolution,
                         const Box* box = nullptr, std::optional<int> label = std::nullopt);

/// Exact minimal adversarial perturbation by enumerating every feasible
/// activation pattern (depth-first with pruning of empty partial regions)
/// and solving the convex subproblem for every competitor class. Requires
/// N <= 14 hidden units and d <= 4.
OracleResult enumerate_patterns_oracle(const Network& net, const Vector& x, PNorm p,
                                       const Box* box = nullptr);

}  // namespace relucert
