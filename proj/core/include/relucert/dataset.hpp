#pragma once

#include <cstddef>
#include <vector>

#include "relucert/network.hpp"

namespace relucert {

struct Dataset {
  std::vector<Vector> inputs;
  std::vector<int> labels;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }
  int dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().size()); }
  void add(Vector x, int y) {
    inputs.push_back(std::move(x));
    labels.push_back(y);
  }
};

/// Fraction of points whose predicted class differs from the label.
double clean_error(const Network& net, const Dataset& data);

}  // namespace relucert
