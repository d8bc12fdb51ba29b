#pragma once

#include <stdexcept>
#include <string>

namespace relucert {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A hyperplane with an identically zero normal has no defined distance.
class DeadPlaneError : public Error {
 public:
  DeadPlaneError() : Error("hyperplane has a zero normal") {}
};

// Every plane handed to a box-constrained minimum misses the box.
class AllInfeasibleError : public Error {
 public:
  AllInfeasibleError() : Error("no hyperplane intersects the box") {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace relucert
