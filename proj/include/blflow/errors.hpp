#pragma once

#include <stdexcept>
#include <string>

namespace blflow {

// All failures surface as exceptions derived from Error. The CLI maps them
// to exit code 2; libraries let them propagate.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankDeficient : public Error {
 public:
  explicit RankDeficient(int map_index)
      : Error("map " + std::to_string(map_index) + " is not surjective"),
        index(map_index) {}
  int index;
};

class ExponentOutOfRange : public Error {
 public:
  explicit ExponentOutOfRange(int map_index)
      : Error("exponent " + std::to_string(map_index) + " outside [0,1]"),
        index(map_index) {}
  int index;
};

class DependentBasis : public Error {
 public:
  DependentBasis() : Error("supplied basis vectors are linearly dependent") {}
};

class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

class SingularM : public Error {
 public:
  SingularM() : Error("gram matrix M is numerically singular") {}
};

class NoConvergence : public Error {
 public:
  explicit NoConvergence(const std::string& what) : Error(what) {}
};

class GridTooCoarse : public Error {
 public:
  explicit GridTooCoarse(const std::string& what) : Error(what) {}
};

class PreconditionViolated : public Error {
 public:
  explicit PreconditionViolated(const std::string& what) : Error(what) {}
};

class OutOfDomain : public Error {
 public:
  explicit OutOfDomain(const std::string& what) : Error(what) {}
};

class ScalingViolated : public Error {
 public:
  ScalingViolated() : Error("exponent scaling condition fails") {}
};

class BudgetExceeded : public Error {
 public:
  explicit BudgetExceeded(const std::string& what) : Error(what) {}
};

class InsufficientPairs : public Error {
 public:
  explicit InsufficientPairs(int got)
      : Error("regression needs at least 20 usable pairs, got " +
              std::to_string(got)) {}
};

class ConfigInvalid : public Error {
 public:
  explicit ConfigInvalid(const std::string& what) : Error(what) {}
};

}  // namespace blflow
