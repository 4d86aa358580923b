#pragma once

#include <string>

namespace depmine::oracle {

/// Outcome of one numerical inequality check lhs <= rhs.
struct PropReport {
  static constexpr double kTolerance = 1e-9;

  double lhs = 0.0;
  double rhs = 0.0;
  /// Set when the bound's hypothesis fails and the check is not applicable.
  bool vacuous = false;
  std::string detail;

  double slack() const { return rhs - lhs; }
  bool holds() const { return vacuous || slack() >= -kTolerance; }
};

}  // namespace depmine::oracle
