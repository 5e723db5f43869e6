#pragma once

// Forward-mode dual numbers for the loss gradients. Every loss is written
// once as a template over its scalar type and evaluated with either double
// (value only) or Jet (value + exact derivative).

#include <ceres/jet.h>

#include <cmath>

namespace layoutvlm {

template <int N>
using Jet = ceres::Jet<double, N>;

inline double value_of(double x) { return x; }

template <int N>
double value_of(const Jet<N>& x) {
  return x.a;
}

/// max/min selecting by value; the derivative follows the chosen branch.
template <class T>
T max_of(const T& a, const T& b) {
  return value_of(a) >= value_of(b) ? a : b;
}

template <class T>
T min_of(const T& a, const T& b) {
  return value_of(a) <= value_of(b) ? a : b;
}

template <class T>
T clamp_of(const T& x, double lo, double hi) {
  if (value_of(x) <= lo) return T(lo);
  if (value_of(x) >= hi) return T(hi);
  return x;
}

template <class T>
T abs_of(const T& x) {
  return value_of(x) < 0.0 ? -x : x;
}

/// sqrt with a zero derivative at the origin instead of an infinite one.
template <class T>
T safe_sqrt(const T& x) {
  using std::sqrt;
  if (value_of(x) <= 0.0) return T(0.0);
  return sqrt(x);
}

}  // namespace layoutvlm
