#include "cdrec/linalg.hpp"

#include <cmath>

namespace cdrec {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double squared_norm(std::span<const double> x) { return dot(x, x); }

double norm(std::span<const double> x) { return std::sqrt(squared_norm(x)); }

double squared_distance_unchecked(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

}  // namespace cdrec
