#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace tvpgvar {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

// Input that violates a documented precondition or file format.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical breakdown: singular systems, non-PD covariances, failed filters.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankDeficientError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Panel shape: K regions with p variables each, plus l common activities.
struct Dims {
  Index regions = 0;
  Index variables = 0;
  Index activities = 0;

  Index width() const { return regions * variables + activities; }
  Index region_column(Index k, Index v) const { return k * variables + v; }
  Index activity_column(Index m) const { return regions * variables + m; }

  friend bool operator==(const Dims&, const Dims&) = default;
};

inline double max_abs(const Eigen::Ref<const Matrix>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

inline Matrix symmetrize(const Eigen::Ref<const Matrix>& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace tvpgvar
