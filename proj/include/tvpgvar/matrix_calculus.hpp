#pragma once

#include <unsupported/Eigen/KroneckerProduct>

#include "tvpgvar/core.hpp"

namespace tvpgvar {

// Column-stacking operator.
inline Vector vec(const Eigen::Ref<const Matrix>& m) {
  Vector out(m.size());
  Index i = 0;
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) out(i++) = m(r, c);
  return out;
}

inline Matrix unvec(const Eigen::Ref<const Vector>& v, Index rows, Index cols) {
  if (rows * cols != v.size()) throw ValidationError("unvec: size mismatch");
  Matrix out(rows, cols);
  Index i = 0;
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) out(r, c) = v(i++);
  return out;
}

// Stacks the on-and-below-diagonal part column by column.
inline Vector vech(const Eigen::Ref<const Matrix>& m) {
  if (m.rows() != m.cols()) throw ValidationError("vech: matrix is not square");
  const Index n = m.rows();
  Vector out(n * (n + 1) / 2);
  Index i = 0;
  for (Index c = 0; c < n; ++c)
    for (Index r = c; r < n; ++r) out(i++) = m(r, c);
  return out;
}

inline Matrix kron(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  Matrix out = Eigen::kroneckerProduct(Matrix(a), Matrix(b)).eval();
  return out;
}

// L_m: vech(S) = L_m vec(S).
inline Matrix elimination_matrix(Index m) {
  if (m < 1) throw ValidationError("elimination_matrix: m must be >= 1");
  Matrix L = Matrix::Zero(m * (m + 1) / 2, m * m);
  Index row = 0;
  for (Index c = 0; c < m; ++c)
    for (Index r = c; r < m; ++r) L(row++, r + c * m) = 1.0;
  return L;
}

// K_{mn}: vec(Q') = K_{mn} vec(Q) for m x n Q.
inline Matrix commutation_matrix(Index m, Index n) {
  if (m < 1 || n < 1) throw ValidationError("commutation_matrix: dimensions must be >= 1");
  Matrix K = Matrix::Zero(m * n, m * n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) K(j + i * n, i + j * m) = 1.0;
  return K;
}

// D_m: vec(S) = D_m vech(S) for symmetric S.
inline Matrix duplication_matrix(Index m) {
  if (m < 1) throw ValidationError("duplication_matrix: m must be >= 1");
  Matrix D = Matrix::Zero(m * m, m * (m + 1) / 2);
  Index col = 0;
  for (Index c = 0; c < m; ++c) {
    for (Index r = c; r < m; ++r) {
      D(r + c * m, col) = 1.0;
      D(c + r * m, col) = 1.0;
      ++col;
    }
  }
  return D;
}

// Moore-Penrose inverse (D'D)^{-1} D'. D'D is diagonal (1 on the diagonal
// of S, 2 off it), so this is exact.
inline Matrix duplication_pinv(Index m) {
  const Matrix D = duplication_matrix(m);
  const Vector dtd = (D.transpose() * D).diagonal();
  return dtd.cwiseInverse().asDiagonal() * D.transpose();
}

}  // namespace tvpgvar
