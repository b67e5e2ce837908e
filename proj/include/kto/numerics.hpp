#pragma once

// Dense linear-algebra building blocks shared by the estimators. Everything
// here is templated on the scalar type and accepts arbitrary Eigen
// expressions; results are plain dynamic matrices.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "kto/error.hpp"

namespace kto {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Derived>
using PlainOf = MatrixX<typename Derived::Scalar>;

// ---------------------------------------------------------------------------
// Pseudoinverse

/// Default cutoff for singular values: max(rows, cols) * eps * sigma_max.
template <typename RealScalar>
RealScalar default_pinv_tolerance(Eigen::Index rows, Eigen::Index cols, RealScalar sigma_max) {
  return static_cast<RealScalar>(std::max(rows, cols)) * std::numeric_limits<RealScalar>::epsilon() *
         sigma_max;
}

/// Moore-Penrose pseudoinverse; singular values <= tol are zeroed. A negative
/// tol selects default_pinv_tolerance.
template <typename Derived>
PlainOf<Derived> pseudo_inverse(const Eigen::MatrixBase<Derived>& m,
                                typename Derived::RealScalar tol = -1) {
  using Plain = PlainOf<Derived>;
  using Real = typename Derived::RealScalar;
  if (m.size() == 0) return Plain::Zero(m.cols(), m.rows());
  Eigen::BDCSVD<Plain> svd(m.derived(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const Real cutoff = tol < 0 ? default_pinv_tolerance(m.rows(), m.cols(), sv(0)) : tol;
  VectorX<Real> inv = sv.unaryExpr([cutoff](Real s) { return s > cutoff ? Real(1) / s : Real(0); });
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
}

/// Pseudoinverse of a symmetric matrix through its eigendecomposition.
/// Eigenvalues with |lambda| <= rel_tol * max|lambda| are dropped.
template <typename Derived>
PlainOf<Derived> symmetric_pseudo_inverse(const Eigen::MatrixBase<Derived>& g,
                                          typename Derived::RealScalar rel_tol = -1) {
  using Plain = PlainOf<Derived>;
  using Real = typename Derived::RealScalar;
  if (g.size() == 0) return Plain::Zero(g.cols(), g.rows());
  Eigen::SelfAdjointEigenSolver<Plain> es(g.derived());
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
  const auto& lam = es.eigenvalues();
  const Real top = lam.cwiseAbs().maxCoeff();
  const Real cutoff = rel_tol < 0 ? default_pinv_tolerance(g.rows(), g.cols(), top) : rel_tol * top;
  VectorX<Real> inv = lam.unaryExpr([cutoff](Real l) { return std::abs(l) > cutoff ? Real(1) / l : Real(0); });
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// Regularized symmetric solves

/// Factorization of (g + n_eps I) for a symmetric PSD g. Uses Cholesky when
/// the shifted matrix is numerically positive definite and falls back to the
/// symmetric pseudoinverse otherwise (flagged).
template <typename Scalar>
class RegularizedInverse {
 public:
  RegularizedInverse() = default;

  template <typename Derived>
  RegularizedInverse(const Eigen::MatrixBase<Derived>& g, Scalar n_eps) {
    if (g.rows() != g.cols()) throw InvalidInput("regularized solve needs a square matrix");
    if (!(n_eps >= 0)) throw InvalidInput("regularization must be nonnegative");
    MatrixX<Scalar> shifted = (g + g.transpose()) / Scalar(2);
    shifted.diagonal().array() += n_eps;
    llt_.compute(shifted);
    bool ok = llt_.info() == Eigen::Success;
    if (ok) {
      const Scalar floor = static_cast<Scalar>(g.rows()) * std::numeric_limits<Scalar>::epsilon();
      ok = llt_.rcond() > floor;
    }
    if (!ok) {
      pinv_ = symmetric_pseudo_inverse(shifted);
      use_pinv_ = true;
    }
  }

  template <typename Derived>
  MatrixX<Scalar> solve(const Eigen::MatrixBase<Derived>& b) const {
    if (use_pinv_) return pinv_ * b;
    return llt_.solve(b);
  }

  bool used_pseudoinverse() const { return use_pinv_; }

 private:
  Eigen::LLT<MatrixX<Scalar>> llt_;
  MatrixX<Scalar> pinv_;
  bool use_pinv_ = false;
};

template <typename Scalar>
struct SolveResult {
  MatrixX<Scalar> solution;
  bool used_pseudoinverse = false;
};

/// (g + n_eps I)^{-1} b with g symmetrized first.
template <typename DerivedG, typename DerivedB>
SolveResult<typename DerivedG::Scalar> solve_regularized(const Eigen::MatrixBase<DerivedG>& g,
                                                         typename DerivedG::Scalar n_eps,
                                                         const Eigen::MatrixBase<DerivedB>& b) {
  if (b.rows() != g.rows()) throw InvalidInput("right-hand side has wrong row count");
  RegularizedInverse<typename DerivedG::Scalar> inv(g, n_eps);
  return {inv.solve(b), inv.used_pseudoinverse()};
}

// ---------------------------------------------------------------------------
// Pivoted Cholesky

/// g ~= factor * factor^T with factor of shape n x rank. Columns are
/// generated greedily by largest residual diagonal; stops once the residual
/// diagonal drops to rel_tol * max(diag g).
template <typename Scalar>
struct PivotedCholesky {
  MatrixX<Scalar> factor;
  std::vector<Eigen::Index> pivots;
  Scalar max_residual = 0;  // largest remaining diagonal entry
  bool positive_semidefinite = true;

  Eigen::Index rank() const { return factor.cols(); }
};

template <typename Derived>
PivotedCholesky<typename Derived::Scalar> pivoted_cholesky(const Eigen::MatrixBase<Derived>& g,
                                                           typename Derived::Scalar rel_tol,
                                                           Eigen::Index max_rank = -1) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = g.rows();
  if (g.cols() != n) throw InvalidInput("pivoted Cholesky needs a square matrix");
  if (max_rank < 0 || max_rank > n) max_rank = n;

  PivotedCholesky<Scalar> out;
  VectorX<Scalar> diag = g.diagonal();
  const Scalar top = n > 0 ? diag.maxCoeff() : Scalar(0);
  MatrixX<Scalar> factor(n, std::min<Eigen::Index>(max_rank, 64));
  Eigen::Index k = 0;
  const Scalar stop = rel_tol * top;
  while (k < max_rank) {
    Eigen::Index j = 0;
    const Scalar dj = diag.maxCoeff(&j);
    if (!(dj > stop) || dj <= 0) break;
    if (k == factor.cols()) factor.conservativeResize(n, std::min<Eigen::Index>(max_rank, 2 * k));
    VectorX<Scalar> col = g.col(j);
    if (k > 0) col.noalias() -= factor.leftCols(k) * factor.row(j).head(k).transpose();
    col /= std::sqrt(dj);
    factor.col(k) = col;
    diag -= col.cwiseAbs2();
    diag(j) = 0;
    out.pivots.push_back(j);
    ++k;
  }
  out.factor = factor.leftCols(k);
  out.max_residual = n > 0 ? diag.maxCoeff() : Scalar(0);
  const Scalar negative_floor = -std::sqrt(std::numeric_limits<Scalar>::epsilon()) * std::max(top, Scalar(1e-300));
  out.positive_semidefinite = n == 0 || (top >= 0 && diag.minCoeff() >= negative_floor);
  return out;
}

// ---------------------------------------------------------------------------
// General eigendecomposition

/// Eigenpairs sorted by descending modulus (ties: descending real part, then
/// ascending imaginary part). Eigenvectors are columns with unit norm whose
/// largest-modulus entry is real and positive.
template <typename Real>
struct SpectrumRaw {
  VectorX<std::complex<Real>> eigenvalues;
  MatrixX<std::complex<Real>> eigenvectors;

  Eigen::Index size() const { return eigenvalues.size(); }
};

using Spectrum = SpectrumRaw<double>;

/// Ordering convention shared by every spectrum in the library.
template <typename Real>
bool spectral_order(const std::complex<Real>& a, const std::complex<Real>& b) {
  const Real ma = std::abs(a), mb = std::abs(b);
  if (ma != mb) return ma > mb;
  if (a.real() != b.real()) return a.real() > b.real();
  return a.imag() < b.imag();
}

/// Index permutation putting eigenvalues into spectral order.
template <typename Derived>
std::vector<Eigen::Index> spectral_permutation(const Eigen::MatrixBase<Derived>& values) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(values.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return spectral_order(values(a), values(b)); });
  return idx;
}

/// Rescale a vector to unit norm and rotate its phase so that its
/// largest-modulus entry (first one on ties) is real and positive.
template <typename Derived>
void normalize_phase(Eigen::MatrixBase<Derived>& v) {
  using Real = typename Derived::RealScalar;
  const Real nrm = v.norm();
  if (nrm == Real(0)) return;
  v /= nrm;
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  const auto pivot = v(imax);
  v *= std::conj(pivot) / std::abs(pivot);
}

/// Top-r eigenpairs of a real square matrix. Throws NumericalError if the
/// QR iteration fails or a returned pair violates the residual bound.
template <typename Derived>
SpectrumRaw<typename Derived::Scalar> eig_general(const Eigen::MatrixBase<Derived>& m,
                                                  Eigen::Index r = -1) {
  using Real = typename Derived::Scalar;
  using Complex = std::complex<Real>;
  const Eigen::Index n = m.rows();
  if (m.cols() != n) throw InvalidInput("eigendecomposition needs a square matrix");
  if (r < 0) r = std::min<Eigen::Index>(n, 10);
  if (r > n) throw InvalidInput("requested more eigenpairs than the matrix dimension");

  SpectrumRaw<Real> out;
  if (n == 0) return out;
  const MatrixX<Real> dense = m;
  if (!dense.allFinite()) throw NumericalError("eigendecomposition input contains non-finite entries");
  Eigen::EigenSolver<MatrixX<Real>> es(dense, true);
  if (es.info() != Eigen::Success)
    throw NumericalError("eigensolver did not converge (n=" + std::to_string(n) + ")");

  const VectorX<Complex> values = es.eigenvalues();
  const MatrixX<Complex> vectors = es.eigenvectors();
  const auto order = spectral_permutation(values);
  out.eigenvalues.resize(r);
  out.eigenvectors.resize(n, r);
  const Real scale = dense.norm();
  for (Eigen::Index i = 0; i < r; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    out.eigenvalues(i) = values(src);
    VectorX<Complex> v = vectors.col(src);
    normalize_phase(v);
    out.eigenvectors.col(i) = v;
    const Real residual = (dense.template cast<Complex>() * v - values(src) * v).norm();
    if (residual > Real(1e-6) * std::max(scale, std::numeric_limits<Real>::min()))
      throw NumericalError("eigenpair " + std::to_string(i) + " has residual " + std::to_string(residual) +
                           " above tolerance");
  }
  return out;
}

}  // namespace kto
