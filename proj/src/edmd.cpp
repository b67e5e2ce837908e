#include "kto/edmd.hpp"

#include <complex>

namespace kto {

namespace {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using cd = std::complex<double>;

void check_pairs(const SampleSet& x, const SampleSet& y) {
  if (x.empty()) throw InvalidInput("empty sample set");
  if (x.size() != y.size()) throw InvalidInput("paired sets differ in size");
  if (!x.same_kind(y) || x.is_text()) throw InvalidInput("explicit features need paired vector samples of equal dimension");
}

MatrixXd orthonormal_range(const MatrixXd& factor) {
  Eigen::HouseholderQR<MatrixXd> qr(factor);
  return qr.householderQ() * MatrixXd::Identity(factor.rows(), factor.cols());
}

}  // namespace

FeatureCovariances feature_covariances(const Explicit& map, const MatrixXd& x, const MatrixXd& y, Index chunk) {
  if (x.cols() != y.cols() || x.rows() != y.rows()) throw InvalidInput("paired data must have equal shapes");
  if (x.cols() == 0) throw InvalidInput("empty sample set");
  if (chunk < 1) chunk = 2048;
  const Index r = feature_dimension(map, x.rows());
  FeatureCovariances c;
  c.n = x.cols();
  c.c_xx = MatrixXd::Zero(r, r);
  c.c_xy = MatrixXd::Zero(r, r);
  for (Index s = 0; s < c.n; s += chunk) {
    const Index len = std::min(chunk, c.n - s);
    const MatrixXd fx = feature_matrix(map, x.middleCols(s, len));
    const MatrixXd fy = feature_matrix(map, y.middleCols(s, len));
    c.c_xx.selfadjointView<Eigen::Lower>().rankUpdate(fx);
    c.c_xy.noalias() += fx * fy.transpose();
  }
  c.c_xx.triangularView<Eigen::StrictlyUpper>() = c.c_xx.transpose().triangularView<Eigen::StrictlyUpper>();
  c.c_xx /= static_cast<double>(c.n);
  c.c_xy /= static_cast<double>(c.n);
  return c;
}

EdmdModel explicit_edmd(const Explicit& map, const FeatureCovariances& cov, Index d, double epsilon,
                        const EdmdOptions& opts) {
  validate(KernelSpec{map});
  if (!(epsilon >= 0)) throw ConfigError("epsilon must be nonnegative");
  EdmdModel m;
  m.map = map;
  m.d = d;
  m.r = cov.c_xx.rows();
  m.n = cov.n;
  m.epsilon = epsilon;

  RegularizedInverse<double> reg(cov.c_xx, epsilon);
  m.k_matrix = reg.solve(cov.c_xy);
  m.used_pseudoinverse = reg.used_pseudoinverse();
  if (!m.k_matrix.allFinite()) throw NumericalError("Koopman matrix has non-finite entries");

  Index count = opts.eigen_count < 0 ? m.r : opts.eigen_count;
  if (count > m.r) throw InvalidInput("requested more eigenpairs than the feature dimension");

  EigMethod method = opts.method;
  PivotedCholesky<double> pc;
  if (method != EigMethod::dense) {
    pc = pivoted_cholesky(cov.c_xx, opts.rank_tol);
    if (method == EigMethod::automatic)
      method = (m.r > opts.dense_limit || pc.rank() < m.r) ? EigMethod::compressed : EigMethod::dense;
  }
  m.method = method;

  if (method == EigMethod::dense) {
    m.spectrum = eig_general(m.k_matrix, count);
    m.rank = m.r;
  } else {
    if (pc.rank() == 0) throw NumericalError("feature covariance has numerical rank 0");
    const MatrixXd w = orthonormal_range(pc.factor);
    const MatrixXd reduced = w.transpose() * m.k_matrix * w;
    Spectrum raw = eig_general(reduced, std::min(count, pc.rank()));
    m.spectrum.eigenvalues = raw.eigenvalues;
    m.spectrum.eigenvectors = w.cast<cd>() * raw.eigenvectors;
    for (Index l = 0; l < m.spectrum.eigenvectors.cols(); ++l) {
      auto col = m.spectrum.eigenvectors.col(l);
      normalize_phase(col);
    }
    m.rank = pc.rank();
  }
  return m;
}

EdmdModel explicit_edmd(const Explicit& map, const SampleSet& x, const SampleSet& y, double epsilon,
                        const EdmdOptions& opts) {
  check_pairs(x, y);
  const FeatureCovariances cov = feature_covariances(map, x.matrix(), y.matrix());
  EdmdModel m = explicit_edmd(map, cov, x.dim(), epsilon, opts);
  if (opts.compute_modes) koopman_modes(m, x);
  return m;
}

EmbeddedKoopman embedded_koopman_matrix(const Explicit& map, const SampleSet& x, const SampleSet& y, double epsilon,
                                        Index r) {
  check_pairs(x, y);
  validate(KernelSpec{map});
  if (!(epsilon >= 0)) throw ConfigError("epsilon must be nonnegative");
  const FeatureCovariances cov = feature_covariances(map, x.matrix(), y.matrix());
  RegularizedInverse<double> reg(cov.c_xx, epsilon);
  EmbeddedKoopman out;
  out.matrix = reg.solve(cov.c_xy.transpose()).transpose();
  out.used_pseudoinverse = reg.used_pseudoinverse();
  if (r < 0) r = std::min<Index>(out.matrix.rows(), 10);
  out.spectrum = eig_general(out.matrix, r);
  return out;
}

MatrixXcd edmd_eigenfunctions(const EdmdModel& model, const SampleSet& q) {
  if (q.is_text() || q.dim() != model.d) throw InvalidInput("query points do not match the model's state dimension");
  const Index n = q.size(), chunk = 2048;
  MatrixXcd out(n, model.spectrum.eigenvectors.cols());
  for (Index s = 0; s < n; s += chunk) {
    const Index len = std::min(chunk, n - s);
    const MatrixXd f = feature_matrix(model.map, q.matrix().middleCols(s, len));
    out.middleRows(s, len) = f.transpose().cast<cd>() * model.spectrum.eigenvectors;
  }
  return out;
}

MatrixXcd koopman_modes(EdmdModel& model, const SampleSet& x) {
  const MatrixXcd e = edmd_eigenfunctions(model, x);
  Eigen::BDCSVD<MatrixXcd> svd(e);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
  model.modes_ill_conditioned = !(smin > 1e-10 * smax);
  const MatrixXcd coeffs = pseudo_inverse(e) * x.matrix().transpose().cast<cd>();  // m x d
  model.modes = coeffs.transpose();
  const MatrixXcd recon = e * coeffs;
  model.reconstruction_residual =
      (recon - x.matrix().transpose().cast<cd>()).rowwise().norm().mean();
  return model.modes;
}

Prediction predict_observable(const EdmdModel& model, const VectorXd& x) {
  if (model.modes.size() == 0) throw InvalidInput("model has no Koopman modes; compute them first");
  if (x.size() != model.d) throw InvalidInput("state has wrong dimension");
  const VectorXd f = feature_matrix(model.map, MatrixXd(x)).col(0);
  const Eigen::VectorXcd phi = model.spectrum.eigenvectors.transpose() * f.cast<cd>();
  const Eigen::VectorXcd sum = model.modes * (model.spectrum.eigenvalues.array() * phi.array()).matrix();
  Prediction p;
  p.state = sum.real();
  p.imaginary_residue = sum.imag().norm();
  p.complex_flag = p.imaginary_residue > 1e-6 * std::max(p.state.norm(), std::numeric_limits<double>::min());
  return p;
}

SpectrumResult edmd_spectrum(const EdmdModel& model, const SampleSet* normalize_on) {
  SpectrumResult s;
  s.kind = OperatorKind::kernel_koopman;
  s.epsilon = model.epsilon;
  s.n = model.n;
  s.eigenvalues = model.spectrum.eigenvalues;
  s.coefficients = model.spectrum.eigenvectors;
  s.expansion = model.spectrum.eigenvectors;
  s.eval_rule = EvalRule::feature_vector;
  s.kernel = KernelSpec{model.map};
  s.method = model.method;
  s.rank = model.rank;
  s.used_pseudoinverse = model.used_pseudoinverse;
  if (normalize_on) {
    const MatrixXcd values = edmd_eigenfunctions(model, *normalize_on);
    for (Index l = 0; l < values.cols(); ++l) {
      Index imax = 0;
      if (values.col(l).cwiseAbs().maxCoeff(&imax) == 0.0) continue;
      const cd scale = values(imax, l);
      s.expansion.col(l) /= scale;
      s.coefficients.col(l) /= scale;
    }
  }
  return s;
}

}  // namespace kto
