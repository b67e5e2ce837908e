#include "kto/operators.hpp"

#include <cmath>
#include <utility>

namespace kto {

namespace {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// G^{-1} for a possibly singular square Gram; pseudoinverse if LU is unreliable.
std::pair<MatrixXd, bool> invert_cross_gram(const MatrixXd& g, const char* name, const EstimateOptions& opts) {
  Eigen::PartialPivLU<MatrixXd> lu(g);
  const double floor = 1e3 * static_cast<double>(g.rows()) * std::numeric_limits<double>::epsilon();
  if (lu.rcond() > floor) return {lu.inverse(), false};
  if (!opts.allow_pseudoinverse)
    throw SingularityError(name, std::string(name) + " is numerically singular (rcond " + std::to_string(lu.rcond()) + ")");
  Eigen::BDCSVD<MatrixXd> svd(g);
  const double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  return {pseudo_inverse(g, opts.pinv_rel_tol * smax), true};
}

// Applies G_XX^{-1} to v, dropping the numerical null space if G_XX is singular.
class GramInverse {
 public:
  explicit GramInverse(const MatrixXd& g) {
    const MatrixXd sym = (g + g.transpose()) / 2.0;
    llt_.compute(sym);
    ok_ = llt_.info() == Eigen::Success &&
          llt_.rcond() > 1e3 * static_cast<double>(g.rows()) * std::numeric_limits<double>::epsilon();
    if (!ok_) pinv_ = symmetric_pseudo_inverse(sym, 1e-10);
  }
  MatrixXcd apply(const MatrixXcd& v) const {
    if (ok_) return llt_.solve(v.real()).cast<std::complex<double>>() +
                    std::complex<double>(0, 1) * llt_.solve(v.imag()).cast<std::complex<double>>();
    return pinv_.cast<std::complex<double>>() * v;
  }
  bool pseudo() const { return !ok_; }

 private:
  Eigen::LLT<MatrixXd> llt_;
  MatrixXd pinv_;
  bool ok_ = false;
};

const MatrixXd& cross_gram(const GramBundle& g, Basis left, Basis right) {
  if (left == Basis::x_features) return right == Basis::x_features ? g.g_xx : g.g_xy;
  return right == Basis::x_features ? g.g_yx : g.g_yy;
}

// Orthonormal basis W of the numerical range of G_XX together with the
// projected Gram W^T G_XX W.
struct CompressedGram {
  MatrixXd w;
  Eigen::SelfAdjointEigenSolver<MatrixXd> projected;
  double n_eps = 0.0;

  // (W^T G_XX W + n eps I)^{-1} applied to W coordinates.
  MatrixXd solve_in_range(const MatrixXd& coords) const {
    const VectorXd lam = projected.eigenvalues();
    const double top = lam.cwiseAbs().maxCoeff();
    VectorXd inv(lam.size());
    for (Index i = 0; i < lam.size(); ++i) {
      const double s = lam(i) + n_eps;
      inv(i) = (n_eps > 0 || std::abs(lam(i)) > 1e-14 * top) ? 1.0 / s : 0.0;
    }
    const MatrixXd& u = projected.eigenvectors();
    return u * inv.asDiagonal() * (u.transpose() * coords);
  }
};

CompressedGram compress(const GramBundle& g, const PivotedCholesky<double>& pc) {
  CompressedGram c;
  Eigen::HouseholderQR<MatrixXd> qr(pc.factor);
  c.w = qr.householderQ() * MatrixXd::Identity(g.n, pc.rank());
  MatrixXd proj = c.w.transpose() * g.g_xx * c.w;
  proj = (proj + proj.transpose()).eval() / 2.0;
  c.projected.compute(proj);
  c.n_eps = g.n_eps();
  return c;
}

void normalize_columns(const MatrixXcd& values, MatrixXcd& a, MatrixXcd& b) {
  for (Index l = 0; l < values.cols(); ++l) {
    Index imax = 0;
    if (values.col(l).cwiseAbs().maxCoeff(&imax) == 0.0) continue;
    const std::complex<double> s = values(imax, l);
    a.col(l) /= s;
    b.col(l) /= s;
  }
}

}  // namespace

const char* to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kernel_pf: return "kernel_pf";
    case OperatorKind::kernel_koopman: return "kernel_koopman";
    case OperatorKind::embedded_pf: return "embedded_pf";
    case OperatorKind::embedded_koopman: return "embedded_koopman";
  }
  return "unknown";
}

OperatorKind parse_operator_kind(const std::string& name) {
  for (auto k : {OperatorKind::kernel_pf, OperatorKind::kernel_koopman, OperatorKind::embedded_pf,
                 OperatorKind::embedded_koopman})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown operator kind '" + name + "'");
}

bool is_perron_frobenius(OperatorKind kind) {
  return kind == OperatorKind::kernel_pf || kind == OperatorKind::embedded_pf;
}

const char* to_string(Basis b) { return b == Basis::x_features ? "x_features" : "y_features"; }

const char* to_string(EvalRule rule) {
  switch (rule) {
    case EvalRule::phi_times_v: return "phi_times_v";
    case EvalRule::phi_times_gxxinv_v: return "phi_times_gxxinv_v";
    case EvalRule::feature_vector: return "feature_vector";
  }
  return "unknown";
}

EvalRule parse_eval_rule(const std::string& name) {
  for (auto r : {EvalRule::phi_times_v, EvalRule::phi_times_gxxinv_v, EvalRule::feature_vector})
    if (name == to_string(r)) return r;
  throw InvalidInput("unknown eval rule '" + name + "'");
}

EvalRule eval_rule_for(OperatorKind kind) {
  return is_perron_frobenius(kind) ? EvalRule::phi_times_gxxinv_v : EvalRule::phi_times_v;
}

const char* to_string(EigMethod m) {
  switch (m) {
    case EigMethod::automatic: return "auto";
    case EigMethod::dense: return "dense";
    case EigMethod::compressed: return "compressed";
  }
  return "unknown";
}

EigMethod parse_eig_method(const std::string& name) {
  for (auto m : {EigMethod::automatic, EigMethod::dense, EigMethod::compressed})
    if (name == to_string(m)) return m;
  throw ConfigError("unknown eigen method '" + name + "'");
}

EmpiricalOperator::EmpiricalOperator(OperatorKind kind, std::shared_ptr<const GramBundle> grams, MatrixXd middle,
                                     bool used_pseudoinverse)
    : kind_(kind), grams_(std::move(grams)), middle_(std::move(middle)), used_pinv_(used_pseudoinverse) {
  if (!middle_.allFinite()) throw NumericalError("operator coefficients are not finite");
}

Basis EmpiricalOperator::output_basis() const {
  return (kind_ == OperatorKind::kernel_pf || kind_ == OperatorKind::embedded_pf) ? Basis::y_features
                                                                                  : Basis::x_features;
}

Basis EmpiricalOperator::input_basis() const {
  return output_basis() == Basis::y_features ? Basis::x_features : Basis::y_features;
}

EmpiricalOperator estimate_operator(OperatorKind kind, std::shared_ptr<const GramBundle> grams,
                                    const EstimateOptions& opts) {
  if (!grams) throw InvalidInput("missing Gram bundle");
  check_bundle(*grams);
  const GramBundle& g = *grams;
  RegularizedInverse<double> reg(g.g_xx, g.n_eps());
  bool pinv = reg.used_pseudoinverse();
  if (pinv && !opts.allow_pseudoinverse)
    throw SingularityError("g_xx", "g_xx + n*eps*I is not positive definite");
  MatrixXd middle;
  switch (kind) {
    case OperatorKind::kernel_koopman:
    case OperatorKind::embedded_pf: middle = reg.solve(MatrixXd::Identity(g.n, g.n)); break;
    case OperatorKind::kernel_pf: {
      auto [inv, flagged] = invert_cross_gram(g.g_xy, "g_xy", opts);
      middle = inv * reg.solve(g.g_xy);
      pinv = pinv || flagged;
      break;
    }
    case OperatorKind::embedded_koopman: {
      auto [inv, flagged] = invert_cross_gram(g.g_yx, "g_yx", opts);
      middle = g.g_yx * reg.solve(inv);
      pinv = pinv || flagged;
      break;
    }
  }
  return EmpiricalOperator(kind, std::move(grams), std::move(middle), pinv);
}

EmpiricalOperator estimate_operator(OperatorKind kind, const GramBundle& grams, const EstimateOptions& opts) {
  return estimate_operator(kind, std::make_shared<const GramBundle>(grams), opts);
}

MatrixXd surrogate_matrix(OperatorKind kind, const GramBundle& g) {
  check_bundle(g);
  RegularizedInverse<double> reg(g.g_xx, g.n_eps());
  switch (kind) {
    case OperatorKind::kernel_pf: return reg.solve(g.g_xy);
    case OperatorKind::kernel_koopman: return reg.solve(g.g_yx);
    case OperatorKind::embedded_pf: return reg.solve(g.g_yx).transpose();
    case OperatorKind::embedded_koopman: return reg.solve(g.g_xy).transpose();
  }
  return {};
}

SpectrumResult eig_transfer(OperatorKind kind, const GramBundle& g, Index r, const EigOptions& opts) {
  check_bundle(g);
  const Index n = g.n;
  if (r < 0) r = std::min<Index>(n, 10);
  if (r > n) throw InvalidInput("requested " + std::to_string(r) + " eigenpairs from n=" + std::to_string(n));

  SpectrumResult out;
  out.kind = kind;
  out.epsilon = g.epsilon;
  out.n = n;
  out.eval_rule = eval_rule_for(kind);
  out.kernel = g.kernel;
  out.basis = g.x;

  EigMethod method = opts.method;
  PivotedCholesky<double> pc;
  if (method != EigMethod::dense) {
    pc = pivoted_cholesky(g.g_xx, opts.rank_tol);
    if (method == EigMethod::automatic)
      method = (pc.positive_semidefinite && pc.rank() < n) ? EigMethod::compressed : EigMethod::dense;
    else if (!pc.positive_semidefinite)
      throw NumericalError("compressed eigen method needs a positive semidefinite g_xx");
  }
  out.method = method;

  if (method == EigMethod::dense) {
    const MatrixXd m = surrogate_matrix(kind, g);
    Spectrum raw = eig_general(m, r);
    out.eigenvalues = raw.eigenvalues;
    out.coefficients = raw.eigenvectors;
    out.rank = n;
    out.used_pseudoinverse = RegularizedInverse<double>(g.g_xx, g.n_eps()).used_pseudoinverse();
    if (is_perron_frobenius(kind)) {
      GramInverse ginv(g.g_xx);
      out.expansion = ginv.apply(out.coefficients);
      out.used_pseudoinverse = out.used_pseudoinverse || ginv.pseudo();
    } else {
      out.expansion = out.coefficients;
    }
  } else {
    if (pc.rank() == 0) throw NumericalError("g_xx has numerical rank 0");
    const CompressedGram c = compress(g, pc);
    const Index k = c.w.cols();
    MatrixXd reduced;
    switch (kind) {
      case OperatorKind::kernel_koopman: reduced = c.solve_in_range(c.w.transpose() * (g.g_yx * c.w)); break;
      case OperatorKind::kernel_pf: reduced = c.solve_in_range(c.w.transpose() * (g.g_xy * c.w)); break;
      case OperatorKind::embedded_pf: reduced = (c.w.transpose() * (g.g_xy * c.w)) * c.solve_in_range(MatrixXd::Identity(k, k)); break;
      case OperatorKind::embedded_koopman: reduced = (c.w.transpose() * (g.g_yx * c.w)) * c.solve_in_range(MatrixXd::Identity(k, k)); break;
    }
    Spectrum raw = eig_general(reduced, std::min(r, pc.rank()));
    out.eigenvalues = raw.eigenvalues;
    out.coefficients = c.w.cast<std::complex<double>>() * raw.eigenvectors;
    out.rank = pc.rank();
    if (is_perron_frobenius(kind)) {
      CompressedGram pinv = c;
      pinv.n_eps = 0.0;
      const MatrixXd inv = pinv.solve_in_range(MatrixXd::Identity(c.w.cols(), c.w.cols()));
      out.expansion = c.w.cast<std::complex<double>>() * (inv.cast<std::complex<double>>() * raw.eigenvectors);
    } else {
      out.expansion = out.coefficients;
    }
  }

  if (opts.normalize) {
    const MatrixXcd values = g.g_xx.cast<std::complex<double>>() * out.expansion;
    normalize_columns(values, out.expansion, out.coefficients);
  }
  return out;
}

MatrixXcd eval_eigenfunctions(const SpectrumResult& s, const SampleSet& q) {
  if (!s.kernel) throw InvalidInput("spectrum carries no kernel; cannot evaluate eigenfunctions");
  if (s.eval_rule == EvalRule::feature_vector) {
    const MatrixXd f = feature_matrix(*s.kernel, q);
    if (f.rows() != s.expansion.rows()) throw InvalidInput("query feature dimension does not match the spectrum");
    return f.transpose().cast<std::complex<double>>() * s.expansion;
  }
  if (!s.basis) throw InvalidInput("spectrum carries no training points; cannot evaluate eigenfunctions");
  if (!s.basis->same_kind(q)) throw InvalidInput("query points do not match the training domain");
  const MatrixXd kq = gram(*s.kernel, *s.basis, q);
  return kq.transpose().cast<std::complex<double>>() * s.expansion;
}

Eigen::VectorXcd eval_eigenfunction(const SpectrumResult& s, Index l, const SampleSet& q) {
  if (l < 0 || l >= s.size()) throw InvalidInput("eigenfunction index out of range");
  SpectrumResult one = s;
  one.expansion = s.expansion.col(l);
  return eval_eigenfunctions(one, q).col(0);
}

RkhsElement embed_density(const SampleSet& s) {
  if (s.empty()) throw InvalidInput("cannot embed an empty sample set");
  return {Basis::x_features, VectorXd::Constant(s.size(), 1.0 / static_cast<double>(s.size()))};
}

RkhsElement embed_observable(const VectorXd& values, Index n) {
  if (values.size() != n)
    throw InvalidInput("observable has " + std::to_string(values.size()) + " values, expected " + std::to_string(n));
  if (n == 0) throw InvalidInput("cannot embed an empty observable");
  return {Basis::x_features, values / static_cast<double>(n)};
}

RkhsElement apply_operator(const EmpiricalOperator& op, const RkhsElement& elem) {
  const GramBundle& g = op.grams();
  if (elem.coeffs.size() != g.n)
    throw InvalidInput("element has " + std::to_string(elem.coeffs.size()) + " coefficients, operator expects " +
                       std::to_string(g.n));
  const VectorXd inner = cross_gram(g, op.input_basis(), elem.basis) * elem.coeffs;
  return {op.output_basis(), op.middle() * inner};
}

VectorXd evaluate_on_training(const GramBundle& g, const RkhsElement& elem, Basis at) {
  if (elem.coeffs.size() != g.n) throw InvalidInput("element size does not match the Gram bundle");
  return cross_gram(g, elem.basis, at).transpose() * elem.coeffs;
}

}  // namespace kto
