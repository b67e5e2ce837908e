#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>

#include "kto/kernels.hpp"
#include "kto/numerics.hpp"

namespace kto {

enum class OperatorKind { kernel_pf, kernel_koopman, embedded_pf, embedded_koopman };

const char* to_string(OperatorKind kind);
/// Throws ConfigError for unknown names.
OperatorKind parse_operator_kind(const std::string& name);
/// Perron-Frobenius kinds push densities forward; their eigenfunctions carry
/// the G_XX^{-1} factor.
bool is_perron_frobenius(OperatorKind kind);

enum class Basis { x_features, y_features };

const char* to_string(Basis b);

/// Phi * coeffs (x_features) or Psi * coeffs (y_features) over the training set.
struct RkhsElement {
  Basis basis = Basis::x_features;
  Eigen::VectorXd coeffs;
};

struct EstimateOptions {
  bool allow_pseudoinverse = true;
  double pinv_rel_tol = 1e-10;
};

/// Finite sandwich S = Upsilon * B * Gamma^T over the training features.
///   kernel_pf         Psi A Phi^T,                 A = G_XY^{-1} (G_XX + n eps I)^{-1} G_XY
///   kernel_koopman    Phi (G_XX + n eps I)^{-1} Psi^T
///   embedded_pf       Psi (G_XX + n eps I)^{-1} Phi^T
///   embedded_koopman  Phi A^T Psi^T,               A^T = G_YX (G_XX + n eps I)^{-1} G_YX^{-1}
class EmpiricalOperator {
 public:
  EmpiricalOperator(OperatorKind kind, std::shared_ptr<const GramBundle> grams, Eigen::MatrixXd middle,
                    bool used_pseudoinverse);

  OperatorKind kind() const { return kind_; }
  const GramBundle& grams() const { return *grams_; }
  std::shared_ptr<const GramBundle> grams_ptr() const { return grams_; }
  double epsilon() const { return grams_->epsilon; }
  /// The matrix B of the sandwich.
  const Eigen::MatrixXd& middle() const { return middle_; }
  bool used_pseudoinverse() const { return used_pinv_; }

  Basis output_basis() const;
  Basis input_basis() const;

 private:
  OperatorKind kind_;
  std::shared_ptr<const GramBundle> grams_;
  Eigen::MatrixXd middle_;
  bool used_pinv_;
};

EmpiricalOperator estimate_operator(OperatorKind kind, std::shared_ptr<const GramBundle> grams,
                                    const EstimateOptions& opts = {});
EmpiricalOperator estimate_operator(OperatorKind kind, const GramBundle& grams, const EstimateOptions& opts = {});

Eigen::MatrixXd surrogate_matrix(OperatorKind kind, const GramBundle& grams);

/// How eval_eigenfunction turns coefficients into function values.
///   phi_times_v         sum_i v_i k(x_i, q)
///   phi_times_gxxinv_v  sum_i (G_XX^{-1} v)_i k(x_i, q)
///   feature_vector      <xi, phi(q)> for an explicit feature map
enum class EvalRule { phi_times_v, phi_times_gxxinv_v, feature_vector };

const char* to_string(EvalRule rule);
EvalRule parse_eval_rule(const std::string& name);
EvalRule eval_rule_for(OperatorKind kind);

enum class EigMethod { automatic, dense, compressed };

const char* to_string(EigMethod m);
EigMethod parse_eig_method(const std::string& name);

struct EigOptions {
  EigMethod method = EigMethod::automatic;
  /// Relative stopping tolerance of the pivoted Cholesky factor of G_XX.
  double rank_tol = 1e-12;
  /// Scale each eigenfunction so that its largest-modulus value on the
  /// training points is 1.
  bool normalize = true;
};

struct SpectrumResult {
  OperatorKind kind = OperatorKind::kernel_koopman;
  double epsilon = 0.0;
  Eigen::Index n = 0;
  Eigen::VectorXcd eigenvalues;
  /// Surrogate eigenvectors v, one column per eigenvalue.
  Eigen::MatrixXcd coefficients;
  /// Expansion weights c with phi(q) = sum_i c_i k(x_i, q), or the feature
  /// coefficient vector xi for feature_vector.
  Eigen::MatrixXcd expansion;
  EvalRule eval_rule = EvalRule::phi_times_v;
  std::optional<KernelSpec> kernel;
  /// Points the expansion refers to (training X); empty for feature_vector.
  std::optional<SampleSet> basis;
  EigMethod method = EigMethod::dense;
  Eigen::Index rank = 0;
  bool used_pseudoinverse = false;

  Eigen::Index size() const { return eigenvalues.size(); }
};

SpectrumResult eig_transfer(OperatorKind kind, const GramBundle& grams, Eigen::Index r = -1,
                            const EigOptions& opts = {});

/// Values of eigenfunction l on the query points.
Eigen::VectorXcd eval_eigenfunction(const SpectrumResult& spec, Eigen::Index l, const SampleSet& q);
/// Values of all eigenfunctions on the query points (|q| x size).
Eigen::MatrixXcd eval_eigenfunctions(const SpectrumResult& spec, const SampleSet& q);

RkhsElement embed_density(const SampleSet& s);
RkhsElement embed_observable(const Eigen::VectorXd& values, Eigen::Index n);

/// Output coefficients of S applied to elem. Elements over either training
/// basis are accepted; the cross Gram between the operator's input side and
/// the element's basis is used.
RkhsElement apply_operator(const EmpiricalOperator& op, const RkhsElement& elem);

/// Values of an element on the training points of the given side.
Eigen::VectorXd evaluate_on_training(const GramBundle& grams, const RkhsElement& elem, Basis at);

}  // namespace kto
