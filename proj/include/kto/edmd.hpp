#pragma once

#include <Eigen/Dense>

#include "kto/kernels.hpp"
#include "kto/numerics.hpp"
#include "kto/operators.hpp"

namespace kto {

/// C_XX = (1/n) Phi Phi^T and C_XY = (1/n) Phi Psi^T, accumulated over
/// column chunks so the r x n feature matrices are never formed at once.
struct FeatureCovariances {
  Eigen::MatrixXd c_xx, c_xy;
  Eigen::Index n = 0;
};

FeatureCovariances feature_covariances(const Explicit& map, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                       Eigen::Index chunk = 2048);

struct EdmdOptions {
  Eigen::Index eigen_count = -1;  // -1: all feature directions up to the numerical rank
  EigMethod method = EigMethod::automatic;
  double rank_tol = 1e-12;
  /// Feature dimension above which the automatic method compresses.
  Eigen::Index dense_limit = 500;
  bool compute_modes = true;
};

struct EdmdModel {
  Explicit map;
  Eigen::Index d = 0;  // state dimension
  Eigen::Index r = 0;  // feature dimension
  Eigen::Index n = 0;
  double epsilon = 0.0;
  /// (C_XX + eps I)^{-1} C_XY. Acts on feature coefficient vectors xi of
  /// observables f(x) = <xi, phi(x)>.
  Eigen::MatrixXd k_matrix;
  Spectrum spectrum;
  Eigen::MatrixXcd modes;  // d x m
  double reconstruction_residual = 0.0;
  bool modes_ill_conditioned = false;
  bool used_pseudoinverse = false;
  EigMethod method = EigMethod::dense;
  Eigen::Index rank = 0;
};

EdmdModel explicit_edmd(const Explicit& map, const SampleSet& x, const SampleSet& y, double epsilon,
                        const EdmdOptions& opts = {});
/// Same, from precomputed covariances. Modes are not computed.
EdmdModel explicit_edmd(const Explicit& map, const FeatureCovariances& cov, Eigen::Index d, double epsilon,
                        const EdmdOptions& opts = {});

struct EmbeddedKoopman {
  Eigen::MatrixXd matrix;  // C_XY (C_XX + eps I)^{-1}
  Spectrum spectrum;
  bool used_pseudoinverse = false;
};

EmbeddedKoopman embedded_koopman_matrix(const Explicit& map, const SampleSet& x, const SampleSet& y, double epsilon,
                                        Eigen::Index r = -1);

/// phi_l(q) = <xi_l, phi(q)>, one column per eigenpair.
Eigen::MatrixXcd edmd_eigenfunctions(const EdmdModel& model, const SampleSet& q);

/// Least-squares modes for the full-state observable; stores them (and the
/// mean reconstruction residual per point) in the model.
Eigen::MatrixXcd koopman_modes(EdmdModel& model, const SampleSet& x);

struct Prediction {
  Eigen::VectorXd state;
  double imaginary_residue = 0.0;
  bool complex_flag = false;
};

/// One-step prediction sum_l lambda_l phi_l(x) eta_l.
Prediction predict_observable(const EdmdModel& model, const Eigen::VectorXd& x);

/// The model's eigenpairs in SpectrumResult form (eval_rule feature_vector),
/// normalized on the given training points when requested.
SpectrumResult edmd_spectrum(const EdmdModel& model, const SampleSet* normalize_on = nullptr);

}  // namespace kto
