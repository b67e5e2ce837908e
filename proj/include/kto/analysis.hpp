#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "kto/numerics.hpp"

namespace kto {

struct TicaOptions {
  bool center = false;
  /// Replace C_XY by (C_XY + C_YX) / 2.
  bool symmetrize = false;
  bool allow_pseudoinverse = true;
};

struct TicaResult {
  Eigen::VectorXcd eigenvalues;
  Eigen::MatrixXcd eigenvectors;   // d x r
  Eigen::MatrixXcd coordinates;    // n x r, X^T * eigenvectors
  bool used_pseudoinverse = false;
};

/// Eigenpairs of C_XX^{-1} C_XY with C_XX = X X^T / n and C_XY = X Y^T / n.
TicaResult tica(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Eigen::Index r = -1,
                const TicaOptions& opts = {});

struct DmdResult {
  Eigen::MatrixXd matrix;  // M = Y X^T (X X^T)^{-1}
  Spectrum spectrum;       // eigenvectors are the DMD modes
  bool used_pseudoinverse = false;
};

DmdResult dmd(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Eigen::Index r = -1,
              bool allow_pseudoinverse = true);

/// Number of dominant eigenvalues: position of the largest modulus drop
/// |l_i| - |l_{i+1}| among eigenvalues with |l_i| >= floor. Returns 0 when no
/// eigenvalue reaches the floor.
Eigen::Index spectral_gap(const Eigen::VectorXcd& eigenvalues, double floor = 0.5);

struct KmeansOptions {
  int restarts = 10;
  int max_iterations = 300;
};

struct ClusterResult {
  std::vector<int> labels;
  Eigen::MatrixXd centers;  // k x r
  double inertia = 0.0;
  /// Inertia after every assignment step of the winning run.
  std::vector<double> inertia_history;
  int iterations = 0;
  int best_restart = 0;
};

/// Lloyd iteration from k-means++ seeding, best of opts.restarts runs.
ClusterResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KmeansOptions& opts = {});

/// Fraction of points whose label agrees with the majority truth label of
/// their cluster.
double cluster_purity(const std::vector<int>& labels, const std::vector<int>& truth);

/// Real and imaginary parts as separate columns; columns whose imaginary part
/// vanishes identically are kept real only.
Eigen::MatrixXd split_complex_columns(const Eigen::MatrixXcd& values);

}  // namespace kto
