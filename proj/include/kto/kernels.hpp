#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "kto/sample_set.hpp"

namespace kto {

struct KernelSpec;

/// k(x, y) = exp(-|x - y|^2 / (2 sigma2)).
struct Gaussian {
  double sigma2 = 1.0;
};

/// k(x, y) = (offset + <x, y>)^degree.
struct Polynomial {
  int degree = 2;
  double offset = 1.0;
};

struct Linear {};

enum class FeatureMapId { poly2, rbf_grid, linear };

/// Kernel given by an explicit finite feature map, k(x, y) = <phi(x), phi(y)>.
///   poly2     phi(x) = [1, sqrt2 x_i, x_i x_j (sqrt2 off-diagonal)], so that
///             k is (1 + <x, y>)^2
///   rbf_grid  Gaussian bumps on a grid x grid lattice over [lo, hi]^2
///   linear    phi(x) = x
struct Explicit {
  FeatureMapId map = FeatureMapId::poly2;
  double sigma2 = 0.1;  // rbf_grid only
  int grid = 50;
  double lo = -2.0;
  double hi = 2.0;
};

/// Gap-weighted subsequence kernel of order p with decay lambda per spanned
/// character.
struct GappedString {
  int order = 2;
  double decay = 0.9;
  bool normalized = true;
};

/// exp(-k_inner(x, y)^2 / (2 sigma2)).
struct GaussianOfKernel {
  std::shared_ptr<const KernelSpec> inner;
  double sigma2 = 1.0;
};

struct KernelSpec {
  std::variant<Gaussian, Polynomial, Linear, Explicit, GappedString, GaussianOfKernel> family;

  bool is_text() const;
  bool is_explicit() const { return std::holds_alternative<Explicit>(family); }
};

/// Throws ConfigError on out-of-range hyperparameters.
void validate(const KernelSpec& spec);

const char* feature_map_name(FeatureMapId id);
/// Throws ConfigError for unknown names.
FeatureMapId parse_feature_map(const std::string& name);
std::string kernel_family_name(const KernelSpec& spec);

double eval_kernel(const KernelSpec& spec, const Sample& x, const Sample& y);

/// Length r of the feature vector for inputs of dimension d.
Eigen::Index feature_dimension(const Explicit& map, Eigen::Index d);
Eigen::VectorXd explicit_features(const KernelSpec& spec, const Sample& x);
/// Feature matrix r x n, one column per sample.
Eigen::MatrixXd feature_matrix(const Explicit& map, const Eigen::MatrixXd& x);
Eigen::MatrixXd feature_matrix(const KernelSpec& spec, const SampleSet& x);

Eigen::MatrixXd gram(const KernelSpec& spec, const SampleSet& a, const SampleSet& b);
/// gram(spec, a, a), exactly symmetric.
Eigen::MatrixXd gram(const KernelSpec& spec, const SampleSet& a);

double string_subsequence_kernel(int p, double decay, const std::string& s, const std::string& t,
                                 bool normalized);

struct GramBundle {
  Eigen::MatrixXd g_xx, g_yy, g_xy, g_yx;
  Eigen::Index n = 0;
  double epsilon = 0.0;

  // Training data, needed to evaluate eigenfunctions off the training set.
  std::optional<KernelSpec> kernel;
  std::optional<SampleSet> x, y;

  double n_eps() const { return static_cast<double>(n) * epsilon; }
};

GramBundle lagged_grams(const KernelSpec& spec, const SampleSet& x, const SampleSet& y, double epsilon);
/// Bundle from precomputed matrices; g_yx is set to g_xy^T.
GramBundle make_bundle(Eigen::MatrixXd g_xx, Eigen::MatrixXd g_yy, Eigen::MatrixXd g_xy, double epsilon);
/// Shape, finiteness and transpose checks; throws InvalidInput.
void check_bundle(const GramBundle& b);

/// H g H with H = I - (1/n) 1 1^T.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> center_gram(
    const Eigen::MatrixBase<Derived>& g) {
  using Scalar = typename Derived::Scalar;
  if (g.rows() != g.cols()) throw InvalidInput("center_gram needs a square matrix");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = g;
  if (out.size() == 0) return out;
  const auto col_means = out.colwise().mean().eval();
  out.rowwise() -= col_means;
  const auto row_means = out.rowwise().mean().eval();
  out.colwise() -= row_means;
  return out;
}

}  // namespace kto
