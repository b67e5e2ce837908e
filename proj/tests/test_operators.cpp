#include <doctest.h>

#include "kto/dynamics.hpp"
#include "kto/operators.hpp"
#include "test_util.hpp"

using namespace kto;
using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr OperatorKind kAllKinds[] = {OperatorKind::kernel_pf, OperatorKind::kernel_koopman,
                                      OperatorKind::embedded_pf, OperatorKind::embedded_koopman};

KernelSpec gaussian(double s2) { return {Gaussian{s2}}; }

// Points on a coarse lattice with jitter; Gaussian Grams on them are well conditioned.
SampleSet separated_points(Rng& rng, Index n) {
  MatrixXd x(2, n);
  for (Index i = 0; i < n; ++i) {
    x(0, i) = static_cast<double>(i % 4) + 0.1 * rng.uniform();
    x(1, i) = static_cast<double>(i / 4) + 0.1 * rng.uniform();
  }
  return SampleSet(x);
}

GramBundle random_pairs(Rng& rng, Index n, double eps, double s2 = 0.5) {
  const SampleSet x(uniform_matrix(rng, 2, n));
  MatrixXd y = x.matrix();
  for (Index i = 0; i < n; ++i) y.col(i) = 0.8 * y.col(i) + 0.3 * Eigen::Vector2d(rng.normal(), rng.normal());
  return lagged_grams(gaussian(s2), x, SampleSet(y), eps);
}

std::pair<SampleSet, SampleSet> simple_map_data(Index n, std::uint64_t seed) {
  Rng rng(seed);
  SampleSet x(uniform_box(n, 2, -2, 2, rng));
  return {x, simulate_map(SimpleMap{}, x)};
}

// Evaluations at the training X points of the operator applied to the eigenfunction.
MatrixXcd apply_on_training(const EmpiricalOperator& op, const Eigen::VectorXcd& c) {
  const GramBundle& g = op.grams();
  const MatrixXd& in = op.input_basis() == Basis::x_features ? g.g_xx : g.g_yx;
  const MatrixXd& out_eval = op.output_basis() == Basis::x_features ? g.g_xx : g.g_yx;
  const Eigen::VectorXcd coeffs = op.middle().cast<std::complex<double>>() * (in.cast<std::complex<double>>() * c);
  return out_eval.transpose().cast<std::complex<double>>() * coeffs;
}

}  // namespace

TEST_CASE("operator kind names round-trip") {
  for (auto k : kAllKinds) CHECK(parse_operator_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_operator_kind("koopman"), ConfigError);
  CHECK(eval_rule_for(OperatorKind::kernel_pf) == EvalRule::phi_times_gxxinv_v);
  CHECK(eval_rule_for(OperatorKind::embedded_pf) == EvalRule::phi_times_gxxinv_v);
  CHECK(eval_rule_for(OperatorKind::kernel_koopman) == EvalRule::phi_times_v);
  CHECK(eval_rule_for(OperatorKind::embedded_koopman) == EvalRule::phi_times_v);
}

TEST_CASE("estimate_operator: identity dynamics acts as identity") {
  Rng rng(1);
  const SampleSet x = separated_points(rng, 12);
  const GramBundle g = lagged_grams(gaussian(0.3), x, x, 0.0);
  const VectorXd c = test::normal_matrix(rng, 12, 1);
  for (auto k : kAllKinds) {
    const EmpiricalOperator op = estimate_operator(k, g);
    const RkhsElement out = apply_operator(op, {Basis::x_features, c});
    CHECK(test::max_abs_diff(out.coeffs, c) < 1e-8);
  }
}

TEST_CASE("estimate_operator: embedded_pf coefficients on a linear toy") {
  const SampleSet x(MatrixXd((MatrixXd(1, 2) << 1, 2).finished()));
  const SampleSet y(MatrixXd((MatrixXd(1, 2) << 2, 4).finished()));
  const GramBundle g = lagged_grams(KernelSpec{Linear{}}, x, y, 1e-3);
  const EmpiricalOperator op = estimate_operator(OperatorKind::embedded_pf, g);
  // (G_XX + 2e-3 I)^{-1} with G_XX = [[1,2],[2,4]]
  const double a = 1.002, d = 4.002, det = a * d - 4.0;
  const MatrixXd hand = (MatrixXd(2, 2) << d, -2, -2, a).finished() / det;
  CHECK(test::max_abs_diff(op.middle(), hand) < 1e-8 * hand.cwiseAbs().maxCoeff());
  CHECK(op.output_basis() == Basis::y_features);
}

TEST_CASE("estimate_operator: kernel_pf and embedded_koopman coefficients are transposes") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const GramBundle g = random_pairs(rng, 10, 1e-3);
    const MatrixXd a = estimate_operator(OperatorKind::kernel_pf, g).middle();
    const MatrixXd at = estimate_operator(OperatorKind::embedded_koopman, g).middle();
    CHECK(test::max_abs_diff(a.transpose(), at) <= 1e-8 * std::max(1.0, a.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("estimate_operator: singular cross Gram") {
  const SampleSet x(MatrixXd((MatrixXd(1, 3) << 1, 1, 2).finished()));
  const SampleSet y(MatrixXd((MatrixXd(1, 3) << 2, 2, 3).finished()));
  const GramBundle g = lagged_grams(KernelSpec{Linear{}}, x, y, 0.1);
  EstimateOptions strict;
  strict.allow_pseudoinverse = false;
  try {
    estimate_operator(OperatorKind::kernel_pf, g, strict);
    FAIL("expected a singularity error");
  } catch (const SingularityError& e) {
    CHECK(e.matrix() == "g_xy");
  }
  CHECK_THROWS_AS(estimate_operator(OperatorKind::embedded_koopman, g, strict), SingularityError);
  const EmpiricalOperator op = estimate_operator(OperatorKind::kernel_pf, g);
  CHECK(op.used_pseudoinverse());
}

TEST_CASE("surrogate_matrix: identity dynamics gives the identity") {
  Rng rng(3);
  const SampleSet x = separated_points(rng, 12);
  const GramBundle g = lagged_grams(gaussian(0.3), x, x, 0.0);
  for (auto k : kAllKinds) CHECK(test::max_abs_diff(surrogate_matrix(k, g), MatrixXd::Identity(12, 12)) < 1e-8);
}

TEST_CASE("surrogate_matrix: similarity and transpose identities") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const GramBundle g = random_pairs(rng, 20, 1e-2);
    const MatrixXd kpf = surrogate_matrix(OperatorKind::kernel_pf, g);
    const MatrixXd epf = surrogate_matrix(OperatorKind::embedded_pf, g);
    const MatrixXd kk = surrogate_matrix(OperatorKind::kernel_koopman, g);
    const MatrixXd ek = surrogate_matrix(OperatorKind::embedded_koopman, g);
    CHECK(test::spectrum_distance(test::nonzero_eigenvalues(kpf, 1e-9), test::nonzero_eigenvalues(epf, 1e-9)) < 1e-8);
    CHECK(test::max_abs_diff(kk.transpose(), epf) <= 1e-12 * std::max(1.0, kk.cwiseAbs().maxCoeff()));
    CHECK(test::max_abs_diff(kpf.transpose(), ek) <= 1e-12 * std::max(1.0, kpf.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("eig_transfer: identity dynamics has unit spectrum") {
  Rng rng(5);
  const SampleSet x = separated_points(rng, 12);
  const GramBundle g = lagged_grams(gaussian(0.3), x, x, 0.0);
  for (auto k : kAllKinds) {
    const SpectrumResult s = eig_transfer(k, g, 12);
    CHECK(s.size() == 12);
    CHECK(s.eval_rule == eval_rule_for(k));
    for (Index i = 0; i < 12; ++i) CHECK(std::abs(s.eigenvalues(i) - 1.0) < 1e-8);
  }
}

TEST_CASE("eig_transfer: eigenfunctions are eigen-elements on the training points") {
  Rng rng(6);
  for (auto method : {EigMethod::dense, EigMethod::automatic}) {
    const GramBundle g = random_pairs(rng, 40, 1e-4, 0.3);
    for (auto k : kAllKinds) {
      EigOptions opts;
      opts.method = method;
      const SpectrumResult s = eig_transfer(k, g, 6, opts);
      const EmpiricalOperator op = estimate_operator(k, g);
      for (Index l = 0; l < s.size(); ++l) {
        const Eigen::VectorXcd c = s.expansion.col(l);
        const Eigen::VectorXcd phi = g.g_xx.cast<std::complex<double>>() * c;
        const Eigen::VectorXcd sphi = apply_on_training(op, c);
        CHECK((sphi - s.eigenvalues(l) * phi).norm() <= 1e-6 * static_cast<double>(g.n));
        if (opts.normalize) CHECK(std::abs(phi.cwiseAbs().maxCoeff() - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("eig_transfer: compressed and dense routes agree") {
  Rng rng(7);
  const GramBundle g = random_pairs(rng, 120, 1e-5, 2.0);
  for (auto k : kAllKinds) {
    EigOptions dense, compressed;
    dense.method = EigMethod::dense;
    compressed.method = EigMethod::compressed;
    const SpectrumResult a = eig_transfer(k, g, 5, dense);
    const SpectrumResult b = eig_transfer(k, g, 5, compressed);
    CHECK(b.rank < 120);
    for (Index l = 0; l < 5; ++l) CHECK(std::abs(a.eigenvalues(l) - b.eigenvalues(l)) < 1e-6);
    // same (normalized) eigenfunctions on the training set
    const MatrixXcd fa = g.g_xx.cast<std::complex<double>>() * a.expansion;
    const MatrixXcd fb = g.g_xx.cast<std::complex<double>>() * b.expansion;
    for (Index l = 0; l < 3; ++l) CHECK((fa.col(l) - fb.col(l)).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("eig_transfer: explicit poly2 kernel reproduces the simple-map spectrum") {
  auto [x, y] = simple_map_data(400, 11);
  const GramBundle g = lagged_grams(KernelSpec{Explicit{FeatureMapId::poly2}}, x, y, 0.0);
  const SpectrumResult s = eig_transfer(OperatorKind::kernel_koopman, g, 4);
  CHECK(s.method == EigMethod::compressed);
  CHECK(s.rank == 6);
  const double expect[] = {1.0, 0.8, 0.7, 0.64};
  for (int l = 0; l < 4; ++l) CHECK(std::abs(s.eigenvalues(l) - expect[l]) < 1e-3);
}

TEST_CASE("eig_transfer: OU spectrum and eigenfunctions") {
  Rng rng(12);
  const Index n = 2000;
  MatrixXd x(1, n), y(1, n);
  for (Index i = 0; i < n; ++i) {
    x(0, i) = rng.uniform(-2, 2);
    y(0, i) = ou_exact_step(4.0, 0.25, 0.5, x(0, i), rng);
  }
  const GramBundle g = lagged_grams(gaussian(0.3), SampleSet(x), SampleSet(y), 1e-6);
  const SpectrumResult s = eig_transfer(OperatorKind::kernel_koopman, g, 3);
  const double expect[] = {1.0, std::exp(-0.5), std::exp(-1.0)};
  for (int l = 0; l < 3; ++l) CHECK(std::abs(s.eigenvalues(l) - expect[l]) < 5e-2);

  const Eigen::VectorXcd phi1 = g.g_xx.cast<std::complex<double>>() * s.expansion.col(0);
  const Eigen::VectorXd re = phi1.real();
  const double mean = re.mean();
  const double sd = std::sqrt((re.array() - mean).square().mean());
  CHECK(sd / std::abs(mean) <= 1e-2);

  const SampleSet grid(MatrixXd(Eigen::RowVectorXd::LinSpaced(101, -1.5, 1.5)));
  const Eigen::VectorXd phi2 = eval_eigenfunction(s, 1, grid).real();
  CHECK(std::abs(test::pearson(phi2, grid.matrix().row(0).transpose())) >= 0.99);
}

TEST_CASE("eig_transfer: regularization shrinks eigenvalues for identity dynamics") {
  Rng rng(8);
  const SampleSet x = separated_points(rng, 16);
  std::vector<double> eps{1e-6, 1e-4, 1e-2, 1e-1, 1.0};
  Eigen::VectorXd prev = Eigen::VectorXd::Constant(16, 1.0 + 1e-10);
  for (double e : eps) {
    const GramBundle g = lagged_grams(gaussian(2.0), x, x, e);
    EigOptions dense;
    dense.method = EigMethod::dense;
    const SpectrumResult s = eig_transfer(OperatorKind::kernel_koopman, g, 16, dense);
    const Eigen::VectorXd mod = s.eigenvalues.cwiseAbs();
    for (Index i = 0; i < 16; ++i) {
      CHECK(mod(i) <= 1.0 + 1e-10);
      CHECK(mod(i) <= prev(i) + 1e-10);
    }
    prev = mod;
  }
}

TEST_CASE("eig_transfer rejects too many eigenpairs") {
  Rng rng(9);
  const GramBundle g = random_pairs(rng, 5, 0.1);
  CHECK_THROWS_AS(eig_transfer(OperatorKind::kernel_koopman, g, 6), InvalidInput);
  CHECK(eig_transfer(OperatorKind::kernel_koopman, g).size() == 5);
}

TEST_CASE("eval_eigenfunction rule and errors") {
  Rng rng(10);
  const SampleSet x(uniform_matrix(rng, 2, 15));
  const SampleSet y(uniform_matrix(rng, 2, 15));
  const GramBundle g = lagged_grams(gaussian(0.5), x, y, 1e-3);
  const SpectrumResult pf = eig_transfer(OperatorKind::embedded_pf, g, 3);
  // phi = Phi G_XX^{-1} v
  const Eigen::VectorXcd c = g.g_xx.cast<std::complex<double>>().fullPivLu().solve(pf.coefficients.col(0));
  CHECK((c - pf.expansion.col(0)).norm() < 1e-8 * c.norm());
  const Eigen::VectorXcd at_x = eval_eigenfunction(pf, 0, x);
  CHECK((at_x - g.g_xx.cast<std::complex<double>>() * pf.expansion.col(0)).norm() < 1e-10);
  CHECK_THROWS_AS(eval_eigenfunction(pf, 0, SampleSet(MatrixXd::Zero(3, 2))), InvalidInput);
  CHECK_THROWS_AS(eval_eigenfunction(pf, 3, x), InvalidInput);
}

TEST_CASE("embed_density and embed_observable") {
  const SampleSet s(MatrixXd::Zero(2, 4));
  CHECK(embed_density(s).coeffs == VectorXd::Constant(4, 0.25));
  CHECK_THROWS_AS(embed_density(SampleSet(MatrixXd(2, 0))), InvalidInput);
  CHECK(embed_observable(VectorXd::Ones(4), 4).coeffs == embed_density(s).coeffs);
  CHECK(embed_observable(VectorXd::Zero(4), 4).coeffs == VectorXd::Zero(4));
  CHECK_THROWS_AS(embed_observable(VectorXd::Ones(3), 4), InvalidInput);

  Rng rng(13);
  const VectorXd f = test::normal_matrix(rng, 6, 1), h = test::normal_matrix(rng, 6, 1);
  const VectorXd lin = embed_observable(2.0 * f - 3.0 * h, 6).coeffs;
  CHECK(test::max_abs_diff(lin, 2.0 * embed_observable(f, 6).coeffs - 3.0 * embed_observable(h, 6).coeffs) < 1e-14);
}

TEST_CASE("embedded density pairs with functions as a sample mean") {
  Rng rng(14);
  const SampleSet s(uniform_matrix(rng, 2, 30));
  const KernelSpec k = gaussian(0.7);
  // f = sum_j a_j k(z_j, .)
  const SampleSet z(uniform_matrix(rng, 2, 5));
  const VectorXd a = test::normal_matrix(rng, 5, 1);
  const MatrixXd kzs = gram(k, z, s);
  const double via_embedding = a.dot(kzs * embed_density(s).coeffs);
  const double sample_mean = (kzs.transpose() * a).mean();
  CHECK(std::abs(via_embedding - sample_mean) < 1e-12);

  // union of two halves
  const SampleSet h1 = s.slice(0, 15), h2 = s.slice(15, 15);
  const VectorXd u = embed_density(s).coeffs;
  VectorXd halves(30);
  halves << embed_density(h1).coeffs / 2, embed_density(h2).coeffs / 2;
  CHECK(test::max_abs_diff(u, halves) < 1e-15);
}

TEST_CASE("apply_operator: embedded_pf propagates the empirical mean embedding") {
  auto [x, y] = simple_map_data(60, 3);
  const GramBundle g = lagged_grams(KernelSpec{Explicit{FeatureMapId::poly2}}, x, y, 0.0);
  const EmpiricalOperator op = estimate_operator(OperatorKind::embedded_pf, g);
  const RkhsElement out = apply_operator(op, embed_density(x));
  CHECK(out.basis == Basis::y_features);
  const MatrixXd psi = feature_matrix(KernelSpec{Explicit{FeatureMapId::poly2}}, y);
  CHECK(test::max_abs_diff(psi * out.coeffs, psi * VectorXd::Constant(60, 1.0 / 60)) < 1e-10);
}

TEST_CASE("apply_operator rejects mismatched elements") {
  Rng rng(15);
  const GramBundle g = random_pairs(rng, 6, 0.1);
  const EmpiricalOperator op = estimate_operator(OperatorKind::kernel_koopman, g);
  CHECK_THROWS_AS(apply_operator(op, {Basis::x_features, VectorXd::Ones(5)}), InvalidInput);
}

TEST_CASE("surrogate eigenproblems reproduce the dense finite-rank operator") {
  Rng rng(16);
  for (int t = 0; t < 100; ++t) {
    const Index r = 2 + static_cast<Index>(rng.below(5));
    const Index n = r + static_cast<Index>(rng.below(static_cast<std::uint64_t>(21 - r)));
    const MatrixXd ups = test::normal_matrix(rng, r, n), gam = test::normal_matrix(rng, r, n);
    const MatrixXd b = test::normal_matrix(rng, n, n);
    const MatrixXd dense = ups * b * gam.transpose();
    const MatrixXd g_gu = gam.transpose() * ups, g_gg = gam.transpose() * gam;
    const double tol = 1e-9 * dense.norm();
    const auto ref = test::nonzero_eigenvalues(dense, tol);
    CHECK(test::spectrum_distance(ref, test::nonzero_eigenvalues(b * g_gu, tol)) < 1e-8 * std::max(1.0, dense.norm()));
    CHECK(test::spectrum_distance(ref, test::nonzero_eigenvalues(g_gu * b, tol)) < 1e-8 * std::max(1.0, dense.norm()));

    const Spectrum sd = eig_general(dense, r);
    const Spectrum s1 = eig_general(MatrixXd(b * g_gu), r);
    const Spectrum s2 = eig_general(MatrixXd(g_gu * b), r);
    const MatrixXcd g_pinv = pseudo_inverse(g_gg).cast<std::complex<double>>();
    for (Index l = 0; l < r; ++l) {
      if (std::abs(sd.eigenvalues(l)) < 1e-6 * dense.norm()) continue;
      if (l + 1 < r && std::abs(sd.eigenvalues(l) - sd.eigenvalues(l + 1)) < 1e-6) continue;
      if (l > 0 && std::abs(sd.eigenvalues(l) - sd.eigenvalues(l - 1)) < 1e-6) continue;
      Eigen::VectorXcd u1 = ups.cast<std::complex<double>>() * s1.eigenvectors.col(l);
      Eigen::VectorXcd u2 = gam.cast<std::complex<double>>() * (g_pinv * s2.eigenvectors.col(l));
      normalize_phase(u1);
      normalize_phase(u2);
      CHECK(test::max_abs_diff(u1, sd.eigenvectors.col(l)) < 1e-6);
      CHECK(test::max_abs_diff(u2, sd.eigenvectors.col(l)) < 1e-6);
    }
  }
}
