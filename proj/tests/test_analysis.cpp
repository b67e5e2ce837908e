#include <doctest.h>

#include "kto/analysis.hpp"
#include "kto/dynamics.hpp"
#include "kto/operators.hpp"
#include "test_util.hpp"

#include <numbers>
#include <set>

using namespace kto;
using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

namespace {

std::vector<std::complex<double>> as_list(const VectorXcd& v) { return {v.data(), v.data() + v.size()}; }

// Two sticky two-state coordinates plus two white-noise coordinates, as one trajectory.
MatrixXd metastable_toy(Index len, Rng& rng) {
  MatrixXd t(4, len);
  double s1 = 1, s2 = -1;
  for (Index k = 0; k < len; ++k) {
    if (rng.uniform() < 0.01) s1 = -s1;
    if (rng.uniform() < 0.01) s2 = -s2;
    t.col(k) << s1 + 0.1 * rng.normal(), s2 + 0.1 * rng.normal(), rng.normal(), rng.normal();
  }
  return t;
}

MatrixXd blobs(Rng& rng, Index per, const std::vector<Eigen::Vector2d>& centres, double spread) {
  MatrixXd p(per * static_cast<Index>(centres.size()), 2);
  for (std::size_t c = 0; c < centres.size(); ++c)
    for (Index i = 0; i < per; ++i)
      p.row(static_cast<Index>(c) * per + i) =
          centres[c].transpose() + spread * Eigen::RowVector2d(rng.normal(), rng.normal());
  return p;
}

}  // namespace

TEST_CASE("tica: identity dynamics") {
  Rng rng(1);
  const MatrixXd x = test::normal_matrix(rng, 3, 40);
  const TicaResult t = tica(x, x);
  REQUIRE(t.eigenvalues.size() == 3);
  for (Index i = 0; i < 3; ++i) CHECK(std::abs(t.eigenvalues(i) - 1.0) < 1e-10);
  CHECK(t.coordinates.rows() == 40);
  CHECK(test::max_abs_diff(t.coordinates, MatrixXcd(x.transpose().cast<std::complex<double>>() * t.eigenvectors)) < 1e-12);
}

TEST_CASE("tica: metastable toy has two slow coordinates") {
  Rng rng(2);
  const MatrixXd traj = metastable_toy(10000, rng);
  const TicaResult t = tica(traj.leftCols(9999), traj.rightCols(9999));
  CHECK(std::abs(t.eigenvalues(0)) > 0.9);
  CHECK(std::abs(t.eigenvalues(1)) > 0.9);
  CHECK(std::abs(t.eigenvalues(2)) < 0.3);
  CHECK(std::abs(t.eigenvalues(3)) < 0.3);
}

TEST_CASE("tica matches the linear-kernel Koopman eigenproblem") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd x = test::normal_matrix(rng, 3, 50);
    const MatrixXd y = 0.7 * x + 0.3 * test::normal_matrix(rng, 3, 50);
    const TicaResult t = tica(x, y);
    const GramBundle g = lagged_grams(KernelSpec{Linear{}}, SampleSet(x), SampleSet(y), 1e-12);
    const SpectrumResult s = eig_transfer(OperatorKind::kernel_koopman, g, 3);
    CHECK(test::spectrum_distance(as_list(t.eigenvalues), as_list(s.eigenvalues)) < 1e-6);
  }
}

TEST_CASE("tica: adjoint spectra coincide") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixXd x = test::normal_matrix(rng, 4, 30), y = test::normal_matrix(rng, 4, 30);
    const MatrixXd cxx = x * x.transpose() / 30.0, cxy = x * y.transpose() / 30.0;
    const auto right = test::nonzero_eigenvalues(cxx.inverse() * cxy, 1e-12);
    const auto left = test::nonzero_eigenvalues(cxy.transpose() * cxx.inverse(), 1e-12);
    CHECK(test::spectrum_distance(right, left) < 1e-8);
    CHECK(test::spectrum_distance(as_list(tica(x, y, 4).eigenvalues), right) < 1e-8);
  }
}

TEST_CASE("tica options and errors") {
  Rng rng(5);
  const MatrixXd x = test::normal_matrix(rng, 2, 20), y = test::normal_matrix(rng, 2, 20);
  CHECK_THROWS_AS(tica(x, MatrixXd(y.leftCols(19))), InvalidInput);
  MatrixXd singular = x;
  singular.row(1) = singular.row(0);
  TicaOptions strict;
  strict.allow_pseudoinverse = false;
  CHECK_THROWS_AS(tica(singular, y, -1, strict), SingularityError);
  CHECK(tica(singular, y).used_pseudoinverse);

  TicaOptions sym;
  sym.symmetrize = true;
  const TicaResult ts = tica(x, y, -1, sym);
  const MatrixXd cxx = x * x.transpose() / 20.0;
  const MatrixXd csym = (x * y.transpose() + y * x.transpose()) / 40.0;
  CHECK(test::spectrum_distance(as_list(ts.eigenvalues), test::nonzero_eigenvalues(cxx.inverse() * csym, 0.0)) < 1e-10);

  TicaOptions centred;
  centred.center = true;
  const MatrixXd shifted = x.colwise() + Eigen::Vector2d(5, -3);
  const MatrixXd shifted_y = y.colwise() + Eigen::Vector2d(5, -3);
  CHECK(test::spectrum_distance(as_list(tica(shifted, shifted_y, -1, centred).eigenvalues),
                                as_list(tica(x.colwise() - x.rowwise().mean(), y.colwise() - y.rowwise().mean()).eigenvalues)) <
        1e-10);
}

TEST_CASE("dmd recovers linear dynamics") {
  Rng rng(6);
  const MatrixXd m = test::normal_matrix(rng, 4, 4);
  const MatrixXd x = test::normal_matrix(rng, 4, 100);
  const DmdResult d = dmd(x, m * x);
  CHECK(test::max_abs_diff(d.matrix, m) < 1e-8);
  CHECK(test::max_abs_diff(dmd(x, x).matrix, MatrixXd::Identity(4, 4)) < 1e-12);
  for (Index l = 0; l < d.spectrum.size(); ++l) {
    const auto v = d.spectrum.eigenvectors.col(l);
    CHECK((m.cast<std::complex<double>>() * v - d.spectrum.eigenvalues(l) * v).norm() < 1e-8);
  }
}

TEST_CASE("dmd on simple-map states contains the linear rate") {
  Rng rng(7);
  const SampleSet x(uniform_box(2000, 2, -2, 2, rng));
  const SampleSet y = simulate_map(SimpleMap{}, x);
  const DmdResult d = dmd(x.matrix(), y.matrix());
  double best = INFINITY;
  for (Index l = 0; l < d.spectrum.size(); ++l) best = std::min(best, std::abs(d.spectrum.eigenvalues(l) - 0.8));
  CHECK(best < 1e-2);
}

TEST_CASE("spectral_gap examples") {
  VectorXcd a(7);
  a << 1, .99, .98, .97, .96, .5, .45;
  CHECK(spectral_gap(a) == 5);
  VectorXcd b(2);
  b << 1, .5;
  CHECK(spectral_gap(b) == 1);
  CHECK_THROWS_AS(spectral_gap(VectorXcd::Ones(1)), InvalidInput);
  VectorXcd low(3);
  low << .4, .3, .2;
  CHECK(spectral_gap(low) == 0);
  CHECK(spectral_gap(low, 0.1) == 1);
}

TEST_CASE("spectral_gap depends only on moduli") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(10));
    VectorXd mods(n);
    for (Index i = 0; i < n; ++i) mods(i) = rng.uniform();
    std::sort(mods.data(), mods.data() + n, std::greater<>());
    const VectorXcd e = mods.cast<std::complex<double>>();
    const std::complex<double> phase = std::polar(1.0, rng.uniform(0, 2 * std::numbers::pi));
    CHECK(spectral_gap(e) == spectral_gap(VectorXcd(e * phase)));
  }
}

TEST_CASE("kmeans separates blobs") {
  Rng rng(9);
  const MatrixXd p = blobs(rng, 50, {{-5, 0}, {5, 0}}, 0.5);
  const ClusterResult c = kmeans(p, 2, 1);
  std::vector<int> truth(100);
  for (int i = 0; i < 100; ++i) truth[static_cast<std::size_t>(i)] = i / 50;
  CHECK(cluster_purity(c.labels, truth) == 1.0);
  CHECK(c.centers.rows() == 2);
  CHECK_THROWS_AS(kmeans(p, 101, 1), InvalidInput);
  CHECK_THROWS_AS(kmeans(p, 0, 1), InvalidInput);
}

TEST_CASE("kmeans with one cluster per point") {
  Rng rng(10);
  const MatrixXd p = uniform_matrix(rng, 12, 3);
  const ClusterResult c = kmeans(p, 12, 4);
  CHECK(c.inertia == 0.0);
  CHECK(std::set<int>(c.labels.begin(), c.labels.end()).size() == 12);
}

TEST_CASE("kmeans invariants") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 20 + static_cast<Index>(rng.below(80));
    const int k = 2 + static_cast<int>(rng.below(5));
    const MatrixXd p = uniform_matrix(rng, n, 2);
    const ClusterResult c = kmeans(p, k, static_cast<std::uint64_t>(trial));
    for (std::size_t i = 1; i < c.inertia_history.size(); ++i)
      CHECK(c.inertia_history[i] <= c.inertia_history[i - 1] * (1 + 1e-12));
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      const int l = c.labels[static_cast<std::size_t>(i)];
      CHECK(l >= 0);
      CHECK(l < k);
      double dmin = INFINITY;
      for (int j = 0; j < k; ++j) dmin = std::min(dmin, (p.row(i) - c.centers.row(j)).squaredNorm());
      inertia += dmin;
    }
    CHECK(std::abs(inertia - c.inertia) <= 1e-9 * std::max(1.0, inertia));
  }
}

TEST_CASE("kmeans is deterministic and rotation invariant") {
  Rng rng(12);
  const MatrixXd p = blobs(rng, 40, {{-3, 1}, {3, -1}}, 0.7);
  const ClusterResult a = kmeans(p, 2, 5), b = kmeans(p, 2, 5);
  CHECK(a.labels == b.labels);
  CHECK(a.inertia == b.inertia);
  for (double th : {0.3, 1.2, 2.5}) {
    const Eigen::Matrix2d rot = Eigen::Rotation2Dd(th).toRotationMatrix();
    const ClusterResult r = kmeans(MatrixXd(p * rot.transpose()), 2, 5);
    CHECK(cluster_purity(r.labels, a.labels) == 1.0);
  }
}

TEST_CASE("cluster_purity and complex splitting") {
  CHECK(cluster_purity({0, 0, 1, 1}, {1, 1, 0, 0}) == 1.0);
  CHECK(cluster_purity({0, 0, 0, 0}, {0, 0, 1, 1}) == 0.5);
  CHECK_THROWS_AS(cluster_purity({0}, {0, 1}), InvalidInput);

  MatrixXcd v(2, 2);
  v << std::complex<double>(1, 0), std::complex<double>(2, 3), std::complex<double>(4, 0), std::complex<double>(5, -6);
  const MatrixXd s = split_complex_columns(v);
  REQUIRE(s.cols() == 3);
  CHECK(s.col(0) == Eigen::Vector2d(1, 4));
  CHECK(s.col(1) == Eigen::Vector2d(2, 5));
  CHECK(s.col(2) == Eigen::Vector2d(3, -6));
}
