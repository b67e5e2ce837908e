#include "kto/analysis.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <string>

#include "kto/rng.hpp"

namespace kto {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void check_data(const MatrixXd& x, const MatrixXd& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw InvalidInput("X and Y must have equal shapes (got " + std::to_string(x.rows()) + "x" +
                       std::to_string(x.cols()) + " and " + std::to_string(y.rows()) + "x" +
                       std::to_string(y.cols()) + ")");
  if (x.cols() == 0 || x.rows() == 0) throw InvalidInput("empty data matrix");
  if (!x.allFinite() || !y.allFinite()) throw InvalidInput("data contains non-finite values");
}

// a * b^{-1} or b^{-1} * a for symmetric b via Cholesky, pseudoinverse if singular.
struct CovarianceInverse {
  Eigen::LLT<MatrixXd> llt;
  MatrixXd pinv;
  bool pseudo = false;

  CovarianceInverse(const MatrixXd& c, bool allow, const char* name) {
    llt.compute(c);
    const double floor = 1e3 * static_cast<double>(c.rows()) * std::numeric_limits<double>::epsilon();
    if (llt.info() == Eigen::Success && llt.rcond() > floor) return;
    if (!allow) throw SingularityError(name, std::string(name) + " is numerically singular");
    pseudo = true;
    pinv = symmetric_pseudo_inverse(c);
  }
  MatrixXd solve(const MatrixXd& b) const { return pseudo ? MatrixXd(pinv * b) : MatrixXd(llt.solve(b)); }
};

double sq_dist(const MatrixXd& pts, Index i, const MatrixXd& centers, Index c) {
  return (pts.row(i) - centers.row(c)).squaredNorm();
}

struct Run {
  std::vector<int> labels;
  MatrixXd centers;
  double inertia = 0.0;
  std::vector<double> history;
  int iterations = 0;
};

MatrixXd plus_plus(const MatrixXd& pts, int k, Rng& rng) {
  const Index n = pts.rows();
  MatrixXd centers(k, pts.cols());
  centers.row(0) = pts.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2(i) = sq_dist(pts, i, centers, 0);
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = n - 1;
    if (total > 0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (u < acc && d2(i) > 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = pts.row(pick);
    for (Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), sq_dist(pts, i, centers, c));
  }
  return centers;
}

Run lloyd(const MatrixXd& pts, int k, Rng& rng, int max_iter) {
  const Index n = pts.rows();
  Run run;
  run.centers = plus_plus(pts, k, rng);
  run.labels.assign(static_cast<std::size_t>(n), -1);
  VectorXd best(n);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      int arg = 0;
      double dmin = sq_dist(pts, i, run.centers, 0);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(pts, i, run.centers, c);
        if (d < dmin) {
          dmin = d;
          arg = c;
        }
      }
      best(i) = dmin;
      inertia += dmin;
      if (run.labels[static_cast<std::size_t>(i)] != arg) {
        run.labels[static_cast<std::size_t>(i)] = arg;
        changed = true;
      }
    }
    run.history.push_back(inertia);
    run.inertia = inertia;
    run.iterations = it + 1;
    if (!changed && it > 0) break;

    MatrixXd sums = MatrixXd::Zero(k, pts.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const int l = run.labels[static_cast<std::size_t>(i)];
      sums.row(l) += pts.row(i);
      ++counts[static_cast<std::size_t>(l)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        run.centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      Index far = 0;
      best.maxCoeff(&far);
      run.centers.row(c) = pts.row(far);
      best(far) = 0.0;
    }
  }
  return run;
}

}  // namespace

TicaResult tica(const MatrixXd& x_in, const MatrixXd& y_in, Index r, const TicaOptions& opts) {
  check_data(x_in, y_in);
  MatrixXd x = x_in, y = y_in;
  if (opts.center) {
    x.colwise() -= x_in.rowwise().mean();
    y.colwise() -= y_in.rowwise().mean();
  }
  const double n = static_cast<double>(x.cols());
  const MatrixXd cxx = (x * x.transpose()) / n;
  MatrixXd cxy = (x * y.transpose()) / n;
  if (opts.symmetrize) cxy = (cxy + cxy.transpose()).eval() / 2.0;
  CovarianceInverse inv(cxx, opts.allow_pseudoinverse, "c_xx");
  if (r < 0) r = x.rows();
  Spectrum s = eig_general(inv.solve(cxy), r);
  TicaResult out;
  out.eigenvalues = s.eigenvalues;
  out.eigenvectors = s.eigenvectors;
  out.coordinates = x.transpose().cast<std::complex<double>>() * s.eigenvectors;
  out.used_pseudoinverse = inv.pseudo;
  return out;
}

DmdResult dmd(const MatrixXd& x, const MatrixXd& y, Index r, bool allow_pseudoinverse) {
  check_data(x, y);
  const MatrixXd xxt = x * x.transpose();
  CovarianceInverse inv(xxt, allow_pseudoinverse, "x_xt");
  DmdResult out;
  out.matrix = inv.solve(x * y.transpose()).transpose();
  out.used_pseudoinverse = inv.pseudo;
  if (r < 0) r = x.rows();
  out.spectrum = eig_general(out.matrix, r);
  return out;
}

Index spectral_gap(const Eigen::VectorXcd& eigenvalues, double floor) {
  const Index m = eigenvalues.size();
  if (m < 2) throw InvalidInput("spectral gap needs at least 2 eigenvalues");
  Index best = 0;
  double best_gap = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i + 1 < m; ++i) {
    const double mod = std::abs(eigenvalues(i));
    if (mod < floor) continue;
    const double gap = mod - std::abs(eigenvalues(i + 1));
    if (gap > best_gap) {
      best_gap = gap;
      best = i + 1;
    }
  }
  return best;
}

ClusterResult kmeans(const MatrixXd& points, int k, std::uint64_t seed, const KmeansOptions& opts) {
  const Index n = points.rows();
  if (n == 0 || points.cols() == 0) throw InvalidInput("kmeans needs a nonempty n x r point matrix");
  if (k < 1) throw InvalidInput("kmeans needs k >= 1");
  if (k > n) throw InvalidInput("kmeans: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  if (!points.allFinite()) throw InvalidInput("kmeans points contain non-finite values");
  if (opts.restarts < 1) throw ConfigError("kmeans needs at least one restart");
  const Rng root(seed);
  ClusterResult out;
  bool have = false;
  for (int rs = 0; rs < opts.restarts; ++rs) {
    Rng rng = root.split(static_cast<std::uint64_t>(rs));
    Run run = lloyd(points, k, rng, opts.max_iterations);
    if (!have || run.inertia < out.inertia) {
      out.labels = std::move(run.labels);
      out.centers = std::move(run.centers);
      out.inertia = run.inertia;
      out.inertia_history = std::move(run.history);
      out.iterations = run.iterations;
      out.best_restart = rs;
      have = true;
    }
  }
  return out;
}

double cluster_purity(const std::vector<int>& labels, const std::vector<int>& truth) {
  if (labels.size() != truth.size() || labels.empty()) throw InvalidInput("purity needs aligned nonempty labelings");
  std::map<int, std::map<int, std::size_t>> table;
  for (std::size_t i = 0; i < labels.size(); ++i) ++table[labels[i]][truth[i]];
  std::size_t agree = 0;
  for (const auto& [label, counts] : table) {
    std::size_t top = 0;
    for (const auto& [t, c] : counts) top = std::max(top, c);
    agree += top;
  }
  return static_cast<double>(agree) / static_cast<double>(labels.size());
}

MatrixXd split_complex_columns(const MatrixXcd& values) {
  std::vector<VectorXd> cols;
  for (Index j = 0; j < values.cols(); ++j) {
    cols.push_back(values.col(j).real());
    if (values.col(j).imag().cwiseAbs().maxCoeff() > 0) cols.push_back(values.col(j).imag());
  }
  MatrixXd out(values.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = cols[j];
  return out;
}

}  // namespace kto
