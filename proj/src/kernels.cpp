#include "kto/kernels.hpp"

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

namespace kto {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const Eigen::VectorXd& as_vector(const Sample& s) {
  if (!std::holds_alternative<Eigen::VectorXd>(s)) throw InvalidInput("vector kernel received a string sample");
  return std::get<Eigen::VectorXd>(s);
}

const std::string& as_string(const Sample& s) {
  if (!std::holds_alternative<std::string>(s)) throw InvalidInput("string kernel received a vector sample");
  return std::get<std::string>(s);
}

void check_dims(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size())
    throw InvalidInput("dimension mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
}

void check_compatible(const KernelSpec& spec, const SampleSet& s) {
  if (s.empty()) throw InvalidInput("empty sample set");
  if (spec.is_text() != s.is_text())
    throw InvalidInput(spec.is_text() ? "string kernel received vector samples" : "vector kernel received text samples");
}

double rbf(double sq_dist, double sigma2) { return std::exp(-sq_dist / (2.0 * sigma2)); }

Eigen::VectorXd grid_axis(const Explicit& map) {
  return Eigen::VectorXd::LinSpaced(map.grid, map.lo, map.hi);
}

// Lodhi et al. recursion. kp holds K'_{l-1}(s[:i], t[:j]) for all prefixes.
double ssk_raw(int p, double lam, const std::string& s_in, const std::string& t_in) {
  // canonical argument order
  const bool swap = t_in < s_in;
  const std::string& s = swap ? t_in : s_in;
  const std::string& t = swap ? s_in : t_in;
  const std::size_t m = s.size(), n = t.size();
  if (m == 0 || n == 0) return 0.0;
  const double lam2 = lam * lam;
  Eigen::MatrixXd kp = Eigen::MatrixXd::Ones(m + 1, n + 1);
  Eigen::MatrixXd kpp(m + 1, n + 1), kn(m + 1, n + 1);
  for (int l = 1; l < p; ++l) {
    kpp.setZero();
    kn.setZero();
    for (std::size_t i = 1; i <= m; ++i) {
      for (std::size_t j = 1; j <= n; ++j) {
        kpp(i, j) = lam * kpp(i, j - 1) + (s[i - 1] == t[j - 1] ? lam2 * kp(i - 1, j - 1) : 0.0);
        kn(i, j) = lam * kn(i - 1, j) + kpp(i, j);
      }
    }
    kp.swap(kn);
  }
  double k = 0.0;
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t j = 1; j <= n; ++j)
      if (s[i - 1] == t[j - 1]) k += lam2 * kp(i - 1, j - 1);
  return k;
}

// Entries of a text Gram, evaluated once per distinct pair of words.
template <typename F>
Eigen::MatrixXd text_gram(const std::vector<std::string>& a, const std::vector<std::string>& b, bool symmetric,
                          F&& pair_value) {
  std::unordered_map<std::string, int> ids;
  std::vector<const std::string*> words;
  auto intern = [&](const std::string& w) {
    auto [it, inserted] = ids.emplace(w, static_cast<int>(words.size()));
    if (inserted) words.push_back(&it->first);
    return it->second;
  };
  std::vector<int> ia, ib;
  for (const auto& w : a) ia.push_back(intern(w));
  for (const auto& w : b) ib.push_back(intern(w));
  const int u = static_cast<int>(words.size());
  Eigen::MatrixXd table(u, u);
  for (int i = 0; i < u; ++i)
    for (int j = i; j < u; ++j) table(i, j) = table(j, i) = pair_value(*words[i], *words[j]);

  Eigen::MatrixXd g(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = symmetric ? i : 0; j < g.cols(); ++j) {
      g(i, j) = table(ia[i], ib[j]);
      if (symmetric) g(j, i) = g(i, j);
    }
  return g;
}

Eigen::MatrixXd vector_gram(const KernelSpec& spec, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            bool symmetric);

Eigen::MatrixXd apply_outer(const KernelSpec& spec, Eigen::MatrixXd inner) {
  const auto& outer = std::get<GaussianOfKernel>(spec.family);
  return inner.unaryExpr([s2 = outer.sigma2](double k) { return std::exp(-k * k / (2.0 * s2)); });
}

Eigen::MatrixXd vector_gram(const KernelSpec& spec, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            bool symmetric) {
  if (a.rows() != b.rows())
    throw InvalidInput("dimension mismatch: " + std::to_string(a.rows()) + " vs " + std::to_string(b.rows()));
  const Eigen::Index na = a.cols(), nb = b.cols();
  Eigen::MatrixXd g;
  std::visit(overloaded{
                 [&](const Gaussian& k) {
                   g.resize(na, nb);
                   for (Eigen::Index j = 0; j < nb; ++j)
                     for (Eigen::Index i = symmetric ? j : 0; i < na; ++i)
                       g(i, j) = rbf((a.col(i) - b.col(j)).squaredNorm(), k.sigma2);
                 },
                 [&](const Polynomial& k) {
                   g = (a.transpose() * b).array().unaryExpr(
                       [&](double v) { return std::pow(k.offset + v, k.degree); });
                 },
                 [&](const Linear&) { g = a.transpose() * b; },
                 [&](const Explicit& k) {
                   const Eigen::MatrixXd fa = feature_matrix(k, a);
                   g = symmetric ? Eigen::MatrixXd(fa.transpose() * fa)
                                 : Eigen::MatrixXd(fa.transpose() * feature_matrix(k, b));
                 },
                 [&](const GappedString&) { throw InvalidInput("string kernel received vector samples"); },
                 [&](const GaussianOfKernel& k) { g = apply_outer(spec, vector_gram(*k.inner, a, b, symmetric)); },
             },
             spec.family);
  if (symmetric) g.triangularView<Eigen::StrictlyUpper>() = g.transpose().triangularView<Eigen::StrictlyUpper>();
  return g;
}

Eigen::MatrixXd any_gram(const KernelSpec& spec, const SampleSet& a, const SampleSet& b, bool symmetric) {
  validate(spec);
  check_compatible(spec, a);
  check_compatible(spec, b);
  if (a.is_vector()) return vector_gram(spec, a.matrix(), b.matrix(), symmetric);
  return text_gram(a.text(), b.text(), symmetric, [&](const std::string& s, const std::string& t) {
    return eval_kernel(spec, Sample(s), Sample(t));
  });
}

}  // namespace

bool KernelSpec::is_text() const {
  if (auto* g = std::get_if<GaussianOfKernel>(&family)) return g->inner && g->inner->is_text();
  return std::holds_alternative<GappedString>(family);
}

void validate(const KernelSpec& spec) {
  std::visit(overloaded{
                 [](const Gaussian& k) {
                   if (!(k.sigma2 > 0)) throw ConfigError("gaussian sigma2 must be positive");
                 },
                 [](const Polynomial& k) {
                   if (k.degree < 1) throw ConfigError("polynomial degree must be at least 1");
                   if (!std::isfinite(k.offset)) throw ConfigError("polynomial offset must be finite");
                 },
                 [](const Linear&) {},
                 [](const Explicit& k) {
                   if (k.map == FeatureMapId::rbf_grid) {
                     if (!(k.sigma2 > 0)) throw ConfigError("rbf_grid sigma2 must be positive");
                     if (k.grid < 2) throw ConfigError("rbf_grid needs at least 2 points per axis");
                     if (!(k.hi > k.lo)) throw ConfigError("rbf_grid needs lo < hi");
                   }
                 },
                 [](const GappedString& k) {
                   if (k.order < 1) throw ConfigError("string kernel order must be at least 1");
                   if (!(k.decay > 0 && k.decay < 1)) throw ConfigError("string kernel decay must lie in (0, 1)");
                 },
                 [](const GaussianOfKernel& k) {
                   if (!k.inner) throw ConfigError("gaussian_of_kernel needs an inner kernel");
                   if (!(k.sigma2 > 0)) throw ConfigError("gaussian_of_kernel sigma2 must be positive");
                   validate(*k.inner);
                 },
             },
             spec.family);
}

const char* feature_map_name(FeatureMapId id) {
  switch (id) {
    case FeatureMapId::poly2: return "poly2";
    case FeatureMapId::rbf_grid: return "rbf_grid";
    case FeatureMapId::linear: return "linear";
  }
  return "unknown";
}

FeatureMapId parse_feature_map(const std::string& name) {
  if (name == "poly2") return FeatureMapId::poly2;
  if (name == "rbf_grid") return FeatureMapId::rbf_grid;
  if (name == "linear") return FeatureMapId::linear;
  throw ConfigError("unknown feature map '" + name + "'");
}

std::string kernel_family_name(const KernelSpec& spec) {
  return std::visit(overloaded{
                        [](const Gaussian&) { return std::string("gaussian"); },
                        [](const Polynomial&) { return std::string("polynomial"); },
                        [](const Linear&) { return std::string("linear"); },
                        [](const Explicit&) { return std::string("explicit"); },
                        [](const GappedString&) { return std::string("gapped_string"); },
                        [](const GaussianOfKernel&) { return std::string("gaussian_of_kernel"); },
                    },
                    spec.family);
}

double eval_kernel(const KernelSpec& spec, const Sample& x, const Sample& y) {
  return std::visit(overloaded{
                        [&](const Gaussian& k) {
                          const auto& a = as_vector(x);
                          const auto& b = as_vector(y);
                          check_dims(a, b);
                          return rbf((a - b).squaredNorm(), k.sigma2);
                        },
                        [&](const Polynomial& k) {
                          const auto& a = as_vector(x);
                          const auto& b = as_vector(y);
                          check_dims(a, b);
                          return std::pow(k.offset + a.dot(b), k.degree);
                        },
                        [&](const Linear&) {
                          const auto& a = as_vector(x);
                          const auto& b = as_vector(y);
                          check_dims(a, b);
                          return a.dot(b);
                        },
                        [&](const Explicit&) {
                          check_dims(as_vector(x), as_vector(y));
                          return explicit_features(spec, x).dot(explicit_features(spec, y));
                        },
                        [&](const GappedString& k) {
                          return string_subsequence_kernel(k.order, k.decay, as_string(x), as_string(y),
                                                           k.normalized);
                        },
                        [&](const GaussianOfKernel& k) {
                          const double inner = eval_kernel(*k.inner, x, y);
                          return std::exp(-inner * inner / (2.0 * k.sigma2));
                        },
                    },
                    spec.family);
}

Eigen::Index feature_dimension(const Explicit& map, Eigen::Index d) {
  switch (map.map) {
    case FeatureMapId::poly2: return 1 + d + d * (d + 1) / 2;
    case FeatureMapId::rbf_grid: return static_cast<Eigen::Index>(map.grid) * map.grid;
    case FeatureMapId::linear: return d;
  }
  return 0;
}

Eigen::MatrixXd feature_matrix(const Explicit& map, const Eigen::MatrixXd& x) {
  const Eigen::Index d = x.rows(), n = x.cols();
  Eigen::MatrixXd f(feature_dimension(map, d), n);
  switch (map.map) {
    case FeatureMapId::poly2: {
      const double s2 = std::sqrt(2.0);
      for (Eigen::Index c = 0; c < n; ++c) {
        Eigen::Index r = 0;
        f(r++, c) = 1.0;
        for (Eigen::Index i = 0; i < d; ++i) f(r++, c) = s2 * x(i, c);
        for (Eigen::Index i = 0; i < d; ++i)
          for (Eigen::Index j = i; j < d; ++j) f(r++, c) = (i == j ? 1.0 : s2) * x(i, c) * x(j, c);
      }
      break;
    }
    case FeatureMapId::rbf_grid: {
      if (d != 2) throw InvalidInput("rbf_grid features need 2D samples");
      const Eigen::VectorXd axis = grid_axis(map);
      const Eigen::Index g = map.grid;
      // exp factorizes over the two coordinates.
      Eigen::MatrixXd e1(g, n), e2(g, n);
      for (Eigen::Index c = 0; c < n; ++c)
        for (Eigen::Index k = 0; k < g; ++k) {
          e1(k, c) = rbf((x(0, c) - axis(k)) * (x(0, c) - axis(k)), map.sigma2);
          e2(k, c) = rbf((x(1, c) - axis(k)) * (x(1, c) - axis(k)), map.sigma2);
        }
      for (Eigen::Index c = 0; c < n; ++c)
        for (Eigen::Index i = 0; i < g; ++i)
          for (Eigen::Index j = 0; j < g; ++j) f(i * g + j, c) = e1(i, c) * e2(j, c);
      break;
    }
    case FeatureMapId::linear: f = x; break;
  }
  return f;
}

Eigen::MatrixXd feature_matrix(const KernelSpec& spec, const SampleSet& x) {
  const auto* map = std::get_if<Explicit>(&spec.family);
  if (!map) throw ConfigError("kernel '" + kernel_family_name(spec) + "' has no explicit feature map");
  validate(spec);
  if (x.is_text()) throw InvalidInput("explicit feature maps need vector samples");
  return feature_matrix(*map, x.matrix());
}

Eigen::VectorXd explicit_features(const KernelSpec& spec, const Sample& x) {
  const auto* map = std::get_if<Explicit>(&spec.family);
  if (!map) throw ConfigError("kernel '" + kernel_family_name(spec) + "' has no explicit feature map");
  const auto& v = as_vector(x);
  return feature_matrix(*map, Eigen::MatrixXd(v));
}

Eigen::MatrixXd gram(const KernelSpec& spec, const SampleSet& a, const SampleSet& b) {
  return any_gram(spec, a, b, &a == &b);
}

Eigen::MatrixXd gram(const KernelSpec& spec, const SampleSet& a) { return any_gram(spec, a, a, true); }

double string_subsequence_kernel(int p, double decay, const std::string& s, const std::string& t,
                                 bool normalized) {
  if (p < 1) throw ConfigError("string kernel order must be at least 1");
  if (!(decay > 0 && decay < 1)) throw ConfigError("string kernel decay must lie in (0, 1)");
  if (!normalized) return ssk_raw(p, decay, s, t);
  if (s.empty() || t.empty()) throw InvalidInput("normalized string kernel is undefined for empty strings");
  const double kss = ssk_raw(p, decay, s, s);
  const double ktt = ssk_raw(p, decay, t, t);
  if (kss <= 0 || ktt <= 0) throw InvalidInput("normalized string kernel is undefined for strings shorter than the order");
  if (s == t) return 1.0;
  const double v = ssk_raw(p, decay, s, t) / std::sqrt(kss * ktt);
  return std::min(1.0, std::max(0.0, v));
}

GramBundle lagged_grams(const KernelSpec& spec, const SampleSet& x, const SampleSet& y, double epsilon) {
  if (x.size() != y.size())
    throw InvalidInput("paired sets differ in size: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  if (!x.same_kind(y)) throw InvalidInput("paired sets have different sample kinds");
  if (!(epsilon >= 0)) throw ConfigError("epsilon must be nonnegative");
  GramBundle b;
  b.g_xx = gram(spec, x);
  b.g_yy = gram(spec, y);
  b.g_xy = gram(spec, x, y);
  b.g_yx = b.g_xy.transpose();
  b.n = x.size();
  b.epsilon = epsilon;
  b.kernel = spec;
  b.x = x;
  b.y = y;
  return b;
}

GramBundle make_bundle(Eigen::MatrixXd g_xx, Eigen::MatrixXd g_yy, Eigen::MatrixXd g_xy, double epsilon) {
  GramBundle b;
  b.n = g_xx.rows();
  b.g_yx = g_xy.transpose();
  b.g_xx = std::move(g_xx);
  b.g_yy = std::move(g_yy);
  b.g_xy = std::move(g_xy);
  b.epsilon = epsilon;
  check_bundle(b);
  return b;
}

void check_bundle(const GramBundle& b) {
  const Eigen::Index n = b.n;
  if (n < 1) throw InvalidInput("Gram bundle is empty");
  for (const auto* m : {&b.g_xx, &b.g_yy, &b.g_xy, &b.g_yx}) {
    if (m->rows() != n || m->cols() != n) throw InvalidInput("Gram bundle matrices must be n x n");
    if (!m->allFinite()) throw InvalidInput("Gram bundle contains non-finite entries");
  }
  if (!(b.epsilon >= 0)) throw InvalidInput("epsilon must be nonnegative");
  if (b.g_yx != b.g_xy.transpose()) throw InvalidInput("g_yx is not the transpose of g_xy");
  const double scale = std::max(1.0, b.g_xx.cwiseAbs().maxCoeff());
  if ((b.g_xx - b.g_xx.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw InvalidInput("g_xx is not symmetric");
}

}  // namespace kto
