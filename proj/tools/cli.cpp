#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "kto/analysis.hpp"
#include "kto/dynamics.hpp"
#include "kto/edmd.hpp"
#include "kto/error.hpp"
#include "kto/io.hpp"
#include "kto/kernels.hpp"
#include "kto/operators.hpp"

namespace kto::cli {

namespace {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Files written by the current command; removed again if it fails.
class Outputs {
 public:
  void track(const std::string& path) {
    if (!path.empty()) paths_.push_back(path);
  }
  void discard() noexcept {
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
    paths_.clear();
  }

 private:
  std::vector<std::string> paths_;
};

struct KernelArgs {
  std::string family = "gaussian";
  double sigma2 = 0.3;
  int degree = 2;
  double offset = 1.0;
  std::string feature_map = "poly2";
  double feature_sigma2 = 0.1;
  int grid = 50;
  double grid_lo = -2.0;
  double grid_hi = 2.0;
  int order = 2;
  double decay = 0.9;
  bool normalized = true;

  KernelSpec build() const {
    KernelSpec spec;
    if (family == "gaussian") {
      spec.family = Gaussian{sigma2};
    } else if (family == "polynomial") {
      spec.family = Polynomial{degree, offset};
    } else if (family == "linear") {
      spec.family = Linear{};
    } else if (family == "explicit") {
      spec.family = explicit_map();
    } else if (family == "gapped_string") {
      spec.family = GappedString{order, decay, normalized};
    } else if (family == "gaussian_of_kernel") {
      spec.family = GaussianOfKernel{std::make_shared<const KernelSpec>(KernelSpec{GappedString{order, decay, normalized}}),
                                     sigma2};
    } else {
      throw ConfigError("unknown kernel family '" + family + "'");
    }
    validate(spec);
    return spec;
  }

  Explicit explicit_map() const { return Explicit{parse_feature_map(feature_map), feature_sigma2, grid, grid_lo, grid_hi}; }
};

void add_kernel_options(CLI::App* sub, KernelArgs& k) {
  const std::string g = "Kernel";
  sub->add_option("--kernel", k.family, "gaussian | polynomial | linear | explicit | gapped_string | gaussian_of_kernel")
      ->group(g);
  sub->add_option("--sigma2", k.sigma2, "Gaussian bandwidth (also the outer bandwidth of gaussian_of_kernel)")->group(g);
  sub->add_option("--degree", k.degree, "polynomial degree")->group(g);
  sub->add_option("--offset", k.offset, "polynomial offset")->group(g);
  sub->add_option("--feature-map", k.feature_map, "explicit feature map: poly2 | rbf_grid | linear")->group(g);
  sub->add_option("--feature-sigma2", k.feature_sigma2, "rbf_grid bump width")->group(g);
  sub->add_option("--grid", k.grid, "rbf_grid points per axis")->group(g);
  sub->add_option("--grid-lo", k.grid_lo, "rbf_grid lower corner")->group(g);
  sub->add_option("--grid-hi", k.grid_hi, "rbf_grid upper corner")->group(g);
  sub->add_option("--order", k.order, "string kernel subsequence length")->group(g);
  sub->add_option("--decay", k.decay, "string kernel gap decay")->group(g);
  sub->add_option("--normalized", k.normalized, "normalize the string kernel")->group(g);
}

void add_feature_map_options(CLI::App* sub, KernelArgs& k) {
  const std::string g = "Features";
  sub->add_option("--feature-map", k.feature_map, "poly2 | rbf_grid | linear")->group(g);
  sub->add_option("--feature-sigma2", k.feature_sigma2, "rbf_grid bump width")->group(g);
  sub->add_option("--grid", k.grid, "rbf_grid points per axis")->group(g);
  sub->add_option("--grid-lo", k.grid_lo, "rbf_grid lower corner")->group(g);
  sub->add_option("--grid-hi", k.grid_hi, "rbf_grid upper corner")->group(g);
}

// The effective option values of a subcommand, keyed like the config file.
Json config_echo(const CLI::App& sub) {
  Json j = Json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : " ") + r;
    } else {
      value = opt->get_default_str();
    }
    j[opt->get_lnames().front()] = value;
  }
  return j;
}

struct Context {
  std::string command;
  std::uint64_t seed = 0;
  Json config;
  Outputs outputs;
  std::ostream* out = nullptr;

  Json header() const {
    Json h;
    h["tool"] = "kto";
    h["command"] = command;
    h["seed"] = seed;
    h["config"] = config;
    return h;
  }

  std::vector<std::string> comments() const {
    std::vector<std::string> c{"kto " + command, "seed=" + std::to_string(seed)};
    for (const auto& [k, v] : config.items()) c.push_back("config " + k + "=" + v.get<std::string>());
    return c;
  }

  void write_json(const std::string& path, Json body) {
    Json doc = header();
    for (auto& [k, v] : body.items()) doc[k] = std::move(v);
    outputs.track(path);
    write_text_file(path, doc.dump(2) + "\n");
  }

  void write_matrix(const std::string& path, const MatrixXd& rows, std::vector<std::string> extra = {}) {
    std::vector<std::string> c = comments();
    c.insert(c.end(), extra.begin(), extra.end());
    outputs.track(path);
    write_matrix_csv(path, rows, c);
  }

  void write_samples(const std::string& path, const SampleSet& s) {
    outputs.track(path);
    write_samples_csv(path, s, comments());
  }
};

void require_path(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing required option --") + what);
}

MatrixXd stack_complex(const Eigen::MatrixXcd& v) {
  MatrixXd out(v.rows(), 2 * v.cols());
  for (Index l = 0; l < v.cols(); ++l) {
    out.col(2 * l) = v.col(l).real();
    out.col(2 * l + 1) = v.col(l).imag();
  }
  return out;
}

std::string complex_columns(Index m) {
  std::string s;
  for (Index l = 0; l < m; ++l) s += (l ? "," : "") + ("re" + std::to_string(l + 1) + ",im" + std::to_string(l + 1));
  return s;
}

// Regular grid over the bounding box of 1D or 2D vector data.
MatrixXd bounding_grid(const MatrixXd& x, int n) {
  const VectorXd lo = x.rowwise().minCoeff(), hi = x.rowwise().maxCoeff();
  auto axis = [&](Index i) { return VectorXd(VectorXd::LinSpaced(n, lo(i), hi(i))); };
  if (x.rows() == 1) return axis(0).transpose();
  MatrixXd g(2, static_cast<Index>(n) * n);
  const VectorXd a = axis(0), b = axis(1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g.col(static_cast<Index>(i) * n + j) << a(i), b(j);
  return g;
}

void export_eigenfunctions(Context& ctx, const SpectrumResult& s, const SampleSet& x, const std::string& path,
                           int grid_n) {
  if (path.empty()) return;
  if (x.is_vector() && x.dim() <= 2) {
    const MatrixXd g = bounding_grid(x.matrix(), grid_n);
    const Eigen::MatrixXcd values = eval_eigenfunctions(s, SampleSet(g));
    MatrixXd rows(g.cols(), g.rows() + 2 * values.cols());
    rows << g.transpose(), stack_complex(values);
    std::string cols = g.rows() == 1 ? "x1" : "x1,x2";
    ctx.write_matrix(path, rows, {"columns " + cols + "," + complex_columns(values.cols())});
  } else {
    const Eigen::MatrixXcd values = eval_eigenfunctions(s, x);
    ctx.write_matrix(path, stack_complex(values),
                     {"eigenfunctions at the training points", "columns " + complex_columns(values.cols())});
  }
}

GramBundle load_gram_dir(const std::string& dir, KernelSpec& kernel, SampleSet& x, double& epsilon) {
  const Json m = Json::parse(read_text_file((fs::path(dir) / "manifest.json").string()));
  try {
    kernel = kernel_from_json(m.at("kernel"));
    epsilon = m.at("epsilon").get<double>();
    x = read_samples_csv((fs::path(dir) / m.at("files").at("x").get<std::string>()).string());
    const SampleSet y = read_samples_csv((fs::path(dir) / m.at("files").at("y").get<std::string>()).string());
    auto mat = [&](const char* key) { return read_matrix_csv((fs::path(dir) / m.at("files").at(key).get<std::string>()).string()); };
    GramBundle g = make_bundle(mat("g_xx"), mat("g_yy"), mat("g_xy"), epsilon);
    g.kernel = kernel;
    g.x = x;
    g.y = y;
    check_bundle(g);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed gram manifest: ") + e.what());
  }
}

std::pair<SampleSet, SampleSet> read_pairs(const std::string& xp, const std::string& yp) {
  require_path(xp, "x");
  require_path(yp, "y");
  SampleSet x = read_samples_csv(xp), y = read_samples_csv(yp);
  if (x.size() != y.size()) throw InvalidInput("X and Y files hold different numbers of samples");
  if (!x.same_kind(y)) throw InvalidInput("X and Y files hold different kinds of samples");
  return {std::move(x), std::move(y)};
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string system = "simple_map";
  std::string mode = "pairs";
  Index n = 1000;
  double lo = -2.0, hi = 2.0;
  double a = 0.8, b = 0.7;
  double alpha = 4.0;
  double potential_a = 5.0;
  double diffusion = 0.25;
  double h = 1e-3;
  int lag_steps = 1;
  Index dim = 1;
  bool exact = false;
  std::vector<double> x0;
  std::string out, out_x, out_y;
};

void add_simulate(CLI::App& app, SimulateArgs& s, std::uint64_t& seed, std::function<void()>& action,
                  Context& ctx) {
  auto* sub = app.add_subcommand("simulate", "Generate training data from a benchmark system");
  sub->add_option("--system", s.system, "simple_map | ou | lemon_slice");
  sub->add_option("--mode", s.mode, "pairs (independent starts) | trajectory (one long run)");
  sub->add_option("--n", s.n, "number of pairs, or number of steps of the trajectory");
  sub->add_option("--lo", s.lo, "lower bound of the uniform start box");
  sub->add_option("--hi", s.hi, "upper bound of the uniform start box");
  sub->add_option("--a", s.a, "simple map parameter a");
  sub->add_option("--b", s.b, "simple map parameter b");
  sub->add_option("--alpha", s.alpha, "OU friction alpha");
  sub->add_option("--potential-a", s.potential_a, "lemon slice angular frequency");
  sub->add_option("--diffusion", s.diffusion, "diffusion constant D");
  sub->add_option("--dt", s.h, "Euler-Maruyama step size");
  sub->add_option("--lag-steps", s.lag_steps, "integration steps per lag time (pairs) or recorded step (trajectory)");
  sub->add_option("--dim", s.dim, "OU state dimension");
  sub->add_option("--exact", s.exact, "draw OU pairs from the exact transition density");
  sub->add_option("--x0", s.x0, "trajectory start state")->delimiter(',');
  sub->add_option("--seed", seed, "random seed");
  sub->add_option("--out", s.out, "trajectory CSV (trajectory mode)");
  sub->add_option("--out-x", s.out_x, "X samples CSV (pairs mode)");
  sub->add_option("--out-y", s.out_y, "Y samples CSV (pairs mode)");
  sub->callback([&, sub] {
    ctx.command = "simulate";
    ctx.config = config_echo(*sub);
    action = [&] {
      if (s.n < 1) throw ConfigError("--n must be positive");
      Rng rng(seed);
      const bool map = s.system == "simple_map";
      SdeSpec sde;
      if (s.system == "ou") {
        sde = make_ou_sde(s.alpha, s.diffusion, s.h, s.lag_steps);
      } else if (s.system == "lemon_slice") {
        sde.potential = LemonSlice{s.potential_a};
        sde.diffusion = s.diffusion;
        sde.h = s.h;
        sde.lag_steps = s.lag_steps;
        validate(sde);
      } else if (!map) {
        throw ConfigError("unknown system '" + s.system + "'");
      }
      const SimpleMap f{s.a, s.b};
      const Index d = map || s.system == "lemon_slice" ? 2 : s.dim;
      if (s.mode == "pairs") {
        require_path(s.out_x, "out-x");
        require_path(s.out_y, "out-y");
        const MatrixXd starts = uniform_box(s.n, d, s.lo, s.hi, rng);
        SampleSet x(starts), y;
        if (map) {
          y = simulate_map(f, x);
        } else if (s.exact) {
          if (s.system != "ou") throw ConfigError("--exact applies to the ou system only");
          MatrixXd ends(d, s.n);
          const double t = s.h * s.lag_steps;
          for (Index j = 0; j < s.n; ++j)
            for (Index i = 0; i < d; ++i) ends(i, j) = ou_exact_step(s.alpha, s.diffusion, t, starts(i, j), rng);
          y = SampleSet(ends);
        } else {
          y = burst_pairs(sde, starts, s.lag_steps, seed).second;
        }
        ctx.write_samples(s.out_x, x);
        ctx.write_samples(s.out_y, y);
      } else if (s.mode == "trajectory") {
        require_path(s.out, "out");
        VectorXd x0 = VectorXd::Zero(d);
        if (s.system != "ou") x0(0) = 1.0;
        if (!s.x0.empty()) {
          if (static_cast<Index>(s.x0.size()) != d) throw ConfigError("--x0 has the wrong dimension");
          x0 = Eigen::Map<const VectorXd>(s.x0.data(), d);
        }
        Trajectory t;
        t.seed = seed;
        if (map) {
          t.h = 1.0;
          t.states.resize(2, s.n + 1);
          t.states.col(0) = x0;
          for (Index k = 0; k < s.n; ++k) t.states.col(k + 1) = apply_map(f, t.states.col(k));
        } else {
          const Trajectory full = euler_maruyama(sde, x0, s.n * s.lag_steps, seed);
          t = full;
          if (s.lag_steps > 1) {
            t.states.resize(d, s.n + 1);
            for (Index k = 0; k <= s.n; ++k) t.states.col(k) = full.states.col(k * s.lag_steps);
            t.h = s.h * s.lag_steps;
          }
        }
        ctx.outputs.track(s.out);
        write_trajectory_csv(s.out, t, ctx.comments());
      } else {
        throw ConfigError("unknown mode '" + s.mode + "'");
      }
    };
  });
}

// ------------------------------------------------------------------- pairs

struct PairsArgs {
  std::string trajectory, out_x, out_y;
  Index lag = 1, stride = 1;
};

void add_pairs(CLI::App& app, PairsArgs& p, std::uint64_t& seed, std::function<void()>& action, Context& ctx) {
  auto* sub = app.add_subcommand("pairs", "Extract time-lagged pairs from a trajectory CSV");
  sub->add_option("--trajectory", p.trajectory, "trajectory CSV");
  sub->add_option("--lag", p.lag, "lag in recorded steps");
  sub->add_option("--stride", p.stride, "take every stride-th start");
  sub->add_option("--seed", seed, "recorded seed");
  sub->add_option("--out-x", p.out_x, "X samples CSV");
  sub->add_option("--out-y", p.out_y, "Y samples CSV");
  sub->callback([&, sub] {
    ctx.command = "pairs";
    ctx.config = config_echo(*sub);
    action = [&] {
      require_path(p.trajectory, "trajectory");
      require_path(p.out_x, "out-x");
      require_path(p.out_y, "out-y");
      const Trajectory t = read_trajectory_csv(p.trajectory);
      auto [x, y] = lag_pairs(t, p.lag, p.stride);
      ctx.write_samples(p.out_x, x);
      ctx.write_samples(p.out_y, y);
    };
  });
}

// -------------------------------------------------------------------- gram

struct GramArgs {
  std::string x, y, out_dir;
  double epsilon = 1e-6;
  KernelArgs kernel;
};

void add_gram(CLI::App& app, GramArgs& g, std::uint64_t& seed, std::function<void()>& action, Context& ctx) {
  auto* sub = app.add_subcommand("gram", "Assemble and cache the four Gram matrices");
  sub->add_option("--x", g.x, "X samples CSV");
  sub->add_option("--y", g.y, "Y samples CSV");
  sub->add_option("--epsilon", g.epsilon, "regularization recorded in the manifest");
  add_kernel_options(sub, g.kernel);
  sub->add_option("--seed", seed, "recorded seed");
  sub->add_option("--out-dir", g.out_dir, "directory for g_xx/g_yy/g_xy/g_yx CSVs and manifest.json");
  sub->callback([&, sub] {
    ctx.command = "gram";
    ctx.config = config_echo(*sub);
    action = [&] {
      require_path(g.out_dir, "out-dir");
      const KernelSpec k = g.kernel.build();
      auto [x, y] = read_pairs(g.x, g.y);
      const GramBundle b = lagged_grams(k, x, y, g.epsilon);
      const fs::path dir(g.out_dir);
      if (!fs::exists(dir)) {
        ctx.outputs.track(dir.string());
        fs::create_directories(dir);
      }
      ctx.write_samples((dir / "x.csv").string(), x);
      ctx.write_samples((dir / "y.csv").string(), y);
      ctx.write_matrix((dir / "g_xx.csv").string(), b.g_xx);
      ctx.write_matrix((dir / "g_yy.csv").string(), b.g_yy);
      ctx.write_matrix((dir / "g_xy.csv").string(), b.g_xy);
      ctx.write_matrix((dir / "g_yx.csv").string(), b.g_yx);
      Json body;
      body["format"] = "kto.gram";
      body["kernel"] = to_json(k);
      body["epsilon"] = g.epsilon;
      body["n"] = b.n;
      body["files"] = Json{{"x", "x.csv"}, {"y", "y.csv"}, {"g_xx", "g_xx.csv"},
                           {"g_yy", "g_yy.csv"}, {"g_xy", "g_xy.csv"}, {"g_yx", "g_yx.csv"}};
      ctx.write_json((dir / "manifest.json").string(), std::move(body));
    };
  });
}

// -------------------------------------------------------------------- eigs

struct EigsArgs {
  std::string x, y, gram_dir, out, grid_out;
  std::string op = "kernel_koopman", method = "auto", route = "auto";
  double epsilon = 1e-6, rank_tol = 1e-12;
  Index r = 10, feature_route_min_n = 2000;
  int grid_n = 50;
  KernelArgs kernel;
};

void add_eigs(CLI::App& app, EigsArgs& e, std::uint64_t& seed, std::function<void()>& action, Context& ctx) {
  auto* sub = app.add_subcommand("eigs", "Eigenvalues and eigenfunctions of an empirical transfer operator");
  sub->add_option("--x", e.x, "X samples CSV");
  sub->add_option("--y", e.y, "Y samples CSV");
  sub->add_option("--gram-dir", e.gram_dir, "use a cache written by the gram command instead of --x/--y/kernel");
  add_kernel_options(sub, e.kernel);
  auto* eps_opt = sub->add_option("--epsilon", e.epsilon, "Tikhonov regularization epsilon");
  sub->add_option("--operator", e.op, "kernel_pf | kernel_koopman | embedded_pf | embedded_koopman");
  sub->add_option("--r", e.r, "number of eigenpairs");
  sub->add_option("--method", e.method, "auto | dense | compressed");
  sub->add_option("--rank-tol", e.rank_tol, "relative pivoted-Cholesky tolerance of the compressed method");
  sub->add_option("--route", e.route, "auto | gram | features (explicit kernels, kernel_koopman only)");
  sub->add_option("--feature-route-min-n", e.feature_route_min_n, "sample count from which auto uses the feature route");
  sub->add_option("--grid-n", e.grid_n, "eigenfunction grid points per axis");
  sub->add_option("--seed", seed, "recorded seed");
  sub->add_option("--out", e.out, "spectrum JSON");
  sub->add_option("--grid-out", e.grid_out, "eigenfunction values CSV (grid over the data bounding box)");
  sub->callback([&, sub, eps_opt] {
    ctx.command = "eigs";
    ctx.config = config_echo(*sub);
    action = [&, eps_opt] {
      require_path(e.out, "out");
      if (e.grid_n < 2) throw ConfigError("--grid-n must be at least 2");
      const OperatorKind kind = parse_operator_kind(e.op);
      EigOptions opts;
      opts.method = parse_eig_method(e.method);
      opts.rank_tol = e.rank_tol;

      KernelSpec kernel;
      SampleSet x, y;
      std::optional<GramBundle> bundle;
      double eps = e.epsilon;
      if (!e.gram_dir.empty()) {
        bundle = load_gram_dir(e.gram_dir, kernel, x, eps);
        y = *bundle->y;
        if (eps_opt->count() > 0) {
          eps = e.epsilon;
          bundle->epsilon = eps;
        }
      } else {
        kernel = e.kernel.build();
        std::tie(x, y) = read_pairs(e.x, e.y);
      }
      if (e.route != "auto" && e.route != "gram" && e.route != "features")
        throw ConfigError("unknown route '" + e.route + "'");
      bool features = e.route == "features";
      if (features && (!kernel.is_explicit() || kind != OperatorKind::kernel_koopman))
        throw ConfigError("the feature route needs an explicit kernel and the kernel_koopman operator");
      if (e.route == "auto")
        features = kernel.is_explicit() && kind == OperatorKind::kernel_koopman && x.size() >= e.feature_route_min_n;

      SpectrumResult s;
      if (features) {
        EdmdOptions eo;
        eo.eigen_count = e.r;
        eo.method = opts.method;
        eo.rank_tol = e.rank_tol;
        eo.compute_modes = false;
        const EdmdModel m = explicit_edmd(std::get<Explicit>(kernel.family), x, y, eps, eo);
        s = edmd_spectrum(m, &x);
      } else {
        if (!bundle) bundle = lagged_grams(kernel, x, y, eps);
        s = eig_transfer(kind, *bundle, e.r, opts);
      }
      Json body = to_json(s);
      body["route"] = features ? "features" : "gram";
      ctx.write_json(e.out, std::move(body));
      export_eigenfunctions(ctx, s, x, e.grid_out, e.grid_n);
    };
  });
}

// --------------------------------------------------------------- propagate

struct PropagateArgs {
  std::string x, y, values, out;
  std::string op = "embedded_pf", input = "density";
  double epsilon = 1e-6;
  int steps = 1;
  KernelArgs kernel;
};

void add_propagate(CLI::App& app, PropagateArgs& p, std::uint64_t& seed, std::function<void()>& action, Context& ctx) {
  auto* sub = app.add_subcommand("propagate", "Apply an empirical operator to an embedded density or observable");
  sub->add_option("--x", p.x, "X samples CSV");
  sub->add_option("--y", p.y, "Y samples CSV");
  add_kernel_options(sub, p.kernel);
  sub->add_option("--epsilon", p.epsilon, "Tikhonov regularization epsilon");
  sub->add_option("--operator", p.op, "kernel_pf | kernel_koopman | embedded_pf | embedded_koopman");
  sub->add_option("--input", p.input, "density (empirical embedding of X) | observable (values at X)");
  sub->add_option("--values", p.values, "observable values at the X samples, one per row");
  sub->add_option("--steps", p.steps, "number of applications");
  sub->add_option("--seed", seed, "recorded seed");
  sub->add_option("--out", p.out, "coefficients JSON");
  sub->callback([&, sub] {
    ctx.command = "propagate";
    ctx.config = config_echo(*sub);
    action = [&] {
      require_path(p.out, "out");
      if (p.steps < 1) throw ConfigError("--steps must be at least 1");
      const OperatorKind kind = parse_operator_kind(p.op);
      const KernelSpec k = p.kernel.build();
      auto [x, y] = read_pairs(p.x, p.y);
      RkhsElement elem;
      if (p.input == "density") {
        elem = embed_density(x);
      } else if (p.input == "observable") {
        require_path(p.values, "values");
        const MatrixXd v = read_matrix_csv(p.values);
        if (v.cols() != 1) throw InvalidInput("observable CSV must have one column");
        elem = embed_observable(v.col(0), x.size());
      } else {
        throw ConfigError("unknown input '" + p.input + "'");
      }
      const EmpiricalOperator op = estimate_operator(kind, lagged_grams(k, x, y, p.epsilon));
      for (int i = 0; i < p.steps; ++i) elem = apply_operator(op, elem);
      Json body = to_json(elem);
      body["used_pseudoinverse"] = op.used_pseudoinverse();
      const VectorXd at = evaluate_on_training(op.grams(), elem, elem.basis);
      body["values_on_basis"] = std::vector<double>(at.data(), at.data() + at.size());
      ctx.write_json(p.out, std::move(body));
    };
  });
}

// -------------------------------------------------------------------- edmd

struct EdmdArgs {
  std::string x, y, out, method = "auto";
  double epsilon = 0.0, rank_tol = 1e-12;
  Index r = -1;
  bool modes = true;
  std::vector<double> predict;
  KernelArgs kernel;
};

void add_edmd(CLI::App& app, EdmdArgs& a, std::uint64_t& seed, std::function<void()>& action, Context& ctx) {
  auto* sub = app.add_subcommand("edmd", "Explicit-feature Koopman model with modes");
  sub->add_option("--x", a.x, "X samples CSV");
  sub->add_option("--y", a.y, "Y samples CSV");
  add_feature_map_options(sub, a.kernel);
  sub->add_option("--epsilon", a.epsilon, "Tikhonov regularization epsilon");
  sub->add_option("--r", a.r, "number of eigenpairs (-1: all)");
  sub->add_option("--method", a.method, "auto | dense | compressed");
  sub->add_option("--rank-tol", a.rank_tol, "relative pivoted-Cholesky tolerance of the compressed method");
  sub->add_option("--modes", a.modes, "compute Koopman modes of the full-state observable");
  sub->add_option("--predict", a.predict, "state to predict one lag ahead")->delimiter(',');
  sub->add_option("--seed", seed, "recorded seed");
  sub->add_option("--out", a.out, "model JSON");
  sub->callback([&, sub] {
    ctx.command = "edmd";
    ctx.config = config_echo(*sub);
    action = [&] {
      require_path(a.out, "out");
      auto [x, y] = read_pairs(a.x, a.y);
      EdmdOptions eo;
      eo.eigen_count = a.r;
      eo.method = parse_eig_method(a.method);
      eo.rank_tol = a.rank_tol;
      eo.compute_modes = a.modes || !a.predict.empty();
      const EdmdModel m = explicit_edmd(a.kernel.explicit_map(), x, y, a.epsilon, eo);
      Json body = to_json(m);
      if (!a.predict.empty()) {
        const VectorXd q = Eigen::Map<const VectorXd>(a.predict.data(), static_cast<Index>(a.predict.size()));
        const Prediction p = predict_observable(m, q);
        body["prediction"] = Json{{"state", std::vector<double>(p.state.data(), p.state.data() + p.state.size())},
                                  {"imaginary_residue", p.imaginary_residue},
                                  {"complex_flag", p.complex_flag}};
      }
      ctx.write_json(a.out, std::move(body));
    };
  });
}

// -------------------------------------------------------------- tica / dmd

struct LinearArgs {
  std::string x, y, out, coords_out;
  Index r = -1;
  bool center = false, symmetrize = false;
};

void add_tica(CLI::App& app, LinearArgs& t, std::uint64_t& seed, std::function<void()>& action, Context& ctx) {
  auto* sub = app.add_subcommand("tica", "Time-lagged independent component analysis");
  sub->add_option("--x", t.x, "X samples CSV");
  sub->add_option("--y", t.y, "Y samples CSV");
  sub->add_option("--r", t.r, "number of components (-1: all)");
  sub->add_option("--center", t.center, "subtract the sample means first");
  sub->add_option("--symmetrize", t.symmetrize, "use (C_XY + C_YX) / 2");
  sub->add_option("--seed", seed, "recorded seed");
  sub->add_option("--out", t.out, "TICA JSON");
  sub->add_option("--coords-out", t.coords_out, "TICA coordinates CSV");
  sub->callback([&, sub] {
    ctx.command = "tica";
    ctx.config = config_echo(*sub);
    action = [&] {
      require_path(t.out, "out");
      auto [x, y] = read_pairs(t.x, t.y);
      TicaOptions o;
      o.center = t.center;
      o.symmetrize = t.symmetrize;
      const TicaResult r = tica(x.matrix(), y.matrix(), t.r, o);
      ctx.write_json(t.out, to_json(r));
      if (!t.coords_out.empty())
        ctx.write_matrix(t.coords_out, stack_complex(r.coordinates), {"columns " + complex_columns(r.coordinates.cols())});
    };
  });
}

void add_dmd(CLI::App& app, LinearArgs& t, std::uint64_t& seed, std::function<void()>& action, Context& ctx) {
  auto* sub = app.add_subcommand("dmd", "Dynamic mode decomposition");
  sub->add_option("--x", t.x, "X samples CSV");
  sub->add_option("--y", t.y, "Y samples CSV");
  sub->add_option("--r", t.r, "number of modes (-1: all)");
  sub->add_option("--seed", seed, "recorded seed");
  sub->add_option("--out", t.out, "DMD JSON");
  sub->callback([&, sub] {
    ctx.command = "dmd";
    ctx.config = config_echo(*sub);
    action = [&] {
      require_path(t.out, "out");
      auto [x, y] = read_pairs(t.x, t.y);
      const DmdResult d = dmd(x.matrix(), y.matrix(), t.r);
      Json body;
      Json rows = Json::array();
      for (Index i = 0; i < d.matrix.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < d.matrix.cols(); ++j) row.push_back(d.matrix(i, j));
        rows.push_back(std::move(row));
      }
      body["matrix"] = std::move(rows);
      body["eigenvalues"] = complex_vector_json(d.spectrum.eigenvalues);
      Json modes = Json::array();
      for (Index l = 0; l < d.spectrum.eigenvectors.cols(); ++l) modes.push_back(complex_vector_json(d.spectrum.eigenvectors.col(l)));
      body["modes"] = std::move(modes);
      body["used_pseudoinverse"] = d.used_pseudoinverse;
      ctx.write_json(t.out, std::move(body));
    };
  });
}

// ----------------------------------------------------------------- cluster

struct ClusterArgs {
  std::string points, spectrum, x, out, summary;
  int k = 5, restarts = 10, max_iterations = 300;
  Index count = -1;
};

void add_cluster(CLI::App& app, ClusterArgs& c, std::uint64_t& seed, std::function<void()>& action, Context& ctx) {
  auto* sub = app.add_subcommand("cluster", "k-means on points or on dominant eigenfunction coordinates");
  sub->add_option("--points", c.points, "CSV of points, one per row");
  sub->add_option("--spectrum", c.spectrum, "spectrum JSON from eigs; eigenfunctions are evaluated at --x");
  sub->add_option("--x", c.x, "samples at which to evaluate the eigenfunctions");
  sub->add_option("--count", c.count, "number of leading eigenfunctions to use (-1: all)");
  sub->add_option("--k", c.k, "number of clusters");
  sub->add_option("--restarts", c.restarts, "k-means++ restarts");
  sub->add_option("--max-iterations", c.max_iterations, "Lloyd iterations per restart");
  sub->add_option("--seed", seed, "random seed");
  sub->add_option("--out", c.out, "labels CSV, one row per point");
  sub->add_option("--summary", c.summary, "clustering JSON");
  sub->callback([&, sub] {
    ctx.command = "cluster";
    ctx.config = config_echo(*sub);
    action = [&] {
      require_path(c.out, "out");
      MatrixXd pts;
      if (!c.points.empty()) {
        if (!c.spectrum.empty()) throw ConfigError("give either --points or --spectrum, not both");
        pts = read_matrix_csv(c.points);
      } else {
        require_path(c.spectrum, "spectrum");
        require_path(c.x, "x");
        SpectrumResult s = spectrum_from_json(Json::parse(read_text_file(c.spectrum)));
        const Index m = c.count < 0 ? s.size() : c.count;
        if (m < 1 || m > s.size()) throw ConfigError("--count must lie in [1, " + std::to_string(s.size()) + "]");
        s.eigenvalues.conservativeResize(m);
        s.expansion.conservativeResize(Eigen::NoChange, m);
        s.coefficients.conservativeResize(Eigen::NoChange, m);
        pts = split_complex_columns(eval_eigenfunctions(s, read_samples_csv(c.x)));
      }
      KmeansOptions o;
      o.restarts = c.restarts;
      o.max_iterations = c.max_iterations;
      const ClusterResult r = kmeans(pts, c.k, seed, o);
      MatrixXd labels(static_cast<Index>(r.labels.size()), 1);
      for (std::size_t i = 0; i < r.labels.size(); ++i) labels(static_cast<Index>(i), 0) = r.labels[i];
      ctx.write_matrix(c.out, labels, {"columns label"});
      if (!c.summary.empty()) ctx.write_json(c.summary, to_json(r));
    };
  });
}

// --------------------------------------------------------------------- gap

struct GapArgs {
  std::string spectrum;
  double floor = 0.5;
};

void add_gap(CLI::App& app, GapArgs& g, std::uint64_t& seed, std::function<void()>& action, Context& ctx) {
  auto* sub = app.add_subcommand("gap", "Print the number of dominant eigenvalues before the largest gap");
  sub->add_option("--spectrum", g.spectrum, "spectrum JSON from eigs or edmd");
  sub->add_option("--floor", g.floor, "ignore gaps below this eigenvalue modulus");
  sub->add_option("--seed", seed, "recorded seed");
  sub->callback([&, sub] {
    ctx.command = "gap";
    ctx.config = config_echo(*sub);
    action = [&] {
      require_path(g.spectrum, "spectrum");
      const Json j = Json::parse(read_text_file(g.spectrum));
      if (!j.contains("eigenvalues")) throw InvalidInput("'" + g.spectrum + "' has no eigenvalues");
      *ctx.out << spectral_gap(complex_vector_from_json(j.at("eigenvalues")), g.floor) << '\n';
    };
  });
}

int report(std::ostream& err, const char* cls, const std::string& message, int code) {
  std::string flat = message;
  for (char& ch : flat)
    if (ch == '\n' || ch == '\r') ch = ' ';
  err << "error: class=" << cls << " message=" << flat << '\n';
  return code;
}

int code_for(ErrorClass c) {
  switch (c) {
    case ErrorClass::config: return usage;
    case ErrorClass::input: return input;
    case ErrorClass::numerical: return numerical;
  }
  return numerical;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Kernel transfer operator estimation: spectra, propagation, EDMD, TICA/DMD and clustering", "kto");
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "INI file with one [command] section of key = value lines")
      ->envname("KTO_CONFIG");
  app.allow_config_extras(false);
  app.require_subcommand(1, 1);
  app.footer("Every option of a command may also be given as key = value in the [command] section of the config "
             "file (default path from KTO_CONFIG); command-line flags override the file.\n"
             "Exit codes: 0 success, 2 usage/config, 3 input data, 4 numerical failure.");

  Context ctx;
  ctx.out = &out;
  std::function<void()> action;
  SimulateArgs sim;
  PairsArgs pairs;
  GramArgs gram;
  EigsArgs eigs;
  PropagateArgs prop;
  EdmdArgs edmd;
  LinearArgs tica_args, dmd_args;
  ClusterArgs cluster;
  GapArgs gap;
  add_simulate(app, sim, ctx.seed, action, ctx);
  add_pairs(app, pairs, ctx.seed, action, ctx);
  add_gram(app, gram, ctx.seed, action, ctx);
  add_eigs(app, eigs, ctx.seed, action, ctx);
  add_propagate(app, prop, ctx.seed, action, ctx);
  add_edmd(app, edmd, ctx.seed, action, ctx);
  add_tica(app, tica_args, ctx.seed, action, ctx);
  add_dmd(app, dmd_args, ctx.seed, action, ctx);
  add_cluster(app, cluster, ctx.seed, action, ctx);
  add_gap(app, gap, ctx.seed, action, ctx);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return ok;
    }
    return report(err, "config", e.what(), usage);
  } catch (const Error& e) {
    return report(err, to_string(e.error_class()), e.what(), code_for(e.error_class()));
  }

  try {
    if (!action) return report(err, "config", "no command given", usage);
    action();
    return ok;
  } catch (const Error& e) {
    ctx.outputs.discard();
    return report(err, to_string(e.error_class()), e.what(), code_for(e.error_class()));
  } catch (const nlohmann::json::exception& e) {
    ctx.outputs.discard();
    return report(err, "input", std::string("malformed JSON: ") + e.what(), input);
  } catch (const std::bad_alloc&) {
    ctx.outputs.discard();
    return report(err, "numerical", "out of memory", numerical);
  } catch (const std::exception& e) {
    ctx.outputs.discard();
    return report(err, "numerical", e.what(), numerical);
  }
}

}  // namespace kto::cli
