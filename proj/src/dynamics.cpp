#include "kto/dynamics.hpp"

#include <cmath>
#include <string>

namespace kto {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::Vector2d apply_map(const SimpleMap& spec, const Eigen::Vector2d& x) {
  return {spec.a * x(0), spec.b * x(1) + (spec.b - spec.a * spec.a) * x(0) * x(0)};
}

SampleSet simulate_map(const SimpleMap& spec, const SampleSet& x) {
  if (x.is_text() || x.dim() != 2) throw InvalidInput("simple map needs 2D vector samples");
  MatrixXd y(2, x.size());
  for (Index i = 0; i < x.size(); ++i) y.col(i) = apply_map(spec, x.matrix().col(i));
  return SampleSet(std::move(y));
}

PotentialValue potential_and_gradient(const PotentialSpec& spec, const VectorXd& x) {
  PotentialValue out;
  if (const auto* ou = std::get_if<OuQuadratic>(&spec)) {
    out.value = 0.5 * ou->alpha * x.squaredNorm();
    out.gradient = ou->alpha * x;
    return out;
  }
  const auto& lemon = std::get<LemonSlice>(spec);
  if (x.size() != 2) throw InvalidInput("lemon slice potential is defined on R^2");
  const double r2 = x.squaredNorm();
  if (r2 == 0.0) throw InvalidInput("lemon slice potential: angle undefined at the origin");
  const double r = std::sqrt(r2);
  const double theta = std::atan2(x(1), x(0));
  out.value = std::cos(lemon.a * theta) + 10.0 * (r - 1.0) * (r - 1.0);
  const double s = -lemon.a * std::sin(lemon.a * theta) / r2;
  const double radial = 20.0 * (r - 1.0) / r;
  out.gradient.resize(2);
  out.gradient(0) = s * -x(1) + radial * x(0);
  out.gradient(1) = s * x(0) + radial * x(1);
  return out;
}

void validate(const SdeSpec& spec) {
  if (!(spec.h > 0)) throw ConfigError("step size h must be positive");
  if (!(spec.diffusion >= 0)) throw ConfigError("diffusion must be nonnegative");
  if (spec.lag_steps < 1) throw ConfigError("lag steps must be at least 1");
  if (const auto* ou = std::get_if<OuQuadratic>(&spec.potential); ou && !(ou->alpha > 0))
    throw ConfigError("alpha must be positive");
}

SdeSpec make_ou_sde(double alpha, double diffusion, double h, int lag_steps) {
  SdeSpec s;
  s.potential = OuQuadratic{alpha * diffusion};
  s.diffusion = diffusion;
  s.h = h;
  s.lag_steps = lag_steps;
  validate(s);
  return s;
}

namespace {

void em_step(const SdeSpec& spec, VectorXd& x, double noise_scale, Rng& rng) {
  const VectorXd grad = potential_and_gradient(spec.potential, x).gradient;
  x -= grad * spec.h;
  if (noise_scale > 0)
    for (Index i = 0; i < x.size(); ++i) x(i) += noise_scale * rng.normal();
}

}  // namespace

VectorXd euler_maruyama_endpoint(const SdeSpec& spec, const VectorXd& x0, Index n_steps, Rng& rng) {
  validate(spec);
  const double noise = std::sqrt(2.0 * spec.diffusion * spec.h);
  VectorXd x = x0;
  for (Index k = 0; k < n_steps; ++k) {
    em_step(spec, x, noise, rng);
    if (!x.allFinite()) throw NumericalError("Euler-Maruyama blew up at step " + std::to_string(k + 1));
  }
  return x;
}

Trajectory euler_maruyama(const SdeSpec& spec, const VectorXd& x0, Index n_steps, std::uint64_t seed) {
  validate(spec);
  if (n_steps < 0) throw InvalidInput("number of steps must be nonnegative");
  if (!x0.allFinite()) throw InvalidInput("initial state is not finite");
  Trajectory t;
  t.h = spec.h;
  t.seed = seed;
  t.states.resize(x0.size(), n_steps + 1);
  t.states.col(0) = x0;
  Rng rng(seed);
  const double noise = std::sqrt(2.0 * spec.diffusion * spec.h);
  VectorXd x = x0;
  for (Index k = 0; k < n_steps; ++k) {
    em_step(spec, x, noise, rng);
    if (!x.allFinite()) throw NumericalError("Euler-Maruyama blew up at step " + std::to_string(k + 1));
    t.states.col(k + 1) = x;
  }
  return t;
}

double ou_exact_step(double alpha, double diffusion, double t, double x0, Rng& rng) {
  const double decay = std::exp(-alpha * diffusion * t);
  const double var = (1.0 - decay * decay) / alpha;
  return x0 * decay + std::sqrt(var) * rng.normal();
}

std::pair<SampleSet, SampleSet> lag_pairs(const Trajectory& traj, Index m, Index stride) {
  if (m < 0) throw InvalidInput("lag must be nonnegative");
  if (stride < 1) throw InvalidInput("stride must be at least 1");
  const Index len = traj.length();
  if (len <= m) throw InvalidInput("trajectory of length " + std::to_string(len) + " is too short for lag " +
                                   std::to_string(m));
  const Index count = (len - m - 1) / stride + 1;
  SampleSet all(traj.states);
  return {all.slice(0, count, stride), all.slice(m, count, stride)};
}

std::pair<SampleSet, SampleSet> burst_pairs(const SdeSpec& spec, const MatrixXd& starts, Index n_steps,
                                            std::uint64_t seed) {
  validate(spec);
  MatrixXd ends(starts.rows(), starts.cols());
  const Rng root(seed);
  for (Index i = 0; i < starts.cols(); ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    ends.col(i) = euler_maruyama_endpoint(spec, starts.col(i), n_steps, rng);
  }
  return {SampleSet(starts), SampleSet(std::move(ends))};
}

MatrixXd uniform_box(Index n, Index d, double lo, double hi, Rng& rng) {
  MatrixXd x(d, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < d; ++i) x(i, j) = rng.uniform(lo, hi);
  return x;
}

}  // namespace kto
