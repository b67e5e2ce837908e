#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <variant>

#include "kto/rng.hpp"
#include "kto/sample_set.hpp"

namespace kto {

/// F(x) = (a x1, b x2 + (b - a^2) x1^2).
struct SimpleMap {
  double a = 0.8;
  double b = 0.7;
};

SampleSet simulate_map(const SimpleMap& spec, const SampleSet& x);
Eigen::Vector2d apply_map(const SimpleMap& spec, const Eigen::Vector2d& x);

/// V(x) = (alpha / 2) |x|^2.
struct OuQuadratic {
  double alpha = 4.0;
};

/// V(x) = cos(a atan2(x2, x1)) + 10 (|x| - 1)^2.
struct LemonSlice {
  double a = 5.0;
};

using PotentialSpec = std::variant<OuQuadratic, LemonSlice>;

struct PotentialValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

PotentialValue potential_and_gradient(const PotentialSpec& spec, const Eigen::VectorXd& x);

/// dX = -grad V(X) dt + sqrt(2 D) dW, integrated with step h; lag_steps steps
/// make one lag time tau = lag_steps * h.
struct SdeSpec {
  PotentialSpec potential = LemonSlice{};
  double diffusion = 0.25;
  double h = 1e-3;
  int lag_steps = 1;
};

void validate(const SdeSpec& spec);

/// Gradient SDE reproducing the OU process dX = -alpha D X dt + sqrt(2D) dW.
/// The stored potential is pre-scaled: V = (alpha D / 2) |x|^2.
SdeSpec make_ou_sde(double alpha, double diffusion, double h, int lag_steps = 1);

struct Trajectory {
  Eigen::MatrixXd states;  // d x (steps + 1), one column per time point
  double h = 0.0;
  std::uint64_t seed = 0;

  Eigen::Index length() const { return states.cols(); }
};

/// x_{k+1} = x_k - grad V(x_k) h + sqrt(2 D h) xi_k. D = 0 is accepted.
/// Throws NumericalError naming the step when the state stops being finite.
Trajectory euler_maruyama(const SdeSpec& spec, const Eigen::VectorXd& x0, Eigen::Index n_steps, std::uint64_t seed);
/// Same integrator driven by an existing generator.
Eigen::VectorXd euler_maruyama_endpoint(const SdeSpec& spec, const Eigen::VectorXd& x0, Eigen::Index n_steps,
                                        Rng& rng);

/// Exact OU transition: N(x0 e^{-alpha D t}, (1/alpha)(1 - e^{-2 alpha D t})) per coordinate.
double ou_exact_step(double alpha, double diffusion, double t, double x0, Rng& rng);

/// X = states[0, stride, ...], Y = the same states shifted by m.
std::pair<SampleSet, SampleSet> lag_pairs(const Trajectory& traj, Eigen::Index m, Eigen::Index stride = 1);

/// Independent short bursts: each start column is integrated for n_steps
/// with its own seed derived from (seed, column index). Returns (starts, ends).
std::pair<SampleSet, SampleSet> burst_pairs(const SdeSpec& spec, const Eigen::MatrixXd& starts, Eigen::Index n_steps,
                                            std::uint64_t seed);

/// n points uniform on [lo, hi]^d, column per point.
Eigen::MatrixXd uniform_box(Eigen::Index n, Eigen::Index d, double lo, double hi, Rng& rng);

}  // namespace kto
