#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace morsekit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Third-derivative tensor stored as n slices: third[k](i,j) = d^3 f / dx_i dx_j dx_k.
using Tensor3 = std::vector<Mat>;

// Error taxonomy mirrored by the CLI exit codes: validation errors are user
// errors (exit 1), numerical errors are mathematical-consistency failures
// (exit 2).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Every tolerance used anywhere in the library, overridable from the CLI and
// recorded in run manifests.
struct Tolerances {
  double ode_abs = 1e-9;              // integrator absolute error per step
  double ode_rel = 1e-9;              // integrator relative error per step
  double level_event = 1e-10;         // |f - a| at located level crossings
  double newton_grad = 1e-10;         // ||grad f|| at polished critical points
  double nondegenerate_eig = 1e-8;    // minimum |eigenvalue| of the G-Hessian
  double dedup_distance = 1e-6;       // quotient distance merging Newton hits
  double metric_symmetry = 1e-12;     // ||A - A^T|| at probes
  double bundle_symmetry = 1e-10;     // hessian/third symmetry at probes
  double fd_gradient_rel = 1e-5;      // finite-difference gradient agreement
  double fd_hessian_rel = 1e-4;       // finite-difference hessian agreement
  double chart_invariance = 1e-8;     // coordinate-subspace invariance at charts
  double sqrt_eig_floor = 1e-10;      // SPD floor for matrix square roots
  double pullback_identity = 1e-8;    // normal-form defining identity residual
  double connection_pass = 1e-6;      // bisected trajectory distance to target
  double broken_match = 1e-4;         // anchor distance matching broken pairs
  double broken_locus = 1e-3;         // distance certifying an intermediate point
  double param_bisect = 1e-10;        // shooting-parameter bisection tolerance
  double anchor_jump = 5e-2;          // anchor discontinuity flagging a boundary
  double sign_det_floor = 1e-8;       // |det| below which a sign is suspect
  double margin_floor = 1e-3;         // transversality margin warning level
  double regular_value_gap = 1e-8;    // distance of a filtration level to critical values
  double t_max = 1e3;                 // flow time horizon
  double escape_radius = 1e6;         // Euclidean escape radius
  double ball_radius = 1e-3;          // limit-classification trapping ball
  double shoot_epsilon = 1e-4;        // unstable-sphere seeding radius
};

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace morsekit
