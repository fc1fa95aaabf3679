#pragma once

#include "bioconic/program.hpp"
#include "bioconic/types.hpp"

namespace bioconic {

// Homogeneous self-dual interior-point solver for the variables-in-cones
// programs this toolkit builds. Sparse LDLT with static regularization and
// iterative refinement; Nesterov-Todd scaling; Mehrotra predictor-corrector.
// Deterministic: fixed elimination ordering, no threads, no randomness.
struct SolverSettings {
  double feastol = 1e-8;
  double abstol = 1e-8;
  double reltol = 1e-8;
  // Relaxed thresholds applied when the iteration budget runs out.
  double feastol_inacc = 1e-4;
  double abstol_inacc = 5e-5;
  double reltol_inacc = 5e-5;
  int maxit = 200;
  int nitref = 9;          // iterative refinement steps per KKT solve
  double linsysacc = 1e-14;
  double staticreg = 7e-8; // diagonal regularization of the KKT system
  double stepmin = 1e-6;
  double stepmax = 0.999;
  double sigmamin = 1e-4;
  double sigmamax = 1.0;
  double gamma = 0.99;     // fraction-to-boundary scaling of the step
  bool equilibrate = true;
  int ruiz_iters = 10;
  bool verbose = false;
};

Solution solve(const ConicProgram& p, const SolverSettings& settings = {});

// Independent KKT audit of a solution against the (unscaled) program:
//   A x = b, x in K, c - A'y - z = 0, z in K*, x'z ~ 0.
// All entries are normalized residuals; pass() compares the worst with tol.
struct KktSummary {
  double primal_eq = 0;     // ||Ax - b||_inf / (1 + ||b||_inf)
  double cone_x = 0;        // worst cone violation of x
  double cone_z = 0;        // worst dual-cone violation of z
  double stationarity = 0;  // ||c - A'y - z||_inf / (1 + ||c||_inf)
  double complementarity = 0; // |x'z| / (1 + |c'x|)
  double worst() const;
  bool pass(double tol = 1e-7) const { return worst() <= tol; }
};

KktSummary verify_kkt(const ConicProgram& p, const Solution& sol);

// Worst cone violation of a vector laid out by the program's segments
// (nonnegative orthant margins, SOC margins, rotated-cone margins).
double cone_violation(const std::vector<Segment>& segments, const Vec& x);

} // namespace bioconic
