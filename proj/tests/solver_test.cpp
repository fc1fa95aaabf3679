#include "doctest.h"

#include <cmath>

#include "bioconic/program.hpp"
#include "bioconic/solver.hpp"

using namespace bioconic;

namespace {

ConicProgram hand_program(std::vector<Segment> segs,
                          const std::vector<Triplet>& trips, const Vec& b,
                          const Vec& c, double c0 = 0.0) {
  ConicProgram p;
  p.segments = std::move(segs);
  for (const auto& seg : p.segments) p.n_vars += seg.dim;
  p.A.resize(b.size(), p.n_vars);
  p.A.setFromTriplets(trips.begin(), trips.end());
  p.A.makeCompressed();
  p.b = b;
  p.c = c;
  p.c0 = c0;
  p.columns.resize(p.n_vars);
  for (Index j = 0; j < p.n_vars; ++j)
    p.columns[j].name = "x" + std::to_string(j);
  for (Index i = 0; i < b.size(); ++i)
    p.row_names.push_back("r" + std::to_string(i));
  p.check_shape();
  return p;
}

// Same scenario the program tests exercise: one tank, Contois on (S, X).
ScenarioCore contois_single(Index tau, Boundary boundary) {
  ScenarioCore sc;
  TankNetwork net;
  net.n_tanks = 1;
  net.volumes = Vec::Constant(1, 2.0);
  net.inflow_rates = Vec::Constant(1, 0.8);
  net.outflow_rates = Vec::Constant(1, 0.8);
  net.flows = Mat::Zero(1, 1);
  net.diffusion = Mat::Zero(1, 1);
  sc.schedule.snapshots = {net};

  TankKinetics tk;
  GrowthModel g;
  g.family = GrowthFamily::Contois;
  g.mu = 1.5;
  g.k = 0.7;
  g.substrate_index = 0;
  g.biomass_index = 1;
  tk.reactions = {g};
  tk.kappa = Mat::Zero(2, 1);
  tk.kappa << -2.0, 1.0;
  sc.kinetics.tanks = {tk};

  sc.grid = {tau, 0.05};
  sc.boundary = boundary;
  sc.xi0 = Vec::Zero(2);
  sc.xi0 << 4.0, 1.0;

  ObjectiveTerm term;
  term.family = ObjectiveFamily::SubstrateOutflow;
  term.eta = Vec::Zero(2);
  term.eta << 1.0, 0.0;
  sc.objective.terms = {{1.0, term}};

  sc.constraints.variable_influents = {{0, 0}};
  ConstraintSet::Bound ib{0, 0, 10.0};
  sc.constraints.influent_bounds = {ib};
  ConstraintSet::FixedInfluent fx;
  fx.tank = 0;
  fx.entry = 1;
  fx.values = Vec::Constant(1, 0.25);
  sc.constraints.fixed_influents = {fx};
  return sc;
}

} // namespace

TEST_CASE("LP vertex solution with exact duals") {
  // min x0 + 2 x1 + 3 x2  s.t.  x0 + x1 + x2 = 1, x >= 0
  Vec b(1), c(3);
  b << 1.0;
  c << 1.0, 2.0, 3.0;
  const auto p = hand_program({{SegKind::Nonneg, 0, 3}},
                              {{0, 0, 1.0}, {0, 1, 1.0}, {0, 2, 1.0}}, b, c);
  const Solution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.x(1) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(sol.x(2) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(sol.pobj == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(sol.y(0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.z(0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(sol.z(1) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.z(2) == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(verify_kkt(p, sol).pass(1e-7));
}

TEST_CASE("LP with negative costs") {
  // min -x0 - 2 x1  s.t.  x0 + x1 = 1, x >= 0
  Vec b(1), c(2);
  b << 1.0;
  c << -1.0, -2.0;
  const auto p = hand_program({{SegKind::Nonneg, 0, 2}},
                              {{0, 0, 1.0}, {0, 1, 1.0}}, b, c);
  const Solution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x(1) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.pobj == doctest::Approx(-2.0).epsilon(1e-8));
  CHECK(sol.dobj == doctest::Approx(-2.0).epsilon(1e-8));
  CHECK(sol.y(0) == doctest::Approx(-2.0).epsilon(1e-7));
  CHECK(sol.z(0) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(verify_kkt(p, sol).pass(1e-7));
}

TEST_CASE("SOC projection reaches the norm") {
  // min t  s.t.  t >= ||(u1, u2)||, u1 = 3, u2 = 4
  Vec b(2), c(3);
  b << 3.0, 4.0;
  c << 1.0, 0.0, 0.0;
  const auto p = hand_program({{SegKind::Soc, 0, 3}},
                              {{0, 1, 1.0}, {1, 2, 1.0}}, b, c);
  const Solution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.pobj == doctest::Approx(5.0).epsilon(1e-8));
  CHECK(sol.x(0) == doctest::Approx(5.0).epsilon(1e-7));
  CHECK(sol.y(0) == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(sol.y(1) == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(sol.z(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(sol.z(1) == doctest::Approx(-0.6).epsilon(1e-6));
  CHECK(sol.z(2) == doctest::Approx(-0.8).epsilon(1e-6));
  CHECK(verify_kkt(p, sol).pass(1e-7));
}

TEST_CASE("rotated cone reproduces the AM-GM bound") {
  // min u + v  s.t.  2 u v >= w^2, w = 2
  Vec b(1), c(3);
  b << 2.0;
  c << 1.0, 1.0, 0.0;
  const auto p =
      hand_program({{SegKind::Rsoc, 0, 3}}, {{0, 2, 1.0}}, b, c);
  const Solution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  const double rt2 = std::sqrt(2.0);
  CHECK(sol.pobj == doctest::Approx(2.0 * rt2).epsilon(1e-7));
  CHECK(sol.x(0) == doctest::Approx(rt2).epsilon(1e-6));
  CHECK(sol.x(1) == doctest::Approx(rt2).epsilon(1e-6));
  CHECK(sol.x(2) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(sol.y(0) == doctest::Approx(rt2).epsilon(1e-6));
  CHECK(verify_kkt(p, sol).pass(1e-7));
}

TEST_CASE("badly scaled LP is handled by equilibration") {
  // min 1e3 x0 + x1  s.t.  1e-3 x0 + x1 = 1, x >= 0
  Vec b(1), c(2);
  b << 1.0;
  c << 1e3, 1.0;
  const auto p = hand_program({{SegKind::Nonneg, 0, 2}},
                              {{0, 0, 1e-3}, {0, 1, 1.0}}, b, c);
  const Solution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.pobj == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.x(1) == doctest::Approx(1.0).epsilon(1e-6));
  // Dual accuracy degrades with the cost spread; stationarity still holds.
  CHECK(sol.y(0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(verify_kkt(p, sol).pass(1e-7));
}

TEST_CASE("primal infeasibility produces a Farkas certificate") {
  // x0 + x1 = -1 with x >= 0 has no solution.
  Vec b(1), c(2);
  b << -1.0;
  c << 1.0, 1.0;
  const auto p = hand_program({{SegKind::Nonneg, 0, 2}},
                              {{0, 0, 1.0}, {0, 1, 1.0}}, b, c);
  const Solution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::PrimalInfeasible);
  // Certificate: A'y + z = 0, z in the dual cone, b'y > 0.
  CHECK(p.b.dot(sol.y) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK((p.A.transpose() * sol.y + sol.z).lpNorm<Eigen::Infinity>() <= 1e-7);
  CHECK(cone_violation(p.segments, sol.z) <= 1e-9);
}

TEST_CASE("unbounded problem is flagged dual infeasible") {
  // min -x0 - x1  s.t.  x0 - x1 = 0, x >= 0: the ray (t, t) is feasible.
  Vec b(1), c(2);
  b << 0.0;
  c << -1.0, -1.0;
  const auto p = hand_program({{SegKind::Nonneg, 0, 2}},
                              {{0, 0, 1.0}, {0, 1, -1.0}}, b, c);
  const Solution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::DualInfeasible);
  // Certificate ray: A x = 0, x in the cone, c'x < 0.
  CHECK((p.A * sol.x).lpNorm<Eigen::Infinity>() <= 1e-7);
  CHECK(cone_violation(p.segments, sol.x) <= 1e-9);
  CHECK(p.c.dot(sol.x) < -1e-6);
}

TEST_CASE("degenerate SOC apex") {
  // min t  s.t.  t >= ||u||, u = 0. Optimum sits at the cone apex.
  Vec b(2), c(3);
  b << 0.0, 0.0;
  c << 1.0, 0.0, 0.0;
  const auto p = hand_program({{SegKind::Soc, 0, 3}},
                              {{0, 1, 1.0}, {1, 2, 1.0}}, b, c);
  const Solution sol = solve(p);
  CHECK(sol.status == SolveStatus::Optimal);
  CHECK(std::abs(sol.pobj) <= 1e-6);
}

TEST_CASE("transient scenario solves to verified KKT") {
  const ScenarioCore sc = contois_single(6, Boundary::FixedInitial);
  const ConicProgram p = build_transient(sc);
  const Solution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  const KktSummary ks = verify_kkt(p, sol);
  CAPTURE(ks.primal_eq);
  CAPTURE(ks.cone_x);
  CAPTURE(ks.cone_z);
  CAPTURE(ks.stationarity);
  CAPTURE(ks.complementarity);
  CHECK(ks.pass(1e-7));

  const TrajectoryBlocks blocks = extract_blocks(p, sol);
  REQUIRE(blocks.xi.rows() == 2);
  REQUIRE(blocks.xi.cols() == 6);
  // States stay positive and the rate is active somewhere.
  CHECK(blocks.xi.minCoeff() > 0.0);
  CHECK(blocks.T.maxCoeff() > 1e-4);
  // Minimizing S outflow drives the variable S influent to zero.
  CHECK(blocks.xi_in.row(0).maxCoeff() <= 1e-6);
}

TEST_CASE("periodic scenario solves to verified KKT") {
  const ScenarioCore sc = contois_single(5, Boundary::Periodic);
  const ConicProgram p = build_transient(sc);
  const Solution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(verify_kkt(p, sol).pass(1e-7));
}

TEST_CASE("steady-state scenario solves to verified KKT") {
  ScenarioCore sc = contois_single(1, Boundary::FixedInitial);
  sc.steady = true;
  sc.grid = {1, 1.0};
  const ConicProgram p = build_steady_state(sc);
  const Solution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(verify_kkt(p, sol).pass(1e-7));
}

TEST_CASE("solves are deterministic") {
  const ScenarioCore sc = contois_single(4, Boundary::FixedInitial);
  const ConicProgram p = build_transient(sc);
  const Solution a = solve(p);
  const Solution b = solve(p);
  REQUIRE(a.status == b.status);
  REQUIRE(a.iterations == b.iterations);
  CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.y - b.y).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.z - b.z).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(a.pobj == b.pobj);
}

TEST_CASE("equilibration off agrees with equilibration on") {
  const ScenarioCore sc = contois_single(4, Boundary::FixedInitial);
  const ConicProgram p = build_transient(sc);
  SolverSettings plain;
  plain.equilibrate = false;
  const Solution a = solve(p);
  const Solution b = solve(p, plain);
  REQUIRE(a.status == SolveStatus::Optimal);
  REQUIRE(b.status == SolveStatus::Optimal);
  CHECK(a.pobj == doctest::Approx(b.pobj).epsilon(1e-7));
  CHECK(verify_kkt(p, b).pass(1e-7));
}

TEST_CASE("presolved program expands to a verified original solution") {
  // min x0 + 2 x1 + x2  s.t.  x0 + x1 + x2 = 4, 2 x1 = 3, x >= 0
  Vec b(2), c(3);
  b << 4.0, 3.0;
  c << 1.0, 2.0, 1.0;
  const auto p = hand_program(
      {{SegKind::Nonneg, 0, 3}},
      {{0, 0, 1.0}, {0, 1, 1.0}, {0, 2, 1.0}, {1, 1, 2.0}}, b, c);
  const Presolved pre = presolve(p);
  REQUIRE_FALSE(pre.infeasible);
  REQUIRE(pre.reduced.n_vars == 2);
  const Solution red = solve(pre.reduced);
  REQUIRE(red.status == SolveStatus::Optimal);
  const Solution full = pre.expand(red, p);
  CHECK(full.pobj == doctest::Approx(red.pobj).epsilon(1e-12));
  CHECK(verify_kkt(p, full).pass(1e-7));

  const Solution direct = solve(p);
  CHECK(direct.pobj == doctest::Approx(full.pobj).epsilon(1e-7));
}

TEST_CASE("iteration cap reports MaxIterations") {
  const ScenarioCore sc = contois_single(6, Boundary::FixedInitial);
  const ConicProgram p = build_transient(sc);
  SolverSettings st;
  st.maxit = 2;
  const Solution sol = solve(p, st);
  CHECK(sol.status == SolveStatus::MaxIterations);
  CHECK(sol.iterations == 2);
  CHECK(sol.log.size() == 3);
}

TEST_CASE("iteration log tracks convergence") {
  Vec b(1), c(2);
  b << 1.0;
  c << -1.0, -2.0;
  const auto p = hand_program({{SegKind::Nonneg, 0, 2}},
                              {{0, 0, 1.0}, {0, 1, 1.0}}, b, c);
  const Solution sol = solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  REQUIRE(sol.log.size() >= 2);
  const auto& last = sol.log.back();
  const auto& first = sol.log.front();
  CHECK(last.gap < first.gap);
  CHECK(last.pres <= 1e-8);
  CHECK(last.dres <= 1e-8);
}
