#pragma once

#include "bioconic/discretize.hpp"
#include "bioconic/kinetics.hpp"
#include "bioconic/network.hpp"
#include "bioconic/types.hpp"

#include <iosfwd>
#include <optional>

namespace bioconic {

// ---------------------------------------------------------------------------
// Objective

enum class ObjectiveFamily { SubstrateOutflow, BiogasMax, SetpointTracking };

struct ObjectiveTerm {
  ObjectiveFamily family = ObjectiveFamily::SubstrateOutflow;
  Vec eta;    // ms, SubstrateOutflow: per-tank weights over state entries
  Vec sigma;  // rs, BiogasMax: per-tank weights over reactions
  std::vector<Index> capture_set; // BiogasMax: tanks in M
  Mat A;      // ms x ms PSD, SetpointTracking
  Vec target; // ms, SetpointTracking
};

struct ObjectiveSpec {
  std::vector<std::pair<double, ObjectiveTerm>> terms; // weight > 0
  void validate(Index ms, Index rs, Index s) const;
};

// Exact per-step objective gradients (f_xi(n), f_phi(n)) at the given states.
// xi is ms x tau. Constant for linear families.
struct ObjectiveGradients {
  Mat f_xi;  // ms x tau
  Mat f_phi; // rs x tau
  bool linear = true;
};
ObjectiveGradients objective_gradients(const ObjectiveSpec& spec,
                                       const NetworkSchedule& schedule,
                                       const Mat& xi, Index tau, Index rs);

// ---------------------------------------------------------------------------
// Constraint set (the paper's Omega polytope)

struct ConstraintSet {
  struct Bound {
    Index tank = -1;
    Index entry = -1;
    double upper = 0.0;
  };
  // xi(tank,entry,n) <= upper for all n
  std::vector<Bound> state_bounds;
  // xi_in(tank,entry,n) <= upper for all n (entry must be variable influent)
  std::vector<Bound> influent_bounds;

  // sum_i Q_i^in(n) * xi_in(i,entry,n) = totals(n-1), over the listed tanks
  struct Allocation {
    Index entry = -1;
    std::vector<Index> tanks; // empty = all tanks
    Vec totals;               // length tau
  };
  std::vector<Allocation> allocations;

  // Influent entries that are decision variables; all others are fixed.
  std::vector<std::pair<Index, Index>> variable_influents; // (tank, entry)

  // Values for fixed influent entries; length tau or 1. Unlisted fixed
  // entries are zero.
  struct FixedInfluent {
    Index tank = -1;
    Index entry = -1;
    Vec values;
  };
  std::vector<FixedInfluent> fixed_influents;

  void validate(Index s, Index m, Index tau) const;
  bool influent_is_variable(Index tank, Index entry) const;
};

// ---------------------------------------------------------------------------
// Conic program, variables-in-cones form:
//   min c'x + c0  s.t.  A x = b,  x in K
// where K is the product of the segments below (free, nonnegative orthant,
// second-order cones ||x_1..|| <= x_0, rotated cones 2 x_0 x_1 >= ||x_2..||^2).

enum class SegKind { Free, Nonneg, Soc, Rsoc };

struct Segment {
  SegKind kind = SegKind::Free;
  Index start = 0;
  Index dim = 0;
};

// What a program column means, for bookkeeping and CSV naming.
enum class ColKind { State, Rate, Influent, ConeAux, Slack, Epigraph };

struct ColumnInfo {
  ColKind kind = ColKind::ConeAux;
  Index step = -1;
  Index tank = -1;
  Index entry = -1; // state entry or reaction index
  std::string name;
};

struct Bookkeeping {
  Index tau = 0, s = 0, m = 0, r = 0;
  bool steady = false;
  Index ms() const { return m * s; }
  Index rs() const { return r * s; }
  // Column of xi(step,tank,entry): state_cols[(step-1)*ms + tank*m + entry]
  std::vector<Index> state_cols;
  // Column of T(step,tank,reaction)
  std::vector<Index> rate_cols;
  // Column of xi_in(step,tank,entry); -1 if the entry is fixed
  std::vector<Index> infl_cols;
  // Value of fixed influent entries (0 where variable)
  Vec infl_fixed;
  // Row indices of the dynamics (or steady-balance) rows, per step, ms each
  std::vector<Index> dyn_rows;
};

struct ConicProgram {
  Index n_vars = 0;
  std::vector<Segment> segments;
  SpMat A;
  Vec b;
  Vec c;
  double c0 = 0.0;
  std::vector<ColumnInfo> columns;
  std::vector<std::string> row_names;
  Bookkeeping book;

  Index n_rows() const { return A.rows(); }
  // Throws ValidationError if segments do not partition [0, n_vars) or
  // dimensions disagree.
  void check_shape() const;
  // Rank check via sparse QR; returns indices of dependent rows (empty when
  // full row rank). Intended for validation at desk scale.
  std::vector<Index> dependent_rows() const;
};

// ---------------------------------------------------------------------------
// Scenario core: everything build_transient needs. The cli module wraps this
// with parsing, presets and units.

struct ScenarioCore {
  NetworkSchedule schedule;
  KineticsSpec kinetics;
  TimeGrid grid;
  Boundary boundary = Boundary::FixedInitial;
  Vec xi0; // ms, fixed-initial boundary
  ObjectiveSpec objective;
  ConstraintSet constraints;
  bool steady = false;

  void validate() const;
};

ConicProgram build_transient(const ScenarioCore& sc);
ConicProgram build_steady_state(const ScenarioCore& sc);

// ---------------------------------------------------------------------------
// Solution containers (filled by the solver module)

enum class SolveStatus {
  Optimal,
  PrimalInfeasible,
  DualInfeasible,
  MaxIterations,
  NumericalFailure
};

struct IterRecord {
  int iter = 0;
  double pcost = 0, dcost = 0, gap = 0, pres = 0, dres = 0;
  double step = 0, sigma = 0;
  double tau = 0, kappa = 0;
};

struct Solution {
  SolveStatus status = SolveStatus::NumericalFailure;
  Vec x; // primal, per program column
  Vec y; // equality duals: c - A'y = z in K*
  Vec z; // cone duals, per program column
  double pobj = 0, dobj = 0, gap = 0;
  std::optional<double> relgap;
  double pres = 0, dres = 0;
  int iterations = 0;
  std::vector<IterRecord> log;
  std::string message;
};

// ---------------------------------------------------------------------------
// Presolve: pins variables fixed by singleton rows (fixed influents), removes
// them, and reconstructs the removed duals on expansion.

struct Presolved {
  ConicProgram reduced;
  std::vector<Index> col_map; // original col -> reduced col, -1 if removed
  std::vector<Index> row_map; // original row -> reduced row, -1 if removed
  std::vector<Index> pinned_cols;
  std::vector<Index> pin_rows;  // the singleton row that pinned each col
  Vec pinned_values;
  bool infeasible = false; // a pin violated its cone
  std::string message;

  // Expand a solution of `reduced` to the original program, reconstructing
  // pinned-row duals from stationarity of the pinned columns.
  Solution expand(const Solution& sol, const ConicProgram& original) const;
};

Presolved presolve(const ConicProgram& p);

// ---------------------------------------------------------------------------
// Trajectory blocks pulled out of a solution via bookkeeping.

struct TrajectoryBlocks {
  Mat xi;     // ms x tau
  Mat T;      // rs x tau
  Mat xi_in;  // ms x tau, fixed entries filled with their values
  Mat lambda; // ms x tau, dynamics-row duals
  Mat z_T;    // rs x tau, orthant duals on the T columns
};
TrajectoryBlocks extract_blocks(const ConicProgram& p, const Solution& sol);

// ---------------------------------------------------------------------------
// Interchange format: documented JSON listing of the program (segments,
// triplets, objective, names). Readable by the standalone solver harness.

void write_program(const ConicProgram& p, std::ostream& os);
ConicProgram read_program(std::istream& is);

} // namespace bioconic
