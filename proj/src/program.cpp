#include "bioconic/program.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseQR>
#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

#include "json.hpp"

namespace bioconic {

// ---------------------------------------------------------------------------
// Validation

void ObjectiveSpec::validate(Index ms, Index rs, Index s) const {
  if (terms.empty()) throw ValidationError("objective: no terms");
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const auto& [w, term] = terms[t];
    const std::string where = fmt::format("objective term {}", t);
    if (!(w > 0.0)) throw ValidationError(where + ": weight must be positive");
    switch (term.family) {
      case ObjectiveFamily::SubstrateOutflow:
        if (term.eta.size() != ms)
          throw ValidationError(fmt::format("{}: eta has {} entries, expected {}", where, term.eta.size(), ms));
        if ((term.eta.array() < 0.0).any())
          throw ValidationError(where + ": eta must be nonnegative");
        break;
      case ObjectiveFamily::BiogasMax: {
        if (term.sigma.size() != rs)
          throw ValidationError(fmt::format("{}: sigma has {} entries, expected {}", where, term.sigma.size(), rs));
        if ((term.sigma.array() < 0.0).any())
          throw ValidationError(where + ": sigma must be nonnegative");
        if (term.capture_set.empty())
          throw ValidationError(where + ": capture set is empty");
        std::set<Index> seen;
        for (Index i : term.capture_set) {
          if (i < 0 || i >= s)
            throw ValidationError(fmt::format("{}: capture tank {} out of range", where, i));
          if (!seen.insert(i).second)
            throw ValidationError(fmt::format("{}: capture tank {} listed twice", where, i));
        }
        break;
      }
      case ObjectiveFamily::SetpointTracking: {
        if (term.A.rows() != ms || term.A.cols() != ms)
          throw ValidationError(fmt::format("{}: A is {}x{}, expected {}x{}", where, term.A.rows(), term.A.cols(), ms, ms));
        if (term.target.size() != ms)
          throw ValidationError(fmt::format("{}: target has {} entries, expected {}", where, term.target.size(), ms));
        const double scale = std::max(1.0, term.A.cwiseAbs().maxCoeff());
        if ((term.A - term.A.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
          throw ValidationError(where + ": A must be symmetric");
        Eigen::SelfAdjointEigenSolver<Mat> es(term.A);
        if (es.eigenvalues().minCoeff() < -1e-10 * scale)
          throw ValidationError(where + ": A must be positive semidefinite");
        break;
      }
    }
  }
}

bool ConstraintSet::influent_is_variable(Index tank, Index entry) const {
  return std::find(variable_influents.begin(), variable_influents.end(),
                   std::make_pair(tank, entry)) != variable_influents.end();
}

void ConstraintSet::validate(Index s, Index m, Index tau) const {
  auto check_pair = [&](Index tank, Index entry, const std::string& where) {
    if (tank < 0 || tank >= s)
      throw ValidationError(fmt::format("{}: tank {} out of range", where, tank));
    if (entry < 0 || entry >= m)
      throw ValidationError(fmt::format("{}: entry {} out of range", where, entry));
  };

  std::set<std::pair<Index, Index>> vars;
  for (const auto& [tank, entry] : variable_influents) {
    check_pair(tank, entry, "variable influent");
    if (!vars.insert({tank, entry}).second)
      throw ValidationError(fmt::format("variable influent ({},{}) listed twice", tank, entry));
  }

  std::set<std::pair<Index, Index>> fixed;
  for (const auto& f : fixed_influents) {
    check_pair(f.tank, f.entry, "fixed influent");
    if (vars.count({f.tank, f.entry}))
      throw ValidationError(fmt::format("influent ({},{}) is both fixed and variable", f.tank, f.entry));
    if (!fixed.insert({f.tank, f.entry}).second)
      throw ValidationError(fmt::format("fixed influent ({},{}) listed twice", f.tank, f.entry));
    if (f.values.size() != tau && f.values.size() != 1)
      throw ValidationError(fmt::format("fixed influent ({},{}): {} values, expected 1 or {}", f.tank, f.entry, f.values.size(), tau));
    if ((f.values.array() < 0.0).any())
      throw ValidationError(fmt::format("fixed influent ({},{}): negative value", f.tank, f.entry));
  }

  for (const auto& b : state_bounds) {
    check_pair(b.tank, b.entry, "state bound");
    if (!(b.upper >= 0.0))
      throw ValidationError(fmt::format("state bound ({},{}): upper {} conflicts with nonnegativity", b.tank, b.entry, b.upper));
  }
  for (const auto& b : influent_bounds) {
    check_pair(b.tank, b.entry, "influent bound");
    if (!vars.count({b.tank, b.entry}))
      throw ValidationError(fmt::format("influent bound ({},{}): entry is not a variable influent", b.tank, b.entry));
    if (!(b.upper >= 0.0))
      throw ValidationError(fmt::format("influent bound ({},{}): negative upper {}", b.tank, b.entry, b.upper));
  }

  for (std::size_t a = 0; a < allocations.size(); ++a) {
    const auto& al = allocations[a];
    const std::string where = fmt::format("allocation {}", a);
    if (al.entry < 0 || al.entry >= m)
      throw ValidationError(fmt::format("{}: entry {} out of range", where, al.entry));
    if (al.totals.size() != tau)
      throw ValidationError(fmt::format("{}: {} totals, expected {}", where, al.totals.size(), tau));
    if ((al.totals.array() < 0.0).any())
      throw ValidationError(where + ": negative total");
    std::vector<Index> tanks = al.tanks;
    if (tanks.empty())
      for (Index i = 0; i < s; ++i) tanks.push_back(i);
    std::set<Index> seen;
    for (Index i : tanks) {
      if (i < 0 || i >= s)
        throw ValidationError(fmt::format("{}: tank {} out of range", where, i));
      if (!seen.insert(i).second)
        throw ValidationError(fmt::format("{}: tank {} listed twice", where, i));
      if (!vars.count({i, al.entry}))
        throw ValidationError(fmt::format("{}: influent ({},{}) is not variable", where, i, al.entry));
    }
  }
}

void ScenarioCore::validate() const {
  const Index tau_eff = steady ? 1 : grid.tau;
  if (!steady) grid.validate();
  schedule.validate(tau_eff);
  kinetics.validate(tau_eff);
  const TankNetwork& net = schedule.at(1);
  if (kinetics.s() != net.n_tanks)
    throw ValidationError(fmt::format("scenario: kinetics has {} tanks, network has {}", kinetics.s(), net.n_tanks));
  const Index ms = kinetics.m() * kinetics.s();
  const Index rs = kinetics.r() * kinetics.s();
  if (!steady && boundary == Boundary::FixedInitial) {
    if (xi0.size() != ms)
      throw ValidationError(fmt::format("scenario: xi0 has {} entries, expected {}", xi0.size(), ms));
    if ((xi0.array() < 0.0).any())
      throw ValidationError("scenario: xi0 must be nonnegative");
  }
  objective.validate(ms, rs, kinetics.s());
  constraints.validate(kinetics.s(), kinetics.m(), tau_eff);
}

// ---------------------------------------------------------------------------
// Objective gradients

ObjectiveGradients objective_gradients(const ObjectiveSpec& spec,
                                       const NetworkSchedule& schedule,
                                       const Mat& xi, Index tau, Index rs) {
  const Index ms = xi.rows();
  ObjectiveGradients g;
  g.f_xi = Mat::Zero(ms, tau);
  g.f_phi = Mat::Zero(rs, tau);
  g.linear = true;

  const Index s = schedule.at(1).n_tanks;
  const Index m = ms / s;

  for (Index n = 1; n <= tau; ++n) {
    const TankNetwork& net = schedule.at(n);
    for (const auto& [w, term] : spec.terms) {
      switch (term.family) {
        case ObjectiveFamily::SubstrateOutflow:
          for (Index i = 0; i < s; ++i)
            g.f_xi.col(n - 1).segment(i * m, m) +=
                w * net.outflow_rates(i) * term.eta.segment(i * m, m);
          break;
        case ObjectiveFamily::BiogasMax: {
          const Index r = term.sigma.size() / s;
          for (Index i : term.capture_set)
            g.f_phi.col(n - 1).segment(i * r, r) -=
                w * net.volumes(i) * term.sigma.segment(i * r, r);
          break;
        }
        case ObjectiveFamily::SetpointTracking:
          g.f_xi.col(n - 1) += 2.0 * w * (term.A * (xi.col(n - 1) - term.target));
          g.linear = false;
          break;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Program builder

namespace {

class ProgramBuilder final : public RowEmitter {
public:
  Index n_vars = 0;
  std::vector<Segment> segments;
  std::vector<Triplet> trips;
  std::vector<double> rhs;
  std::vector<std::string> row_names;
  std::vector<ColumnInfo> columns;
  std::vector<std::pair<Index, double>> obj;
  Index ctx_step = -1;

  Index add_nonneg(const std::string& name) override {
    return new_cols(SegKind::Nonneg, 1, ColKind::ConeAux, name);
  }
  Index add_soc(Index dim, const std::string& name) override {
    return new_cols(SegKind::Soc, dim, ColKind::ConeAux, name);
  }
  Index add_rsoc(Index dim, const std::string& name) override {
    return new_cols(SegKind::Rsoc, dim, ColKind::ConeAux, name);
  }
  Index add_eq(const std::vector<std::pair<Index, double>>& terms, double rhs_value,
               const std::string& name) override {
    const Index row = static_cast<Index>(rhs.size());
    for (const auto& [col, coeff] : terms)
      if (coeff != 0.0) trips.emplace_back(static_cast<int>(row), static_cast<int>(col), coeff);
    rhs.push_back(rhs_value);
    row_names.push_back(name);
    return row;
  }

  Index new_cols(SegKind seg, Index dim, ColKind kind, const std::string& name) {
    const Index start = n_vars;
    const bool merge = (seg == SegKind::Nonneg || seg == SegKind::Free) &&
                       !segments.empty() && segments.back().kind == seg &&
                       segments.back().start + segments.back().dim == start;
    if (merge)
      segments.back().dim += dim;
    else
      segments.push_back({seg, start, dim});
    for (Index k = 0; k < dim; ++k) {
      ColumnInfo ci;
      ci.kind = kind;
      ci.step = ctx_step;
      ci.name = dim == 1 ? name : fmt::format("{}[{}]", name, k);
      columns.push_back(std::move(ci));
    }
    n_vars += dim;
    return start;
  }

  void add_obj(Index col, double coeff) {
    if (coeff != 0.0) obj.emplace_back(col, coeff);
  }

  ConicProgram finish(Bookkeeping book, double c0) {
    ConicProgram p;
    p.n_vars = n_vars;
    p.segments = std::move(segments);
    p.A.resize(static_cast<Index>(rhs.size()), n_vars);
    p.A.setFromTriplets(trips.begin(), trips.end());
    p.A.makeCompressed();
    p.b = Eigen::Map<const Vec>(rhs.data(), static_cast<Index>(rhs.size()));
    p.c = Vec::Zero(n_vars);
    for (const auto& [col, coeff] : obj) p.c(col) += coeff;
    p.c0 = c0;
    p.columns = std::move(columns);
    p.row_names = std::move(row_names);
    p.book = std::move(book);
    p.check_shape();
    return p;
  }
};

// Square-root factor of a PSD matrix: R with A = R'R, rank rows.
Mat psd_factor(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  const Vec& ev = es.eigenvalues();
  const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  Index rank = 0;
  for (Index k = 0; k < ev.size(); ++k)
    if (ev(k) > tol) ++rank;
  Mat R(rank, A.rows());
  Index out = 0;
  for (Index k = 0; k < ev.size(); ++k)
    if (ev(k) > tol) R.row(out++) = std::sqrt(ev(k)) * es.eigenvectors().col(k).transpose();
  return R;
}

ConicProgram build_core(const ScenarioCore& sc, bool steady) {
  sc.validate();
  const Index tau = steady ? 1 : sc.grid.tau;
  const Index s = sc.kinetics.s();
  const Index m = sc.kinetics.m();
  const Index r = sc.kinetics.r();
  const Index ms = m * s;
  const Index rs = r * s;
  const Mat K = Mat(sc.kinetics.assemble_K());

  ProgramBuilder bld;
  Bookkeeping book;
  book.tau = tau;
  book.s = s;
  book.m = m;
  book.r = r;
  book.steady = steady;
  book.state_cols.resize(static_cast<std::size_t>(tau * ms));
  book.rate_cols.resize(static_cast<std::size_t>(tau * rs));
  book.infl_cols.assign(static_cast<std::size_t>(tau * ms), -1);
  book.infl_fixed = Vec::Zero(tau * ms);
  book.dyn_rows.resize(static_cast<std::size_t>(tau * ms));

  // Fixed influent values per step.
  for (const auto& f : sc.constraints.fixed_influents)
    for (Index n = 1; n <= tau; ++n)
      book.infl_fixed((n - 1) * ms + f.tank * m + f.entry) =
          f.values.size() == 1 ? f.values(0) : f.values(n - 1);

  // Core columns, step-major.
  for (Index n = 1; n <= tau; ++n) {
    bld.ctx_step = n;
    for (Index i = 0; i < s; ++i)
      for (Index e = 0; e < m; ++e) {
        const Index col = bld.add_nonneg(fmt::format("xi[{}]:{}:{}", n, i, e));
        bld.columns.back().kind = ColKind::State;
        bld.columns.back().tank = i;
        bld.columns.back().entry = e;
        book.state_cols[static_cast<std::size_t>((n - 1) * ms + i * m + e)] = col;
      }
    for (Index i = 0; i < s; ++i)
      for (Index q = 0; q < r; ++q) {
        const Index col = bld.add_nonneg(fmt::format("T[{}]:{}:{}", n, i, q));
        bld.columns.back().kind = ColKind::Rate;
        bld.columns.back().tank = i;
        bld.columns.back().entry = q;
        book.rate_cols[static_cast<std::size_t>((n - 1) * rs + i * r + q)] = col;
      }
    for (const auto& [i, e] : sc.constraints.variable_influents) {
      const Index col = bld.add_nonneg(fmt::format("in[{}]:{}:{}", n, i, e));
      bld.columns.back().kind = ColKind::Influent;
      bld.columns.back().tank = i;
      bld.columns.back().entry = e;
      book.infl_cols[static_cast<std::size_t>((n - 1) * ms + i * m + e)] = col;
    }
  }

  const NetworkMatrices mats0 = build_matrices(sc.schedule.at(1));
  const ImplicitEuler euler;

  double c0 = 0.0;
  for (Index n = 1; n <= tau; ++n) {
    bld.ctx_step = n;
    const TankNetwork& net = sc.schedule.at(n);
    const NetworkMatrices mats = sc.schedule.constant() ? mats0 : build_matrices(net);

    // Mass balance.
    DynamicsHandles dh;
    dh.state_now.assign(book.state_cols.begin() + (n - 1) * ms,
                        book.state_cols.begin() + n * ms);
    dh.rate.assign(book.rate_cols.begin() + (n - 1) * rs,
                   book.rate_cols.begin() + n * rs);
    dh.influent.assign(book.infl_cols.begin() + (n - 1) * ms,
                       book.infl_cols.begin() + n * ms);
    const Vec infl_fixed_n = book.infl_fixed.segment((n - 1) * ms, ms);
    dh.influent_fixed = &infl_fixed_n;
    Vec xi_prev;
    if (!steady) {
      if (n > 1) {
        dh.state_prev.assign(book.state_cols.begin() + (n - 2) * ms,
                             book.state_cols.begin() + (n - 1) * ms);
      } else if (sc.boundary == Boundary::Periodic) {
        dh.state_prev.assign(book.state_cols.begin() + (tau - 1) * ms,
                             book.state_cols.begin() + tau * ms);
      } else {
        xi_prev = sc.xi0;
        dh.xi_prev_fixed = &xi_prev;
      }
    }
    std::vector<Index> rows =
        steady ? emit_steady_rows(net, mats, K, dh, bld, "stead")
               : emit_dynamics_rows(net, mats, K, euler, sc.grid.delta, dh, bld,
                                    fmt::format("dyn[{}]", n));
    std::copy(rows.begin(), rows.end(), book.dyn_rows.begin() + (n - 1) * ms);

    // Upper bounds via slacks.
    for (const auto& bnd : sc.constraints.state_bounds) {
      const Index w = bld.add_nonneg(fmt::format("slk_xi[{}]:{}:{}", n, bnd.tank, bnd.entry));
      bld.columns.back().kind = ColKind::Slack;
      bld.columns.back().tank = bnd.tank;
      bld.columns.back().entry = bnd.entry;
      bld.add_eq({{dh.state_now[static_cast<std::size_t>(bnd.tank * m + bnd.entry)], 1.0}, {w, 1.0}},
                 bnd.upper, fmt::format("ub_xi[{}]:{}:{}", n, bnd.tank, bnd.entry));
    }
    for (const auto& bnd : sc.constraints.influent_bounds) {
      const Index col = dh.influent[static_cast<std::size_t>(bnd.tank * m + bnd.entry)];
      const Index w = bld.add_nonneg(fmt::format("slk_in[{}]:{}:{}", n, bnd.tank, bnd.entry));
      bld.columns.back().kind = ColKind::Slack;
      bld.columns.back().tank = bnd.tank;
      bld.columns.back().entry = bnd.entry;
      bld.add_eq({{col, 1.0}, {w, 1.0}}, bnd.upper,
                 fmt::format("ub_in[{}]:{}:{}", n, bnd.tank, bnd.entry));
    }

    // Influent allocations.
    for (std::size_t a = 0; a < sc.constraints.allocations.size(); ++a) {
      const auto& al = sc.constraints.allocations[a];
      std::vector<Index> tanks = al.tanks;
      if (tanks.empty())
        for (Index i = 0; i < s; ++i) tanks.push_back(i);
      std::vector<std::pair<Index, double>> terms;
      for (Index i : tanks)
        terms.emplace_back(dh.influent[static_cast<std::size_t>(i * m + al.entry)],
                           net.inflow_rates(i));
      bld.add_eq(terms, al.totals(n - 1), fmt::format("alloc[{}]:{}", n, a));
    }

    // Kinetics cones.
    for (Index i = 0; i < s; ++i) {
      KineticsHandles kh;
      kh.state_cols.assign(dh.state_now.begin() + i * m, dh.state_now.begin() + (i + 1) * m);
      for (Index q = 0; q < r; ++q) {
        kh.T = dh.rate[static_cast<std::size_t>(i * r + q)];
        emit_soc_rows(sc.kinetics.tanks[static_cast<std::size_t>(i)].reactions[static_cast<std::size_t>(q)],
                      sc.kinetics, n, kh, bld, fmt::format("kin[{}]:{}:{}", n, i, q));
      }
    }

    // Tracking epigraphs.
    for (std::size_t t = 0; t < sc.objective.terms.size(); ++t) {
      const auto& [w, term] = sc.objective.terms[t];
      if (term.family != ObjectiveFamily::SetpointTracking) continue;
      const Mat R = psd_factor(term.A);
      if (R.rows() == 0) continue;
      const Index p = bld.add_rsoc(2 + R.rows(), fmt::format("trk[{}]:{}", n, t));
      bld.columns[static_cast<std::size_t>(p)].kind = ColKind::Epigraph;
      bld.add_obj(p, w);
      bld.add_eq({{p + 1, 1.0}}, 1.0, fmt::format("trk[{}]:{}:one", n, t));
      const double sq2 = std::sqrt(2.0);
      const Vec shift = R * term.target;
      for (Index k = 0; k < R.rows(); ++k) {
        std::vector<std::pair<Index, double>> terms{{p + 2 + k, 1.0}};
        for (Index e = 0; e < ms; ++e)
          if (R(k, e) != 0.0)
            terms.emplace_back(dh.state_now[static_cast<std::size_t>(e)], -sq2 * R(k, e));
        bld.add_eq(terms, -sq2 * shift(k), fmt::format("trk[{}]:{}:r{}", n, t, k));
      }
    }

    // Linear objective coefficients.
    for (const auto& [w, term] : sc.objective.terms) {
      switch (term.family) {
        case ObjectiveFamily::SubstrateOutflow:
          for (Index i = 0; i < s; ++i)
            for (Index e = 0; e < m; ++e)
              bld.add_obj(dh.state_now[static_cast<std::size_t>(i * m + e)],
                          w * net.outflow_rates(i) * term.eta(i * m + e));
          break;
        case ObjectiveFamily::BiogasMax:
          for (Index i : term.capture_set)
            for (Index q = 0; q < r; ++q)
              bld.add_obj(dh.rate[static_cast<std::size_t>(i * r + q)],
                          -w * net.volumes(i) * term.sigma(i * r + q));
          break;
        case ObjectiveFamily::SetpointTracking:
          break;
      }
    }
  }

  return bld.finish(std::move(book), c0);
}

} // namespace

ConicProgram build_transient(const ScenarioCore& sc) {
  if (sc.steady)
    throw ValidationError("build_transient: scenario is marked steady-state");
  return build_core(sc, false);
}

ConicProgram build_steady_state(const ScenarioCore& sc) {
  if (!sc.steady)
    throw ValidationError("build_steady_state: scenario is not marked steady-state");
  return build_core(sc, true);
}

// ---------------------------------------------------------------------------
// Shape and rank checks

void ConicProgram::check_shape() const {
  Index cursor = 0;
  for (const auto& seg : segments) {
    if (seg.start != cursor || seg.dim < 1)
      throw ValidationError(fmt::format("program: segment at {} (dim {}) breaks the partition at {}", seg.start, seg.dim, cursor));
    if (seg.kind == SegKind::Soc && seg.dim < 2)
      throw ValidationError(fmt::format("program: SOC segment at {} has dim {}", seg.start, seg.dim));
    if (seg.kind == SegKind::Rsoc && seg.dim < 2)
      throw ValidationError(fmt::format("program: rotated segment at {} has dim {}", seg.start, seg.dim));
    cursor += seg.dim;
  }
  if (cursor != n_vars)
    throw ValidationError(fmt::format("program: segments cover {} of {} columns", cursor, n_vars));
  if (A.cols() != n_vars)
    throw ValidationError(fmt::format("program: A has {} columns, expected {}", A.cols(), n_vars));
  if (b.size() != A.rows())
    throw ValidationError(fmt::format("program: b has {} entries, A has {} rows", b.size(), A.rows()));
  if (c.size() != n_vars)
    throw ValidationError(fmt::format("program: c has {} entries, expected {}", c.size(), n_vars));
  if (static_cast<Index>(columns.size()) != n_vars)
    throw ValidationError(fmt::format("program: {} column records, expected {}", columns.size(), n_vars));
  if (static_cast<Index>(row_names.size()) != A.rows())
    throw ValidationError(fmt::format("program: {} row names, expected {}", row_names.size(), A.rows()));
}

std::vector<Index> ConicProgram::dependent_rows() const {
  SpMat At = A.transpose();
  At.makeCompressed();
  Eigen::SparseQR<SpMat, Eigen::COLAMDOrdering<int>> qr;
  qr.compute(At);
  if (qr.info() != Eigen::Success)
    throw NumericalError("dependent_rows: sparse QR failed");
  const Index rank = qr.rank();
  const auto& perm = qr.colsPermutation().indices();
  std::vector<Index> dep;
  for (Index k = rank; k < perm.size(); ++k) dep.push_back(perm(k));
  std::sort(dep.begin(), dep.end());
  return dep;
}

// ---------------------------------------------------------------------------
// Presolve

Presolved presolve(const ConicProgram& p) {
  const Index n_rows = p.n_rows();
  const Index n_cols = p.n_vars;

  std::vector<int> row_nnz(static_cast<std::size_t>(n_rows), 0);
  std::vector<Index> row_col(static_cast<std::size_t>(n_rows), -1);
  std::vector<double> row_val(static_cast<std::size_t>(n_rows), 0.0);
  for (Index j = 0; j < n_cols; ++j)
    for (SpMat::InnerIterator it(p.A, j); it; ++it)
      if (it.value() != 0.0) {
        ++row_nnz[static_cast<std::size_t>(it.row())];
        row_col[static_cast<std::size_t>(it.row())] = j;
        row_val[static_cast<std::size_t>(it.row())] = it.value();
      }

  std::vector<SegKind> col_kind(static_cast<std::size_t>(n_cols));
  for (const auto& seg : p.segments)
    for (Index k = 0; k < seg.dim; ++k)
      col_kind[static_cast<std::size_t>(seg.start + k)] = seg.kind;

  Presolved ps;
  std::vector<char> col_pinned(static_cast<std::size_t>(n_cols), 0);
  std::vector<char> row_drop(static_cast<std::size_t>(n_rows), 0);
  std::vector<double> pin_value(static_cast<std::size_t>(n_cols), 0.0);
  std::vector<Index> pin_row_of(static_cast<std::size_t>(n_cols), -1);

  for (Index rrow = 0; rrow < n_rows; ++rrow) {
    if (row_nnz[static_cast<std::size_t>(rrow)] != 1) continue;
    const Index j = row_col[static_cast<std::size_t>(rrow)];
    const SegKind kind = col_kind[static_cast<std::size_t>(j)];
    if (kind != SegKind::Free && kind != SegKind::Nonneg) continue;
    const double v = p.b(rrow) / row_val[static_cast<std::size_t>(rrow)];
    if (col_pinned[static_cast<std::size_t>(j)]) {
      if (std::abs(v - pin_value[static_cast<std::size_t>(j)]) > 1e-9 * (1.0 + std::abs(v))) {
        ps.infeasible = true;
        ps.message = fmt::format("presolve: rows {} and {} pin column {} to different values",
                                 pin_row_of[static_cast<std::size_t>(j)], rrow, j);
      }
      row_drop[static_cast<std::size_t>(rrow)] = 1;
      continue;
    }
    if (kind == SegKind::Nonneg && v < -1e-9) {
      ps.infeasible = true;
      ps.message = fmt::format("presolve: row {} pins nonnegative column {} to {}", rrow, j, v);
    }
    col_pinned[static_cast<std::size_t>(j)] = 1;
    pin_value[static_cast<std::size_t>(j)] = v;
    pin_row_of[static_cast<std::size_t>(j)] = rrow;
    row_drop[static_cast<std::size_t>(rrow)] = 1;
    ps.pinned_cols.push_back(j);
    ps.pin_rows.push_back(rrow);
  }
  ps.pinned_values = Vec::Zero(static_cast<Index>(ps.pinned_cols.size()));
  for (std::size_t k = 0; k < ps.pinned_cols.size(); ++k)
    ps.pinned_values(static_cast<Index>(k)) = pin_value[static_cast<std::size_t>(ps.pinned_cols[k])];

  ps.col_map.assign(static_cast<std::size_t>(n_cols), -1);
  ps.row_map.assign(static_cast<std::size_t>(n_rows), -1);
  Index nc = 0;
  for (Index j = 0; j < n_cols; ++j)
    if (!col_pinned[static_cast<std::size_t>(j)]) ps.col_map[static_cast<std::size_t>(j)] = nc++;
  Index nr = 0;
  for (Index rrow = 0; rrow < n_rows; ++rrow)
    if (!row_drop[static_cast<std::size_t>(rrow)]) ps.row_map[static_cast<std::size_t>(rrow)] = nr++;

  ConicProgram& q = ps.reduced;
  q.n_vars = nc;
  q.c = Vec::Zero(nc);
  q.c0 = p.c0;
  Vec b_red = Vec::Zero(nr);
  for (Index rrow = 0; rrow < n_rows; ++rrow)
    if (ps.row_map[static_cast<std::size_t>(rrow)] >= 0)
      b_red(ps.row_map[static_cast<std::size_t>(rrow)]) = p.b(rrow);

  std::vector<Triplet> trips;
  for (Index j = 0; j < n_cols; ++j) {
    if (col_pinned[static_cast<std::size_t>(j)]) {
      const double v = pin_value[static_cast<std::size_t>(j)];
      q.c0 += p.c(j) * v;
      for (SpMat::InnerIterator it(p.A, j); it; ++it) {
        const Index rr = ps.row_map[static_cast<std::size_t>(it.row())];
        if (rr >= 0) b_red(rr) -= it.value() * v;
      }
      continue;
    }
    const Index jj = ps.col_map[static_cast<std::size_t>(j)];
    q.c(jj) = p.c(j);
    for (SpMat::InnerIterator it(p.A, j); it; ++it) {
      const Index rr = ps.row_map[static_cast<std::size_t>(it.row())];
      if (rr >= 0) trips.emplace_back(static_cast<int>(rr), static_cast<int>(jj), it.value());
    }
  }
  q.A.resize(nr, nc);
  q.A.setFromTriplets(trips.begin(), trips.end());
  q.A.makeCompressed();
  q.b = b_red;

  // Segments over surviving columns; cone segments are never broken because
  // their members are not pinnable.
  for (const auto& seg : p.segments) {
    if (seg.kind == SegKind::Soc || seg.kind == SegKind::Rsoc) {
      q.segments.push_back({seg.kind, ps.col_map[static_cast<std::size_t>(seg.start)], seg.dim});
      continue;
    }
    Index run_start = -1, run_len = 0;
    for (Index k = 0; k < seg.dim; ++k) {
      const Index jj = ps.col_map[static_cast<std::size_t>(seg.start + k)];
      if (jj < 0) continue;
      if (run_len == 0) run_start = jj;
      ++run_len;
    }
    if (run_len > 0) {
      if (!q.segments.empty() && q.segments.back().kind == seg.kind &&
          q.segments.back().start + q.segments.back().dim == run_start)
        q.segments.back().dim += run_len;
      else
        q.segments.push_back({seg.kind, run_start, run_len});
    }
  }

  q.columns.resize(static_cast<std::size_t>(nc));
  for (Index j = 0; j < n_cols; ++j)
    if (ps.col_map[static_cast<std::size_t>(j)] >= 0)
      q.columns[static_cast<std::size_t>(ps.col_map[static_cast<std::size_t>(j)])] =
          p.columns[static_cast<std::size_t>(j)];
  q.row_names.resize(static_cast<std::size_t>(nr));
  for (Index rrow = 0; rrow < n_rows; ++rrow)
    if (ps.row_map[static_cast<std::size_t>(rrow)] >= 0)
      q.row_names[static_cast<std::size_t>(ps.row_map[static_cast<std::size_t>(rrow)])] =
          p.row_names[static_cast<std::size_t>(rrow)];

  q.book = p.book;
  auto remap_col = [&](Index& col) {
    if (col >= 0) col = ps.col_map[static_cast<std::size_t>(col)];
  };
  for (auto& col : q.book.state_cols) remap_col(col);
  for (auto& col : q.book.rate_cols) remap_col(col);
  for (auto& col : q.book.infl_cols) remap_col(col);
  for (auto& rrow : q.book.dyn_rows)
    if (rrow >= 0) rrow = ps.row_map[static_cast<std::size_t>(rrow)];

  q.check_shape();
  if (ps.message.empty())
    ps.message = fmt::format("presolve: pinned {} columns, dropped {} rows",
                             ps.pinned_cols.size(), n_rows - nr);
  return ps;
}

Solution Presolved::expand(const Solution& sol, const ConicProgram& original) const {
  Solution out;
  out.status = sol.status;
  out.pobj = sol.pobj;
  out.dobj = sol.dobj;
  out.gap = sol.gap;
  out.relgap = sol.relgap;
  out.pres = sol.pres;
  out.dres = sol.dres;
  out.iterations = sol.iterations;
  out.log = sol.log;
  out.message = sol.message;

  const Index n_cols = original.n_vars;
  const Index n_rows = original.n_rows();
  out.x = Vec::Zero(n_cols);
  out.z = Vec::Zero(n_cols);
  out.y = Vec::Zero(n_rows);

  for (Index j = 0; j < n_cols; ++j) {
    const Index jj = col_map[static_cast<std::size_t>(j)];
    if (jj >= 0) {
      out.x(j) = sol.x(jj);
      out.z(j) = sol.z(jj);
    }
  }
  for (std::size_t k = 0; k < pinned_cols.size(); ++k)
    out.x(pinned_cols[k]) = pinned_values(static_cast<Index>(k));
  for (Index rrow = 0; rrow < n_rows; ++rrow) {
    const Index rr = row_map[static_cast<std::size_t>(rrow)];
    if (rr >= 0) out.y(rrow) = sol.y(rr);
  }

  // Pinned-column stationarity c_j - A_j'y - z_j = 0 with z_j = 0 determines
  // the pin row's dual; duplicate pin rows keep zero.
  for (std::size_t k = 0; k < pinned_cols.size(); ++k) {
    const Index j = pinned_cols[k];
    const Index pr = pin_rows[k];
    double acc = original.c(j);
    double pin_coeff = 0.0;
    for (SpMat::InnerIterator it(original.A, j); it; ++it) {
      if (it.row() == pr)
        pin_coeff = it.value();
      else
        acc -= it.value() * out.y(it.row());
    }
    out.y(pr) = acc / pin_coeff;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Block extraction

TrajectoryBlocks extract_blocks(const ConicProgram& p, const Solution& sol) {
  const Bookkeeping& bk = p.book;
  const Index tau = bk.tau;
  const Index ms = bk.ms();
  const Index rs = bk.rs();
  TrajectoryBlocks tb;
  tb.xi.resize(ms, tau);
  tb.T.resize(rs, tau);
  tb.xi_in.resize(ms, tau);
  tb.lambda.resize(ms, tau);
  tb.z_T.resize(rs, tau);
  for (Index n = 0; n < tau; ++n) {
    for (Index k = 0; k < ms; ++k) {
      tb.xi(k, n) = sol.x(bk.state_cols[static_cast<std::size_t>(n * ms + k)]);
      const Index icol = bk.infl_cols[static_cast<std::size_t>(n * ms + k)];
      tb.xi_in(k, n) = icol >= 0 ? sol.x(icol) : bk.infl_fixed(n * ms + k);
      tb.lambda(k, n) = sol.y(bk.dyn_rows[static_cast<std::size_t>(n * ms + k)]);
    }
    for (Index q = 0; q < rs; ++q) {
      const Index col = bk.rate_cols[static_cast<std::size_t>(n * rs + q)];
      tb.T(q, n) = sol.x(col);
      tb.z_T(q, n) = sol.z(col);
    }
  }
  return tb;
}

// ---------------------------------------------------------------------------
// Interchange

namespace {

const char* seg_kind_name(SegKind k) {
  switch (k) {
    case SegKind::Free: return "free";
    case SegKind::Nonneg: return "nonneg";
    case SegKind::Soc: return "soc";
    case SegKind::Rsoc: return "rsoc";
  }
  return "?";
}

SegKind seg_kind_parse(const std::string& s) {
  if (s == "free") return SegKind::Free;
  if (s == "nonneg") return SegKind::Nonneg;
  if (s == "soc") return SegKind::Soc;
  if (s == "rsoc") return SegKind::Rsoc;
  throw ValidationError(fmt::format("program file: unknown segment kind '{}'", s));
}

const char* col_kind_name(ColKind k) {
  switch (k) {
    case ColKind::State: return "state";
    case ColKind::Rate: return "rate";
    case ColKind::Influent: return "influent";
    case ColKind::ConeAux: return "cone_aux";
    case ColKind::Slack: return "slack";
    case ColKind::Epigraph: return "epigraph";
  }
  return "?";
}

ColKind col_kind_parse(const std::string& s) {
  if (s == "state") return ColKind::State;
  if (s == "rate") return ColKind::Rate;
  if (s == "influent") return ColKind::Influent;
  if (s == "cone_aux") return ColKind::ConeAux;
  if (s == "slack") return ColKind::Slack;
  if (s == "epigraph") return ColKind::Epigraph;
  throw ValidationError(fmt::format("program file: unknown column kind '{}'", s));
}

std::vector<double> to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vec from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
}

} // namespace

void write_program(const ConicProgram& p, std::ostream& os) {
  nlohmann::json j;
  j["format"] = "bioconic-program-v1";
  j["n_vars"] = p.n_vars;
  j["n_rows"] = p.n_rows();
  for (const auto& seg : p.segments)
    j["segments"].push_back({{"kind", seg_kind_name(seg.kind)}, {"start", seg.start}, {"dim", seg.dim}});
  j["c0"] = p.c0;
  j["c"] = to_std(p.c);
  j["b"] = to_std(p.b);
  std::vector<Index> rows, cols;
  std::vector<double> vals;
  for (Index col = 0; col < p.A.outerSize(); ++col)
    for (SpMat::InnerIterator it(p.A, col); it; ++it) {
      rows.push_back(it.row());
      cols.push_back(col);
      vals.push_back(it.value());
    }
  j["A"] = {{"rows", rows}, {"cols", cols}, {"vals", vals}};
  for (const auto& ci : p.columns)
    j["columns"].push_back({{"kind", col_kind_name(ci.kind)},
                            {"step", ci.step},
                            {"tank", ci.tank},
                            {"entry", ci.entry},
                            {"name", ci.name}});
  j["row_names"] = p.row_names;
  j["book"] = {{"tau", p.book.tau},       {"s", p.book.s},
               {"m", p.book.m},           {"r", p.book.r},
               {"steady", p.book.steady}, {"state_cols", p.book.state_cols},
               {"rate_cols", p.book.rate_cols}, {"infl_cols", p.book.infl_cols},
               {"infl_fixed", to_std(p.book.infl_fixed)}, {"dyn_rows", p.book.dyn_rows}};
  os << j.dump(1, '\t') << '\n';
}

ConicProgram read_program(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("program file: {}", e.what()));
  }
  if (j.value("format", "") != std::string("bioconic-program-v1"))
    throw ValidationError("program file: missing or unknown format tag");

  ConicProgram p;
  try {
    p.n_vars = j.at("n_vars").get<Index>();
    const Index n_rows = j.at("n_rows").get<Index>();
    for (const auto& js : j.at("segments"))
      p.segments.push_back({seg_kind_parse(js.at("kind").get<std::string>()),
                            js.at("start").get<Index>(), js.at("dim").get<Index>()});
    p.c0 = j.at("c0").get<double>();
    p.c = from_std(j.at("c").get<std::vector<double>>());
    p.b = from_std(j.at("b").get<std::vector<double>>());
    const auto rows = j.at("A").at("rows").get<std::vector<Index>>();
    const auto cols = j.at("A").at("cols").get<std::vector<Index>>();
    const auto vals = j.at("A").at("vals").get<std::vector<double>>();
    if (rows.size() != cols.size() || rows.size() != vals.size())
      throw ValidationError("program file: A triplet arrays disagree in length");
    std::vector<Triplet> trips;
    trips.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k)
      trips.emplace_back(static_cast<int>(rows[k]), static_cast<int>(cols[k]), vals[k]);
    p.A.resize(n_rows, p.n_vars);
    p.A.setFromTriplets(trips.begin(), trips.end());
    p.A.makeCompressed();
    if (j.contains("columns")) {
      for (const auto& jc : j.at("columns")) {
        ColumnInfo ci;
        ci.kind = col_kind_parse(jc.at("kind").get<std::string>());
        ci.step = jc.at("step").get<Index>();
        ci.tank = jc.at("tank").get<Index>();
        ci.entry = jc.at("entry").get<Index>();
        ci.name = jc.at("name").get<std::string>();
        p.columns.push_back(std::move(ci));
      }
    } else {
      p.columns.resize(static_cast<std::size_t>(p.n_vars));
    }
    if (j.contains("row_names"))
      p.row_names = j.at("row_names").get<std::vector<std::string>>();
    else
      p.row_names.resize(static_cast<std::size_t>(n_rows));
    if (j.contains("book")) {
      const auto& jb = j.at("book");
      p.book.tau = jb.at("tau").get<Index>();
      p.book.s = jb.at("s").get<Index>();
      p.book.m = jb.at("m").get<Index>();
      p.book.r = jb.at("r").get<Index>();
      p.book.steady = jb.at("steady").get<bool>();
      p.book.state_cols = jb.at("state_cols").get<std::vector<Index>>();
      p.book.rate_cols = jb.at("rate_cols").get<std::vector<Index>>();
      p.book.infl_cols = jb.at("infl_cols").get<std::vector<Index>>();
      p.book.infl_fixed = from_std(jb.at("infl_fixed").get<std::vector<double>>());
      p.book.dyn_rows = jb.at("dyn_rows").get<std::vector<Index>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("program file: {}", e.what()));
  }
  p.check_shape();
  return p;
}

} // namespace bioconic
