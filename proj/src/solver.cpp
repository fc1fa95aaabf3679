#include "bioconic/solver.hpp"

#include <fmt/format.h>

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>

#include "bioconic/kernels.hpp"

namespace bioconic {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kSafeguard = 500.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Equilibration (Ruiz, cone-uniform over multi-dimensional segments)

struct Equil {
  Vec d_row, d_col;
  double alpha_obj = 1.0;
};

Equil equilibrate(const ConicProgram& p, const SolverSettings& st) {
  const Index nr = p.n_rows();
  const Index nc = p.n_vars;
  Equil eq;
  eq.d_row = Vec::Ones(nr);
  eq.d_col = Vec::Ones(nc);
  if (!st.equilibrate) return eq;

  for (int pass = 0; pass < st.ruiz_iters; ++pass) {
    Vec rmax = Vec::Zero(nr);
    Vec cmax = Vec::Zero(nc);
    for (Index j = 0; j < nc; ++j)
      for (SpMat::InnerIterator it(p.A, j); it; ++it) {
        const double v =
            std::abs(it.value()) * eq.d_row(it.row()) * eq.d_col(j);
        rmax(it.row()) = std::max(rmax(it.row()), v);
        cmax(j) = std::max(cmax(j), v);
      }
    for (Index i = 0; i < nr; ++i)
      if (rmax(i) > 0.0) eq.d_row(i) /= std::sqrt(rmax(i));
    for (const auto& seg : p.segments) {
      if (seg.dim == 1 || seg.kind == SegKind::Nonneg || seg.kind == SegKind::Free) {
        for (Index k = 0; k < seg.dim; ++k) {
          const Index j = seg.start + k;
          if (cmax(j) > 0.0) eq.d_col(j) /= std::sqrt(cmax(j));
        }
      } else {
        // One uniform factor per cone block (geometric mean) so membership
        // is preserved.
        double acc = 0.0;
        Index cnt = 0;
        for (Index k = 0; k < seg.dim; ++k) {
          const Index j = seg.start + k;
          if (cmax(j) > 0.0) {
            acc += std::log(cmax(j));
            ++cnt;
          }
        }
        if (cnt > 0) {
          const double f = std::exp(-0.5 * acc / static_cast<double>(cnt));
          for (Index k = 0; k < seg.dim; ++k) eq.d_col(seg.start + k) *= f;
        }
      }
    }
  }
  return eq;
}

// ---------------------------------------------------------------------------
// Conversion to the solver's internal form:
//   min c'x  s.t.  A x = b,  G x + s = h,  s in (orthant x SOC blocks)
// Rotated segments are lowered to plain SOC through the symmetric involution
// ((u+v)/sqrt2, (u-v)/sqrt2, w).

struct SocBlock {
  Index row = 0; // first G row
  Index dim = 0;
};

struct Internal {
  Index n = 0, p = 0, m = 0;
  Index lp_dim = 0;
  std::vector<SocBlock> socs;
  SpMat A, G;
  Vec b, c, h;
  std::vector<Index> seg_grow; // per program segment: first G row (-1 = free)
};

Internal convert(const ConicProgram& prog, const Equil& eq, double alpha_obj) {
  Internal in;
  in.n = prog.n_vars;
  in.p = prog.n_rows();

  Index lp = 0;
  for (const auto& seg : prog.segments)
    if (seg.kind == SegKind::Nonneg) lp += seg.dim;
  in.lp_dim = lp;

  std::vector<Triplet> gt;
  Index lp_cursor = 0;
  Index soc_cursor = lp;
  in.seg_grow.assign(prog.segments.size(), -1);
  for (std::size_t k = 0; k < prog.segments.size(); ++k) {
    const Segment& seg = prog.segments[k];
    switch (seg.kind) {
      case SegKind::Free:
        break;
      case SegKind::Nonneg:
        in.seg_grow[k] = lp_cursor;
        for (Index i = 0; i < seg.dim; ++i)
          gt.emplace_back(static_cast<int>(lp_cursor + i),
                          static_cast<int>(seg.start + i), -1.0);
        lp_cursor += seg.dim;
        break;
      case SegKind::Soc:
        in.seg_grow[k] = soc_cursor;
        in.socs.push_back({soc_cursor, seg.dim});
        for (Index i = 0; i < seg.dim; ++i)
          gt.emplace_back(static_cast<int>(soc_cursor + i),
                          static_cast<int>(seg.start + i), -1.0);
        soc_cursor += seg.dim;
        break;
      case SegKind::Rsoc:
        in.seg_grow[k] = soc_cursor;
        in.socs.push_back({soc_cursor, seg.dim});
        gt.emplace_back(static_cast<int>(soc_cursor), static_cast<int>(seg.start), -kInvSqrt2);
        gt.emplace_back(static_cast<int>(soc_cursor), static_cast<int>(seg.start + 1), -kInvSqrt2);
        gt.emplace_back(static_cast<int>(soc_cursor + 1), static_cast<int>(seg.start), -kInvSqrt2);
        gt.emplace_back(static_cast<int>(soc_cursor + 1), static_cast<int>(seg.start + 1), kInvSqrt2);
        for (Index i = 2; i < seg.dim; ++i)
          gt.emplace_back(static_cast<int>(soc_cursor + i),
                          static_cast<int>(seg.start + i), -1.0);
        soc_cursor += seg.dim;
        break;
    }
  }
  in.m = soc_cursor;
  in.G.resize(in.m, in.n);
  in.G.setFromTriplets(gt.begin(), gt.end());
  in.G.makeCompressed();
  in.h = Vec::Zero(in.m);

  // Scaled data.
  std::vector<Triplet> at;
  for (Index j = 0; j < prog.n_vars; ++j)
    for (SpMat::InnerIterator it(prog.A, j); it; ++it)
      at.emplace_back(static_cast<int>(it.row()), static_cast<int>(j),
                      it.value() * eq.d_row(it.row()) * eq.d_col(j));
  in.A.resize(in.p, in.n);
  in.A.setFromTriplets(at.begin(), at.end());
  in.A.makeCompressed();
  in.b = eq.d_row.cwiseProduct(prog.b);
  in.c = alpha_obj * eq.d_col.cwiseProduct(prog.c);
  return in;
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scaling

struct SocScale {
  double eta = 1.0;
  double etasq = 1.0;
  Vec wbar; // normalized scaling point
  Vec v;    // W = eta * (2 v v' - J)
  Mat w2;   // dense eta^2 (2 wbar wbar' - J), used in the KKT matrix
};

struct Scaling {
  Vec w_lp, w2_lp;
  std::vector<SocScale> socs;
  Vec lambda;
};

Scaling identity_scaling(const Internal& in) {
  Scaling sc;
  sc.w_lp = Vec::Ones(in.lp_dim);
  sc.w2_lp = Vec::Ones(in.lp_dim);
  sc.lambda = Vec::Zero(in.m);
  for (const auto& blk : in.socs) {
    SocScale ss;
    ss.eta = 1.0;
    ss.etasq = 1.0;
    ss.wbar = Vec::Zero(blk.dim);
    ss.wbar(0) = 1.0;
    ss.v = ss.wbar;
    ss.w2 = Mat::Identity(blk.dim, blk.dim);
    sc.socs.push_back(std::move(ss));
  }
  return sc;
}

bool update_scaling(const Internal& in, const Vec& s, const Vec& z,
                    Scaling& sc) {
  for (Index i = 0; i < in.lp_dim; ++i)
    if (s(i) <= 0.0 || z(i) <= 0.0) return false;
  kernels::div(s.data(), z.data(), sc.w2_lp.data(),
               static_cast<std::size_t>(in.lp_dim));
  kernels::sqrt(sc.w2_lp.data(), sc.w_lp.data(),
                static_cast<std::size_t>(in.lp_dim));
  Vec sz(in.lp_dim);
  kernels::mul(s.data(), z.data(), sz.data(),
               static_cast<std::size_t>(in.lp_dim));
  kernels::sqrt(sz.data(), sc.lambda.data(),
                static_cast<std::size_t>(in.lp_dim));

  for (std::size_t k = 0; k < in.socs.size(); ++k) {
    const SocBlock& blk = in.socs[k];
    SocScale& ss = sc.socs[k];
    const auto sb = s.segment(blk.row, blk.dim);
    const auto zb = z.segment(blk.row, blk.dim);
    const double sres = sb(0) * sb(0) - sb.tail(blk.dim - 1).squaredNorm();
    const double zres = zb(0) * zb(0) - zb.tail(blk.dim - 1).squaredNorm();
    if (sres <= 0.0 || zres <= 0.0 || sb(0) <= 0.0 || zb(0) <= 0.0)
      return false;
    const double snorm = std::sqrt(sres);
    const double znorm = std::sqrt(zres);
    const Vec sbar = sb / snorm;
    const Vec zbar = zb / znorm;
    const double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);

    ss.wbar.resize(blk.dim);
    ss.wbar(0) = (sbar(0) + zbar(0)) / (2.0 * gamma);
    ss.wbar.tail(blk.dim - 1) =
        (sbar.tail(blk.dim - 1) - zbar.tail(blk.dim - 1)) / (2.0 * gamma);
    ss.eta = std::sqrt(snorm / znorm);
    ss.etasq = snorm / znorm;
    ss.v = ss.wbar;
    ss.v(0) += 1.0;
    ss.v /= std::sqrt(2.0 * (1.0 + ss.wbar(0)));

    ss.w2.noalias() = 2.0 * ss.etasq * (ss.wbar * ss.wbar.transpose());
    ss.w2(0, 0) -= ss.etasq;
    for (Index i = 1; i < blk.dim; ++i) ss.w2(i, i) += ss.etasq;

    // lambda = W z (= W^{-1} s), closed form.
    const double sz_prod = std::sqrt(snorm * znorm);
    auto lb = sc.lambda.segment(blk.row, blk.dim);
    lb(0) = gamma * sz_prod;
    const double denom = sbar(0) + zbar(0) + 2.0 * gamma;
    lb.tail(blk.dim - 1) =
        sz_prod *
        ((gamma + zbar(0)) * sbar.tail(blk.dim - 1) +
         (gamma + sbar(0)) * zbar.tail(blk.dim - 1)) /
        denom;
  }
  return true;
}

// W u and W^{-1} u, blockwise.
Vec scale_apply(const Internal& in, const Scaling& sc, const Vec& u) {
  Vec out(in.m);
  kernels::mul(sc.w_lp.data(), u.data(), out.data(),
               static_cast<std::size_t>(in.lp_dim));
  for (std::size_t k = 0; k < in.socs.size(); ++k) {
    const SocBlock& blk = in.socs[k];
    const SocScale& ss = sc.socs[k];
    const auto ub = u.segment(blk.row, blk.dim);
    auto ob = out.segment(blk.row, blk.dim);
    const double vu = ss.v.dot(ub);
    ob = 2.0 * vu * ss.v;
    ob(0) -= ub(0);
    ob.tail(blk.dim - 1) += ub.tail(blk.dim - 1);
    ob *= ss.eta;
  }
  return out;
}

// W^2 u without forming the full matrix (iterative refinement path).
Vec w2_apply(const Internal& in, const Scaling& sc, const Vec& u) {
  Vec out(in.m);
  kernels::mul(sc.w2_lp.data(), u.data(), out.data(),
               static_cast<std::size_t>(in.lp_dim));
  for (std::size_t k = 0; k < in.socs.size(); ++k) {
    const SocBlock& blk = in.socs[k];
    out.segment(blk.row, blk.dim).noalias() =
        sc.socs[k].w2 * u.segment(blk.row, blk.dim);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Jordan-algebra helpers over the cone (orthant entries + SOC blocks)

Vec cone_product(const Internal& in, const Vec& u, const Vec& v) {
  Vec out(in.m);
  kernels::mul(u.data(), v.data(), out.data(),
               static_cast<std::size_t>(in.lp_dim));
  for (const auto& blk : in.socs) {
    const auto ub = u.segment(blk.row, blk.dim);
    const auto vb = v.segment(blk.row, blk.dim);
    auto ob = out.segment(blk.row, blk.dim);
    ob(0) = ub.dot(vb);
    ob.tail(blk.dim - 1) =
        ub(0) * vb.tail(blk.dim - 1) + vb(0) * ub.tail(blk.dim - 1);
  }
  return out;
}

Vec cone_divide(const Internal& in, const Vec& lam, const Vec& w) {
  Vec out(in.m);
  kernels::div(w.data(), lam.data(), out.data(),
               static_cast<std::size_t>(in.lp_dim));
  for (const auto& blk : in.socs) {
    const auto lb = lam.segment(blk.row, blk.dim);
    const auto wb = w.segment(blk.row, blk.dim);
    auto ob = out.segment(blk.row, blk.dim);
    const double rho = lb(0) * lb(0) - lb.tail(blk.dim - 1).squaredNorm();
    const double v0 =
        (lb(0) * wb(0) - lb.tail(blk.dim - 1).dot(wb.tail(blk.dim - 1))) / rho;
    ob(0) = v0;
    ob.tail(blk.dim - 1) =
        (wb.tail(blk.dim - 1) - v0 * lb.tail(blk.dim - 1)) / lb(0);
  }
  return out;
}

Vec cone_unit(const Internal& in) {
  Vec e = Vec::Zero(in.m);
  e.head(in.lp_dim).setOnes();
  for (const auto& blk : in.socs) e(blk.row) = 1.0;
  return e;
}

Vec bring_to_cone(const Internal& in, const Vec& r) {
  double alpha = -1.0;
  for (Index i = 0; i < in.lp_dim; ++i) alpha = std::max(alpha, -r(i));
  for (const auto& blk : in.socs) {
    const double f = r(blk.row) - r.segment(blk.row + 1, blk.dim - 1).norm();
    alpha = std::max(alpha, -f);
  }
  return r + (1.0 + alpha) * cone_unit(in);
}

// Largest step with lambda + alpha * d staying in the cone, for the scaled
// directions W^{-1} ds and W dz, plus the tau/kappa bounds.
double line_search(const Internal& in, const Vec& lambda, const Vec& ds_by_w,
                   const Vec& dz_by_w, double tau, double dtau, double kap,
                   double dkap, const SolverSettings& st) {
  double alpha = 1.0 / 1e-13;
  if (in.lp_dim > 0) {
    const double rhomin =
        kernels::min_ratio(ds_by_w.data(), lambda.data(),
                           static_cast<std::size_t>(in.lp_dim));
    const double sigmamin =
        kernels::min_ratio(dz_by_w.data(), lambda.data(),
                           static_cast<std::size_t>(in.lp_dim));
    const double worst = std::max(-sigmamin, -rhomin);
    if (worst > 1e-13) alpha = 1.0 / worst;
  }
  if (dtau < 0.0) alpha = std::min(alpha, -tau / dtau);
  if (dkap < 0.0) alpha = std::min(alpha, -kap / dkap);

  for (const auto& blk : in.socs) {
    const auto lb = lambda.segment(blk.row, blk.dim);
    const double lknorm2 = lb(0) * lb(0) - lb.tail(blk.dim - 1).squaredNorm();
    if (lknorm2 <= 0.0) continue;
    const double lknorm = std::sqrt(lknorm2);
    const Vec lkbar = lb / lknorm;
    double conic_step = 0.0;
    for (const Vec* dp : {&ds_by_w, &dz_by_w}) {
      const auto db = dp->segment(blk.row, blk.dim);
      const double lkbar_d =
          lkbar(0) * db(0) - lkbar.tail(blk.dim - 1).dot(db.tail(blk.dim - 1));
      const double base = lkbar_d / lknorm;
      const double factor = (lkbar_d + db(0)) / (lkbar(0) + 1.0);
      const Vec tail =
          (db.tail(blk.dim - 1) - factor * lkbar.tail(blk.dim - 1)) / lknorm;
      conic_step = std::max(conic_step, tail.norm() - base);
    }
    if (conic_step > 0.0) alpha = std::min(alpha, 1.0 / conic_step);
  }
  return std::clamp(alpha, st.stepmin, st.stepmax);
}

// ---------------------------------------------------------------------------
// KKT system
//   [ dI   A'        G'      ]
//   [ A   -dI        0       ]
//   [ G    0   -W^2 - dI     ]

struct Kkt {
  Index n, p, m, dim;
  Eigen::SimplicialLDLT<SpMat, Eigen::Upper> ldlt;
  bool analyzed = false;

  std::vector<Triplet> assemble(const Internal& in, const Scaling& sc,
                                double delta) const {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(in.n + in.p + in.m) +
              static_cast<std::size_t>(in.A.nonZeros() + in.G.nonZeros()) + 64);
    for (Index i = 0; i < in.n; ++i)
      t.emplace_back(static_cast<int>(i), static_cast<int>(i), delta);
    for (Index j = 0; j < in.n; ++j)
      for (SpMat::InnerIterator it(in.A, j); it; ++it)
        t.emplace_back(static_cast<int>(j), static_cast<int>(in.n + it.row()),
                       it.value());
    for (Index j = 0; j < in.n; ++j)
      for (SpMat::InnerIterator it(in.G, j); it; ++it)
        t.emplace_back(static_cast<int>(j),
                       static_cast<int>(in.n + in.p + it.row()), it.value());
    for (Index i = 0; i < in.p; ++i)
      t.emplace_back(static_cast<int>(in.n + i), static_cast<int>(in.n + i),
                     -delta);
    const Index zoff = in.n + in.p;
    for (Index i = 0; i < in.lp_dim; ++i)
      t.emplace_back(static_cast<int>(zoff + i), static_cast<int>(zoff + i),
                     -sc.w2_lp(i) - delta);
    for (std::size_t k = 0; k < in.socs.size(); ++k) {
      const SocBlock& blk = in.socs[k];
      const Mat& w2 = sc.socs[k].w2;
      for (Index a = 0; a < blk.dim; ++a)
        for (Index bcol = a; bcol < blk.dim; ++bcol)
          t.emplace_back(static_cast<int>(zoff + blk.row + a),
                         static_cast<int>(zoff + blk.row + bcol),
                         -w2(a, bcol) - (a == bcol ? delta : 0.0));
    }
    return t;
  }

  bool factorize(const Internal& in, const Scaling& sc, double delta) {
    n = in.n;
    p = in.p;
    m = in.m;
    dim = n + p + m;
    const auto trips = assemble(in, sc, delta);
    SpMat K(dim, dim);
    K.setFromTriplets(trips.begin(), trips.end());
    K.makeCompressed();
    if (!analyzed) {
      ldlt.analyzePattern(K);
      analyzed = true;
    }
    ldlt.factorize(K);
    return ldlt.info() == Eigen::Success;
  }

  // Residual of the UNregularized KKT operator.
  Vec residual(const Internal& in, const Scaling& sc, const Vec& rhs,
               const Vec& sol) const {
    Vec err(dim);
    const auto x = sol.head(n);
    const auto y = sol.segment(n, p);
    const auto z = sol.tail(m);
    err.head(n) = rhs.head(n);
    err.head(n).noalias() -= in.A.transpose() * y;
    err.head(n).noalias() -= in.G.transpose() * z;
    err.segment(n, p) = rhs.segment(n, p);
    err.segment(n, p).noalias() -= in.A * x;
    err.tail(m) = rhs.tail(m);
    err.tail(m).noalias() -= in.G * x;
    err.tail(m) += w2_apply(in, sc, z);
    return err;
  }

  Vec solve(const Internal& in, const Scaling& sc, const Vec& rhs,
            const SolverSettings& st) const {
    Vec sol = ldlt.solve(rhs);
    const double rhsnorm = rhs.lpNorm<Eigen::Infinity>();
    const double target = (1.0 + rhsnorm) * st.linsysacc;
    double errnorm = kInf;
    for (int it = 0; it < st.nitref; ++it) {
      const Vec err = residual(in, sc, rhs, sol);
      const double e = err.lpNorm<Eigen::Infinity>();
      if (e <= target) return sol;
      if (e >= errnorm) return sol; // refinement stalled
      errnorm = e;
      sol += ldlt.solve(err);
    }
    return sol;
  }
};

// ---------------------------------------------------------------------------

struct Iterate {
  Vec x, y, z, s;
  double tau = 1.0, kap = 1.0;
};

struct Stats {
  double cx = 0, by = 0, hz = 0;
  double gap = 0, mu = 0;
  double pcost = 0, dcost = 0;
  std::optional<double> relgap;
  double pres = 0, dres = 0;
  double pinfres = kInf, dinfres = kInf;
  bool pinf_valid = false, dinf_valid = false;
  double rt = 0;
  Vec rx, ry, rz;
};

Stats compute_stats(const Internal& in, const Iterate& it, double resx0,
                    double resy0, double resz0, double reltol, Index mu_deg) {
  Stats st;
  st.cx = kernels::dot(in.c.data(), it.x.data(), static_cast<std::size_t>(in.n));
  st.by = in.b.dot(it.y);
  st.hz = in.h.dot(it.z);

  st.rx = -in.A.transpose() * it.y - in.G.transpose() * it.z;
  const double hresx = st.rx.norm();
  st.rx -= it.tau * in.c;
  st.ry = in.A * it.x;
  const double hresy = st.ry.norm();
  st.ry -= it.tau * in.b;
  st.rz = it.s + in.G * it.x;
  const double hresz = st.rz.norm();
  st.rz -= it.tau * in.h;
  st.rt = it.kap + st.cx + st.by + st.hz;

  st.gap = kernels::dot(it.s.data(), it.z.data(), static_cast<std::size_t>(in.m));
  st.mu = (st.gap + it.kap * it.tau) / static_cast<double>(mu_deg);
  st.pcost = st.cx / it.tau;
  st.dcost = -(st.hz + st.by) / it.tau;
  if (st.pcost < 0.0)
    st.relgap = st.gap / (-st.pcost);
  else if (st.dcost > 0.0)
    st.relgap = st.gap / st.dcost;

  const double nx = it.x.norm(), ny = it.y.norm(), nz = it.z.norm(),
               ns = it.s.norm();
  st.pres = std::max(st.ry.norm() / std::max(resy0 + nx, 1.0),
                     st.rz.norm() / std::max(resz0 + nx + ns, 1.0)) /
            it.tau;
  st.dres = st.rx.norm() / std::max(resx0 + ny + nz, 1.0) / it.tau;

  if ((st.hz + st.by) / std::max(ny + nz, 1.0) < -reltol) {
    st.pinfres = hresx / std::max(ny + nz, 1.0);
    st.pinf_valid = true;
  }
  if (st.cx / std::max(nx, 1.0) < -reltol) {
    st.dinfres = std::max(hresy / std::max(nx, 1.0),
                          hresz / std::max(nx + ns, 1.0));
    st.dinf_valid = true;
  }
  return st;
}

enum class Exit { None, Optimal, Pinf, Dinf };

Exit check_exit(const Stats& st, double tau, double kap, double feastol,
                double abstol, double reltol) {
  if (st.pres < feastol && st.dres < feastol &&
      (st.gap < abstol || (st.relgap && *st.relgap < reltol)))
    return Exit::Optimal;
  if (st.pinf_valid && st.pinfres < feastol && tau < kap) return Exit::Pinf;
  if (st.dinf_valid && st.dinfres < feastol && tau < kap) return Exit::Dinf;
  return Exit::None;
}

// KKT quality of the iterate mapped back to the original program. Declaring
// optimality on these (rather than on the equilibrated internal residuals)
// keeps the reported status meaningful for badly scaled data.
struct UnscaledStats {
  double pres = kInf, dres = kInf, cone_x = kInf, cone_z = kInf;
  double gap = kInf, relgap = kInf, score = kInf;
  bool finite = false;
  bool ok(double feastol, double abstol, double reltol) const {
    return finite && pres <= feastol && dres <= feastol &&
           cone_x <= feastol && cone_z <= feastol &&
           (gap <= abstol || relgap <= reltol);
  }
};

} // namespace

// ---------------------------------------------------------------------------

Solution solve(const ConicProgram& prog, const SolverSettings& st) {
  prog.check_shape();
  Solution out;
  out.x = Vec::Zero(prog.n_vars);
  out.y = Vec::Zero(prog.n_rows());
  out.z = Vec::Zero(prog.n_vars);

  const Equil eq = equilibrate(prog, st);
  const Vec c_scaled_raw = eq.d_col.cwiseProduct(prog.c);
  const double alpha_obj =
      1.0 / std::max(1.0, c_scaled_raw.lpNorm<Eigen::Infinity>());
  const Internal in = convert(prog, eq, alpha_obj);

  if (in.m == 0) {
    out.status = SolveStatus::NumericalFailure;
    out.message = "program has no cone constraints";
    return out;
  }

  const double resx0 = std::max(1.0, in.c.norm());
  const double resy0 = std::max(1.0, in.b.norm());
  const double resz0 = std::max(1.0, in.h.norm());
  const Index mu_deg = in.lp_dim + static_cast<Index>(in.socs.size()) + 1;
  const Vec e = cone_unit(in);

  Scaling sc = identity_scaling(in);
  Kkt kkt;
  if (!kkt.factorize(in, sc, st.staticreg)) {
    out.status = SolveStatus::NumericalFailure;
    out.message = "initial KKT factorization failed";
    return out;
  }

  // Initial point.
  Iterate cur;
  {
    Vec rhs = Vec::Zero(kkt.dim);
    rhs.segment(in.n, in.p) = in.b;
    rhs.tail(in.m) = in.h;
    const Vec sol1 = kkt.solve(in, sc, rhs, st);
    cur.x = sol1.head(in.n);
    cur.s = bring_to_cone(in, -sol1.tail(in.m));

    Vec rhs2 = Vec::Zero(kkt.dim);
    rhs2.head(in.n) = -in.c;
    const Vec sol2 = kkt.solve(in, sc, rhs2, st);
    cur.y = sol2.segment(in.n, in.p);
    cur.z = bring_to_cone(in, sol2.tail(in.m));
    cur.tau = 1.0;
    cur.kap = 1.0;
  }

  Iterate best = cur;
  double best_score = kInf;
  double pres_prev = kInf;
  Exit exit = Exit::None;
  bool inaccurate = false;
  std::string message;
  int iter = 0;

  const double bn_inf = 1.0 + prog.b.lpNorm<Eigen::Infinity>();
  const double cn_inf = 1.0 + prog.c.lpNorm<Eigen::Infinity>();

  auto z_to_program = [&](const Vec& z_int) -> Vec {
    Vec zv = Vec::Zero(in.n);
    for (std::size_t k = 0; k < prog.segments.size(); ++k) {
      const Segment& seg = prog.segments[k];
      const Index gr = in.seg_grow[k];
      if (gr < 0) continue;
      switch (seg.kind) {
        case SegKind::Free:
          break;
        case SegKind::Nonneg:
        case SegKind::Soc:
          zv.segment(seg.start, seg.dim) = z_int.segment(gr, seg.dim);
          break;
        case SegKind::Rsoc: {
          const auto zb = z_int.segment(gr, seg.dim);
          zv(seg.start) = (zb(0) + zb(1)) * kInvSqrt2;
          zv(seg.start + 1) = (zb(0) - zb(1)) * kInvSqrt2;
          zv.segment(seg.start + 2, seg.dim - 2) = zb.tail(seg.dim - 2);
          break;
        }
      }
    }
    return zv;
  };

  auto unscaled_eval = [&](const Iterate& itx) -> UnscaledStats {
    UnscaledStats u;
    if (!(itx.tau > 1e-300) || !std::isfinite(itx.tau)) return u;
    const Vec xu = eq.d_col.cwiseProduct(itx.x) / itx.tau;
    const Vec yu = -eq.d_row.cwiseProduct(itx.y) / (alpha_obj * itx.tau);
    const Vec zu = z_to_program(itx.z).cwiseQuotient(eq.d_col) /
                   (alpha_obj * itx.tau);
    u.pres = (prog.A * xu - prog.b).lpNorm<Eigen::Infinity>() / bn_inf;
    u.dres = (prog.c - prog.A.transpose() * yu - zu)
                 .lpNorm<Eigen::Infinity>() /
             cn_inf;
    u.cone_x = cone_violation(prog.segments, xu);
    u.cone_z = cone_violation(prog.segments, zu);
    u.gap = std::abs(xu.dot(zu));
    u.relgap = u.gap / std::max(1.0, std::abs(prog.c.dot(xu)));
    u.score = std::max({u.pres, u.dres, u.cone_x, u.cone_z,
                        std::min(u.gap, u.relgap)});
    u.finite = std::isfinite(u.score);
    return u;
  };

  Stats stats;
  UnscaledStats ust;
  auto refresh = [&](const Iterate& itx) {
    stats = compute_stats(in, itx, resx0, resy0, resz0, st.reltol, mu_deg);
    ust = unscaled_eval(itx);
  };
  // Optimality is judged on the original data; infeasibility certificates on
  // the internal homogeneous residuals.
  auto classify = [&](double feastol, double abstol, double reltol) -> Exit {
    if (ust.ok(feastol, abstol, reltol)) return Exit::Optimal;
    const Exit e = check_exit(stats, cur.tau, cur.kap, feastol, abstol, reltol);
    return e == Exit::Optimal ? Exit::None : e;
  };

  for (iter = 0; iter <= st.maxit; ++iter) {
    refresh(cur);

    IterRecord rec;
    rec.iter = iter;
    rec.pcost = stats.pcost;
    rec.dcost = stats.dcost;
    rec.gap = stats.gap;
    rec.pres = stats.pres;
    rec.dres = stats.dres;
    rec.tau = cur.tau;
    rec.kappa = cur.kap;
    out.log.push_back(rec);

    // Divergence safeguard: restore the best iterate seen and stop.
    if (iter > 0 && (stats.pres > kSafeguard * pres_prev || stats.gap < 0.0)) {
      cur = best;
      refresh(cur);
      exit = classify(st.feastol_inacc, st.abstol_inacc, st.reltol_inacc);
      inaccurate = exit != Exit::None;
      message = inaccurate
                    ? fmt::format("restored iterate meets reduced tolerances "
                                  "after stall at iteration {}",
                                  iter)
                    : fmt::format("numerical problems at iteration {}", iter);
      break;
    }
    pres_prev = stats.pres;

    if (ust.finite && ust.score < best_score) {
      best_score = ust.score;
      best = cur;
    }

    exit = classify(st.feastol, st.abstol, st.reltol);
    if (exit != Exit::None) break;

    if (iter == st.maxit) {
      cur = best;
      refresh(cur);
      exit = classify(st.feastol_inacc, st.abstol_inacc, st.reltol_inacc);
      inaccurate = true;
      message = exit == Exit::None
                    ? fmt::format("iteration limit ({}) reached", st.maxit)
                    : fmt::format(
                          "reduced tolerances met at the iteration limit ({})",
                          st.maxit);
      break;
    }

    if (!update_scaling(in, cur.s, cur.z, sc)) {
      cur = best;
      refresh(cur);
      exit = classify(st.feastol_inacc, st.abstol_inacc, st.reltol_inacc);
      inaccurate = exit != Exit::None;
      message = "iterate left the cone interior";
      break;
    }
    if (!kkt.factorize(in, sc, st.staticreg)) {
      cur = best;
      refresh(cur);
      exit = classify(st.feastol_inacc, st.abstol_inacc, st.reltol_inacc);
      inaccurate = exit != Exit::None;
      message = "KKT factorization failed";
      break;
    }

    // Base direction for the tau update.
    Vec rhs1(kkt.dim);
    rhs1.head(in.n) = -in.c;
    rhs1.segment(in.n, in.p) = in.b;
    rhs1.tail(in.m) = in.h;
    const Vec d1 = kkt.solve(in, sc, rhs1, st);
    const auto dx1 = d1.head(in.n);
    const auto dy1 = d1.segment(in.n, in.p);
    const auto dz1 = d1.tail(in.m);

    const double dt_denom = cur.kap / cur.tau - in.c.dot(dx1) - in.b.dot(dy1) -
                            in.h.dot(dz1);
    if (!std::isfinite(dt_denom) || dt_denom == 0.0) {
      cur = best;
      refresh(cur);
      exit = classify(st.feastol_inacc, st.abstol_inacc, st.reltol_inacc);
      inaccurate = exit != Exit::None;
      message = "degenerate tau system";
      break;
    }

    // Affine (predictor) direction.
    Vec rhs2(kkt.dim);
    rhs2.head(in.n) = stats.rx;
    rhs2.segment(in.n, in.p) = -stats.ry;
    rhs2.tail(in.m) = cur.s - stats.rz;
    Vec d2 = kkt.solve(in, sc, rhs2, st);
    {
      const auto dx2 = d2.head(in.n);
      const auto dy2 = d2.segment(in.n, in.p);
      const auto dz2 = d2.tail(in.m);
      const double dtau_aff =
          (stats.rt - cur.kap + in.c.dot(dx2) + in.b.dot(dy2) +
           in.h.dot(dz2)) /
          dt_denom;
      const Vec dz_aff = dz2 + dtau_aff * dz1;
      const Vec w_dz_aff = scale_apply(in, sc, dz_aff);
      const Vec ds_aff_by_w = -w_dz_aff - sc.lambda;
      const double dkap_aff = -cur.kap - (cur.kap / cur.tau) * dtau_aff;
      const double alpha_aff =
          line_search(in, sc.lambda, ds_aff_by_w, w_dz_aff, cur.tau, dtau_aff,
                      cur.kap, dkap_aff, st);
      const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3.0),
                                      st.sigmamin, st.sigmamax);

      // Combined (centering + corrector) direction.
      const Vec ds_scaled = cone_product(in, sc.lambda, sc.lambda) +
                            cone_product(in, ds_aff_by_w, w_dz_aff) -
                            sigma * stats.mu * e;
      const Vec lam_div_ds = cone_divide(in, sc.lambda, ds_scaled);
      Vec rhs3(kkt.dim);
      rhs3.head(in.n) = (1.0 - sigma) * stats.rx;
      rhs3.segment(in.n, in.p) = -(1.0 - sigma) * stats.ry;
      rhs3.tail(in.m) =
          -(1.0 - sigma) * stats.rz + scale_apply(in, sc, lam_div_ds);
      const Vec d3 = kkt.solve(in, sc, rhs3, st);
      const auto dx3 = d3.head(in.n);
      const auto dy3 = d3.segment(in.n, in.p);
      const auto dz3 = d3.tail(in.m);

      const double bkap =
          cur.kap * cur.tau + dkap_aff * dtau_aff - sigma * stats.mu;
      const double dtau = ((1.0 - sigma) * stats.rt - bkap / cur.tau +
                           in.c.dot(dx3) + in.b.dot(dy3) + in.h.dot(dz3)) /
                          dt_denom;
      const Vec dx = dx3 + dtau * dx1;
      const Vec dy = dy3 + dtau * dy1;
      const Vec dz = dz3 + dtau * dz1;
      const Vec w_dz = scale_apply(in, sc, dz);
      const Vec ds_by_w = -(lam_div_ds + w_dz);
      const double dkap = -(bkap + cur.kap * dtau) / cur.tau;

      const double alpha = st.gamma * line_search(in, sc.lambda, ds_by_w, w_dz,
                                                  cur.tau, dtau, cur.kap,
                                                  dkap, st);
      const Vec ds = scale_apply(in, sc, ds_by_w);
      cur.x += alpha * dx;
      cur.y += alpha * dy;
      cur.z += alpha * dz;
      cur.s += alpha * ds;
      cur.tau += alpha * dtau;
      cur.kap += alpha * dkap;
      out.log.back().step = alpha;
      out.log.back().sigma = sigma;
    }
  }

  out.iterations = iter;

  // Map back: homogeneous scaling, cone lowering, equilibration, objective
  // scaling.
  Vec x = cur.x, y = cur.y, z_ecos = cur.z;
  switch (exit) {
    case Exit::Optimal:
      x /= cur.tau;
      y /= cur.tau;
      z_ecos /= cur.tau;
      out.status = SolveStatus::Optimal;
      if (message.empty())
        message = inaccurate ? "optimal (reduced tolerances)" : "optimal";
      break;
    case Exit::Pinf: {
      const double scale = -(stats.by + stats.hz);
      x.setZero();
      y /= scale;
      z_ecos /= scale;
      out.status = SolveStatus::PrimalInfeasible;
      message = "primal infeasibility certificate found";
      break;
    }
    case Exit::Dinf: {
      const double scale = -stats.cx;
      x /= scale;
      y.setZero();
      z_ecos.setZero();
      out.status = SolveStatus::DualInfeasible;
      message = "dual unboundedness certificate found";
      break;
    }
    case Exit::None:
      x /= cur.tau;
      y /= cur.tau;
      z_ecos /= cur.tau;
      out.status = iter >= st.maxit ? SolveStatus::MaxIterations
                                    : SolveStatus::NumericalFailure;
      if (message.empty()) message = "did not converge";
      break;
  }

  // z in the program's cones: z = T' z_int per segment.
  const Vec z_vic = z_to_program(z_ecos);

  // Undo equilibration, the objective scaling, and the internal dual sign
  // (internally -A'y - G'z = tau*c; the program states c - A'y - z = 0).
  out.x = eq.d_col.cwiseProduct(x);
  out.y = -eq.d_row.cwiseProduct(y) / alpha_obj;
  out.z = z_vic.cwiseQuotient(eq.d_col) / alpha_obj;

  out.pobj = prog.c.dot(out.x) + prog.c0;
  out.dobj = prog.b.dot(out.y) + prog.c0;
  out.gap = std::abs(out.x.dot(out.z));
  out.relgap = out.gap / std::max(1.0, std::abs(out.pobj));
  out.pres = (prog.A * out.x - prog.b).lpNorm<Eigen::Infinity>() /
             (1.0 + prog.b.lpNorm<Eigen::Infinity>());
  out.dres = (prog.c - prog.A.transpose() * out.y - out.z)
                 .lpNorm<Eigen::Infinity>() /
             (1.0 + prog.c.lpNorm<Eigen::Infinity>());
  out.message = message;
  return out;
}

// ---------------------------------------------------------------------------

double cone_violation(const std::vector<Segment>& segments, const Vec& x) {
  double worst = 0.0;
  for (const auto& seg : segments) {
    switch (seg.kind) {
      case SegKind::Free:
        break;
      case SegKind::Nonneg:
        worst = std::max(worst,
                         -x.segment(seg.start, seg.dim).minCoeff());
        break;
      case SegKind::Soc:
        worst = std::max(worst, x.segment(seg.start + 1, seg.dim - 1).norm() -
                                    x(seg.start));
        break;
      case SegKind::Rsoc: {
        const double t0 = (x(seg.start) + x(seg.start + 1)) * kInvSqrt2;
        const double t1 = (x(seg.start) - x(seg.start + 1)) * kInvSqrt2;
        const double tail2 =
            t1 * t1 + x.segment(seg.start + 2, seg.dim - 2).squaredNorm();
        worst = std::max(worst, std::sqrt(tail2) - t0);
        break;
      }
    }
  }
  return std::max(worst, 0.0);
}

double KktSummary::worst() const {
  return std::max({primal_eq, cone_x, cone_z, stationarity, complementarity});
}

KktSummary verify_kkt(const ConicProgram& p, const Solution& sol) {
  KktSummary ks;
  ks.primal_eq = (p.A * sol.x - p.b).lpNorm<Eigen::Infinity>() /
                 (1.0 + p.b.lpNorm<Eigen::Infinity>());
  ks.cone_x = cone_violation(p.segments, sol.x);
  // All cones here are self-dual; a free segment's dual forces z = 0.
  ks.cone_z = cone_violation(p.segments, sol.z);
  for (const auto& seg : p.segments)
    if (seg.kind == SegKind::Free)
      ks.cone_z = std::max(
          ks.cone_z,
          sol.z.segment(seg.start, seg.dim).lpNorm<Eigen::Infinity>());
  ks.stationarity =
      (p.c - p.A.transpose() * sol.y - sol.z).lpNorm<Eigen::Infinity>() /
      (1.0 + p.c.lpNorm<Eigen::Infinity>());
  ks.complementarity =
      std::abs(sol.x.dot(sol.z)) / (1.0 + std::abs(p.c.dot(sol.x)));
  return ks;
}

} // namespace bioconic
