#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "bioconic/kinetics.hpp"

using namespace bioconic;

namespace {

// Spec with one tank, m=2 (S, X), and a single constant biomass profile.
KineticsSpec base_spec(GrowthModel model) {
  KineticsSpec spec;
  TankKinetics tk;
  tk.reactions = {std::move(model)};
  tk.kappa = Mat::Zero(2, 1);
  tk.kappa << -2.0, 1.0;
  spec.tanks = {std::move(tk)};
  spec.biomass_profiles = {Vec::Constant(1, 4.0)};
  spec.profile_names = {"xbar"};
  return spec;
}

GrowthModel monod(double mu, double k) {
  GrowthModel m;
  m.family = GrowthFamily::Monod;
  m.mu = mu;
  m.k = k;
  m.substrate_index = 0;
  m.biomass_profile = 0;
  return m;
}

GrowthModel contois(double mu, double kc) {
  GrowthModel m;
  m.family = GrowthFamily::Contois;
  m.mu = mu;
  m.k = kc;
  m.substrate_index = 0;
  m.biomass_index = 1;
  return m;
}

GrowthModel composite(GrowthFamily fam, GrowthModel a, GrowthModel b) {
  GrowthModel m;
  m.family = fam;
  m.children = {std::move(a), std::move(b)};
  return m;
}

Vec fd_gradient(const GrowthModel& model, const KineticsSpec& spec,
                const Vec& state, Index step) {
  Vec g(state.size());
  for (Index e = 0; e < state.size(); ++e) {
    const double h = 1e-6 * (1.0 + std::abs(state(e)));
    Vec up = state, dn = state;
    up(e) += h;
    dn(e) -= h;
    g(e) = (evaluate_rate(model, spec, up, step) -
            evaluate_rate(model, spec, dn, step)) /
           (2.0 * h);
  }
  return g;
}

// Captures emitted rows and cone segments so leaf encodings can be checked
// against the closed-form rate.
struct MockEmitter final : RowEmitter {
  struct Row {
    std::vector<std::pair<Index, double>> terms;
    double rhs;
    std::string name;
  };
  struct Cone {
    Index start;
    Index dim;
    bool rotated;
  };
  Index next_col = 0;
  std::vector<Row> rows;
  std::vector<Cone> cones;
  std::vector<Index> nonneg;

  explicit MockEmitter(Index reserved) : next_col(reserved) {}

  Index add_nonneg(const std::string&) override {
    nonneg.push_back(next_col);
    return next_col++;
  }
  Index add_soc(Index dim, const std::string&) override {
    cones.push_back({next_col, dim, false});
    next_col += dim;
    return cones.back().start;
  }
  Index add_rsoc(Index dim, const std::string&) override {
    cones.push_back({next_col, dim, true});
    next_col += dim;
    return cones.back().start;
  }
  Index add_eq(const std::vector<std::pair<Index, double>>& terms, double rhs,
               const std::string& name) override {
    rows.push_back({terms, rhs, name});
    return static_cast<Index>(rows.size()) - 1;
  }

  // Evaluates the affine expression a row ties a cone coordinate to, i.e.
  // rhs - sum(coeff * value) over all non-coordinate terms.
  double tied_value(const Row& row, Index coord,
                    const std::function<double(Index)>& value_of) const {
    double acc = row.rhs;
    bool saw = false;
    for (const auto& [col, coeff] : row.terms) {
      if (col == coord && coeff == 1.0 && !saw) {
        saw = true;
        continue;
      }
      acc -= coeff * value_of(col);
    }
    REQUIRE(saw);
    return acc;
  }
};

// Membership test for a single emitted leaf triple, given state and T values.
bool leaf_feasible(const GrowthModel& model, const KineticsSpec& spec,
                   Index step, const Vec& state, double T) {
  MockEmitter em(3); // columns 0,1 = state, 2 = T
  KineticsHandles h;
  h.state_cols = {0, 1};
  h.T = 2;
  emit_soc_rows(model, spec, step, h, em, "leaf");
  REQUIRE(em.cones.size() == 1);
  REQUIRE(em.cones[0].rotated);
  REQUIRE(em.cones[0].dim == 3);
  REQUIRE(em.rows.size() == 3);
  auto value_of = [&](Index col) -> double {
    if (col < 2) return state(col);
    if (col == 2) return T;
    FAIL("leaf encoding referenced an aux column");
    return 0.0;
  };
  const Index p = em.cones[0].start;
  const double u = em.tied_value(em.rows[0], p + 0, value_of);
  const double v = em.tied_value(em.rows[1], p + 1, value_of);
  const double w = em.tied_value(em.rows[2], p + 2, value_of);
  return u >= 0.0 && v >= 0.0 && 2.0 * u * v >= w * w;
}

} // namespace

TEST_CASE("rate values match the closed forms") {
  const KineticsSpec ms = base_spec(monod(3.0, 2.0));
  Vec st(2);
  st << 5.0, 9.9; // X entry ignored by Monod with fixed profile
  CHECK(evaluate_rate(ms.tanks[0].reactions[0], ms, st, 1) ==
        doctest::Approx(3.0 * 4.0 * 5.0 / (2.0 + 5.0)).epsilon(1e-15));

  const KineticsSpec cs = base_spec(contois(1.5, 0.7));
  st << 2.0, 3.0;
  CHECK(evaluate_rate(cs.tanks[0].reactions[0], cs, st, 1) ==
        doctest::Approx(1.5 * 2.0 * 3.0 / (0.7 * 3.0 + 2.0)).epsilon(1e-15));

  const KineticsSpec ns =
      base_spec(composite(GrowthFamily::NonInteractive, monod(3.0, 2.0),
                          contois(1.5, 0.7)));
  const double va = 3.0 * 4.0 * 2.0 / (2.0 + 2.0);
  const double vb = 1.5 * 2.0 * 3.0 / (0.7 * 3.0 + 2.0);
  CHECK(evaluate_rate(ns.tanks[0].reactions[0], ns, st, 1) ==
        doctest::Approx(std::min(va, vb)).epsilon(1e-15));

  const KineticsSpec gs =
      base_spec(composite(GrowthFamily::GeometricInteractive, monod(3.0, 2.0),
                          contois(1.5, 0.7)));
  CHECK(evaluate_rate(gs.tanks[0].reactions[0], gs, st, 1) ==
        doctest::Approx(std::sqrt(va * vb)).epsilon(1e-15));
}

TEST_CASE("gradients match finite differences away from kinks") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(0.5, 20.0);
  const std::vector<KineticsSpec> specs = {
      base_spec(monod(3.0, 2.0)),
      base_spec(contois(1.5, 0.7)),
      base_spec(composite(GrowthFamily::GeometricInteractive, monod(3.0, 2.0),
                          contois(1.5, 0.7))),
  };
  for (const auto& spec : specs) {
    const GrowthModel& model = spec.tanks[0].reactions[0];
    for (int trial = 0; trial < 50; ++trial) {
      Vec st(2);
      st << dist(rng), dist(rng);
      const RateGradient g = rate_gradient(model, spec, st, 1);
      CHECK_FALSE(g.flagged);
      const Vec ref = fd_gradient(model, spec, st, 1);
      CHECK((g.grad - ref).cwiseAbs().maxCoeff() <=
            1e-6 * (1.0 + ref.cwiseAbs().maxCoeff()));
    }
  }
  // Min composite: check only away from the tie set.
  const KineticsSpec ns =
      base_spec(composite(GrowthFamily::NonInteractive, monod(3.0, 2.0),
                          contois(1.5, 0.7)));
  const GrowthModel& model = ns.tanks[0].reactions[0];
  int checked = 0;
  for (int trial = 0; trial < 80; ++trial) {
    Vec st(2);
    st << dist(rng), dist(rng);
    const double va = evaluate_rate(model.children[0], ns, st, 1);
    const double vb = evaluate_rate(model.children[1], ns, st, 1);
    if (std::abs(va - vb) < 1e-3 * (1.0 + std::abs(va))) continue;
    const RateGradient g = rate_gradient(model, ns, st, 1);
    CHECK_FALSE(g.flagged);
    const Vec ref = fd_gradient(model, ns, st, 1);
    CHECK((g.grad - ref).cwiseAbs().maxCoeff() <=
          1e-6 * (1.0 + ref.cwiseAbs().maxCoeff()));
    ++checked;
  }
  CHECK(checked > 40);
}

TEST_CASE("nondifferentiable points are flagged with documented choices") {
  const KineticsSpec cs = base_spec(contois(1.5, 0.7));
  Vec origin = Vec::Zero(2);
  const RateGradient g = rate_gradient(cs.tanks[0].reactions[0], cs, origin, 1);
  CHECK(g.flagged);
  CHECK(g.grad(0) == 0.0);
  CHECK(g.grad(1) == 1.5);

  // Exact tie between children picks the first child's gradient.
  const KineticsSpec ns = base_spec(
      composite(GrowthFamily::NonInteractive, monod(2.0, 3.0), monod(2.0, 3.0)));
  Vec st(2);
  st << 1.0, 1.0;
  const RateGradient gt = rate_gradient(ns.tanks[0].reactions[0], ns, st, 1);
  CHECK(gt.flagged);

  // Geometric mean at a zero child rate.
  const KineticsSpec gspec =
      base_spec(composite(GrowthFamily::GeometricInteractive, monod(3.0, 2.0),
                          contois(1.5, 0.7)));
  Vec zero_s(2);
  zero_s << 0.0, 4.0;
  const RateGradient gz =
      rate_gradient(gspec.tanks[0].reactions[0], gspec, zero_s, 1);
  CHECK(gz.flagged);
  CHECK(gz.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("jacobian is block diagonal with per-reaction gradients") {
  KineticsSpec spec;
  for (int i = 0; i < 2; ++i) {
    TankKinetics tk;
    tk.reactions = {monod(3.0 + i, 2.0), contois(1.5, 0.7 + 0.1 * i)};
    tk.kappa = Mat::Zero(2, 2);
    tk.kappa << -1.0, -0.5, 1.0, 0.25;
    spec.tanks.push_back(std::move(tk));
  }
  spec.biomass_profiles = {Vec::Constant(1, 4.0)};
  spec.profile_names = {"xbar"};
  spec.validate(1);

  Vec state(4);
  state << 5.0, 3.0, 2.0, 7.0;
  const JacobianResult jr = jacobian(spec, state, 1);
  REQUIRE(jr.J.rows() == 4);
  REQUIRE(jr.J.cols() == 4);
  CHECK(jr.flagged.empty());
  const Mat J = Mat(jr.J);
  // Off-tank blocks are zero.
  CHECK(J.block(0, 2, 2, 2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(J.block(2, 0, 2, 2).cwiseAbs().maxCoeff() == 0.0);
  for (Index i = 0; i < 2; ++i)
    for (Index q = 0; q < 2; ++q) {
      const RateGradient g = rate_gradient(
          spec.tanks[static_cast<std::size_t>(i)].reactions[static_cast<std::size_t>(q)],
          spec, state.segment(2 * i, 2), 1);
      CHECK((J.row(2 * i + q).segment(2 * i, 2).transpose() - g.grad)
                .cwiseAbs()
                .maxCoeff() == 0.0);
    }

  const Mat K = Mat(spec.assemble_K());
  REQUIRE(K.rows() == 4);
  REQUIRE(K.cols() == 4);
  CHECK((K.block(0, 0, 2, 2) - spec.tanks[0].kappa).cwiseAbs().maxCoeff() == 0.0);
  CHECK(K.block(0, 2, 2, 2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("leaf cone membership agrees with the closed-form rate") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> sdist(0.0, 30.0);
  std::uniform_real_distribution<double> frac(0.0, 1.6);

  const KineticsSpec specs[] = {base_spec(monod(3.0, 2.0)),
                                base_spec(contois(1.5, 0.7))};
  for (const auto& spec : specs) {
    const GrowthModel& model = spec.tanks[0].reactions[0];
    for (int trial = 0; trial < 2000; ++trial) {
      Vec st(2);
      st << sdist(rng), sdist(rng);
      const double phi = evaluate_rate(model, spec, st, 1);
      const double T = frac(rng) * (phi > 0 ? phi : 1.0);
      const bool feas = leaf_feasible(model, spec, 1, st, T);
      const bool truth = T <= phi;
      if (std::abs(T - phi) > 1e-9 * (1.0 + phi)) CHECK(feas == truth);
    }
    // Boundary point is feasible up to roundoff.
    Vec st(2);
    st << 8.0, 5.0;
    const double phi = evaluate_rate(model, spec, st, 1);
    CHECK(leaf_feasible(model, spec, 1, st, phi * (1.0 - 1e-12)));
    CHECK_FALSE(leaf_feasible(model, spec, 1, st, phi * (1.0 + 1e-9) + 1e-12));
  }
}

TEST_CASE("monod leaf works at a zero biomass profile") {
  KineticsSpec spec = base_spec(monod(3.0, 2.0));
  spec.biomass_profiles[0] = Vec::Zero(1);
  const GrowthModel& model = spec.tanks[0].reactions[0];
  Vec st(2);
  st << 5.0, 0.0;
  CHECK(evaluate_rate(model, spec, st, 1) == 0.0);
  CHECK(leaf_feasible(model, spec, 1, st, 0.0));
  CHECK_FALSE(leaf_feasible(model, spec, 1, st, 1e-6));
}

TEST_CASE("composite emission shapes") {
  // Both children Monod on the same substrate, distinct parameters. The
  // sampled equivalence of the emitted system runs in the acceptance harness;
  // here the structural contract is pinned down.
  const GrowthModel ma = monod(3.0, 2.0);
  const GrowthModel mb = monod(2.0, 6.0);

  for (GrowthFamily fam :
       {GrowthFamily::NonInteractive, GrowthFamily::GeometricInteractive}) {
    const KineticsSpec spec = base_spec(composite(fam, ma, mb));
    const GrowthModel& model = spec.tanks[0].reactions[0];

    MockEmitter em(3);
    KineticsHandles h;
    h.state_cols = {0, 1};
    h.T = 2;
    emit_soc_rows(model, spec, 1, h, em, "cmp");

    const std::size_t rsocs = static_cast<std::size_t>(
        std::count_if(em.cones.begin(), em.cones.end(),
                      [](const MockEmitter::Cone& c) { return c.rotated; }));
    CHECK(rsocs == em.cones.size());
    if (fam == GrowthFamily::NonInteractive) {
      // Two child cones; Ta, Tb and the two order slacks are nonnegative aux.
      CHECK(em.cones.size() == 2);
      CHECK(em.nonneg.size() == 4);
      CHECK(em.rows.size() == 8);
    } else {
      // Two child cones plus the hyperbolic cone whose first two coordinates
      // serve as the sub-rates.
      CHECK(em.cones.size() == 3);
      CHECK(em.nonneg.empty());
      CHECK(em.rows.size() == 7);
    }
  }
}

TEST_CASE("model validation rejects bad structures") {
  KineticsSpec spec = base_spec(monod(3.0, 2.0));
  spec.tanks[0].reactions[0].biomass_index = 1;
  CHECK_THROWS_WITH_AS(spec.validate(1),
                       doctest::Contains("not SOC-representable"),
                       ValidationError);

  spec = base_spec(monod(3.0, 2.0));
  spec.tanks[0].reactions[0].biomass_profile = 5;
  CHECK_THROWS_AS(spec.validate(1), ValidationError);

  spec = base_spec(contois(-1.0, 0.7));
  CHECK_THROWS_AS(spec.validate(1), ValidationError);

  spec = base_spec(monod(3.0, 2.0));
  spec.biomass_profiles[0] = Vec::Constant(5, 4.0);
  CHECK_THROWS_AS(spec.validate(3), ValidationError);
  CHECK_NOTHROW(spec.validate(5));

  GrowthModel cmp;
  cmp.family = GrowthFamily::NonInteractive;
  cmp.children = {monod(3.0, 2.0)};
  spec = base_spec(cmp);
  CHECK_THROWS_WITH_AS(spec.validate(1), doctest::Contains("2 children"),
                       ValidationError);
}

TEST_CASE("time-varying biomass profiles select by step") {
  KineticsSpec spec = base_spec(monod(1.0, 1.0));
  Vec prof(3);
  prof << 1.0, 2.0, 4.0;
  spec.biomass_profiles[0] = prof;
  spec.validate(3);
  Vec st(2);
  st << 1.0, 0.0;
  const GrowthModel& model = spec.tanks[0].reactions[0];
  CHECK(evaluate_rate(model, spec, st, 1) == doctest::Approx(0.5));
  CHECK(evaluate_rate(model, spec, st, 2) == doctest::Approx(1.0));
  CHECK(evaluate_rate(model, spec, st, 3) == doctest::Approx(2.0));
}
