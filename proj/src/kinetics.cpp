#include "bioconic/kinetics.hpp"

#include <cmath>
#include <fmt/format.h>

namespace bioconic {

namespace {

constexpr double kTieRel = 1e-12;

void validate_model(const GrowthModel& model, Index m, Index n_profiles,
                    const std::string& where) {
  switch (model.family) {
    case GrowthFamily::Monod:
      if (!(model.mu > 0.0) || !(model.k > 0.0))
        throw ValidationError(
            fmt::format("{}: Monod requires mu > 0 and k_M > 0", where));
      if (model.substrate_index < 0 || model.substrate_index >= m)
        throw ValidationError(
            fmt::format("{}: substrate index {} out of range (m={})", where,
                        model.substrate_index, m));
      if (model.biomass_index >= 0)
        throw ValidationError(fmt::format(
            "{}: Monod with variable biomass is not SOC-representable; "
            "use a fixed biomass profile or Contois",
            where));
      if (model.biomass_profile < 0 || model.biomass_profile >= n_profiles)
        throw ValidationError(fmt::format(
            "{}: Monod biomass profile {} out of range ({} profiles)", where,
            model.biomass_profile, n_profiles));
      break;
    case GrowthFamily::Contois:
      if (!(model.mu > 0.0) || !(model.k > 0.0))
        throw ValidationError(
            fmt::format("{}: Contois requires mu > 0 and k_C > 0", where));
      if (model.substrate_index < 0 || model.substrate_index >= m)
        throw ValidationError(
            fmt::format("{}: substrate index {} out of range (m={})", where,
                        model.substrate_index, m));
      if (model.biomass_index < 0 || model.biomass_index >= m)
        throw ValidationError(
            fmt::format("{}: biomass index {} out of range (m={})", where,
                        model.biomass_index, m));
      break;
    case GrowthFamily::NonInteractive:
    case GrowthFamily::GeometricInteractive:
      if (model.children.size() != 2)
        throw ValidationError(fmt::format(
            "{}: composite model needs exactly 2 children, got {}", where,
            model.children.size()));
      validate_model(model.children[0], m, n_profiles, where + "/a");
      validate_model(model.children[1], m, n_profiles, where + "/b");
      break;
  }
}

} // namespace

double KineticsSpec::profile_value(Index profile, Index step) const {
  const Vec& p = biomass_profiles.at(static_cast<std::size_t>(profile));
  if (p.size() == 1) return p(0);
  return p(step - 1);
}

void KineticsSpec::validate(Index tau) const {
  if (tanks.empty()) throw ValidationError("kinetics: no tanks");
  const Index m_ = tanks.front().kappa.rows();
  const Index r_ = static_cast<Index>(tanks.front().reactions.size());
  const Index np = static_cast<Index>(biomass_profiles.size());
  for (std::size_t i = 0; i < tanks.size(); ++i) {
    const TankKinetics& tk = tanks[i];
    if (tk.kappa.rows() != m_ || tk.kappa.cols() != r_)
      throw ValidationError(
          fmt::format("kinetics: tank {} kappa is {}x{}, expected {}x{}", i,
                      tk.kappa.rows(), tk.kappa.cols(), m_, r_));
    if (static_cast<Index>(tk.reactions.size()) != r_)
      throw ValidationError(
          fmt::format("kinetics: tank {} has {} reactions, expected {}", i,
                      tk.reactions.size(), r_));
    if (!tk.kappa.allFinite())
      throw ValidationError(
          fmt::format("kinetics: tank {} kappa has non-finite entries", i));
    for (std::size_t j = 0; j < tk.reactions.size(); ++j)
      validate_model(tk.reactions[j], m_, np,
                     fmt::format("kinetics tank {} reaction {}", i, j));
  }
  for (std::size_t p = 0; p < biomass_profiles.size(); ++p) {
    const Vec& prof = biomass_profiles[p];
    if (prof.size() != 1 && prof.size() != tau)
      throw ValidationError(fmt::format(
          "kinetics: biomass profile {} has length {}, expected 1 or tau={}", p,
          prof.size(), tau));
    if ((prof.array() < 0.0).any())
      throw ValidationError(
          fmt::format("kinetics: biomass profile {} has negative values", p));
  }
}

SpMat KineticsSpec::assemble_K() const {
  const Index m_ = m();
  const Index r_ = r();
  const Index s_ = s();
  std::vector<Triplet> trip;
  for (Index i = 0; i < s_; ++i) {
    const Mat& kap = tanks[static_cast<std::size_t>(i)].kappa;
    for (Index e = 0; e < m_; ++e)
      for (Index j = 0; j < r_; ++j)
        if (kap(e, j) != 0.0)
          trip.emplace_back(i * m_ + e, i * r_ + j, kap(e, j));
  }
  SpMat K(m_ * s_, r_ * s_);
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

double evaluate_rate(const GrowthModel& model, const KineticsSpec& spec,
                     const Eigen::Ref<const Vec>& tank_state, Index step) {
  switch (model.family) {
    case GrowthFamily::Monod: {
      const double S = tank_state(model.substrate_index);
      const double Xbar = spec.profile_value(model.biomass_profile, step);
      return model.mu * Xbar * S / (model.k + S);
    }
    case GrowthFamily::Contois: {
      const double S = tank_state(model.substrate_index);
      const double X = tank_state(model.biomass_index);
      const double den = model.k * X + S;
      return den == 0.0 ? 0.0 : model.mu * S * X / den;
    }
    case GrowthFamily::NonInteractive:
      return std::min(evaluate_rate(model.children[0], spec, tank_state, step),
                      evaluate_rate(model.children[1], spec, tank_state, step));
    case GrowthFamily::GeometricInteractive:
      return std::sqrt(
          evaluate_rate(model.children[0], spec, tank_state, step) *
          evaluate_rate(model.children[1], spec, tank_state, step));
  }
  return 0.0;
}

RateGradient rate_gradient(const GrowthModel& model, const KineticsSpec& spec,
                           const Eigen::Ref<const Vec>& tank_state,
                           Index step) {
  RateGradient out;
  out.grad = Vec::Zero(tank_state.size());
  switch (model.family) {
    case GrowthFamily::Monod: {
      const double S = tank_state(model.substrate_index);
      const double Xbar = spec.profile_value(model.biomass_profile, step);
      const double den = model.k + S;
      out.grad(model.substrate_index) = model.mu * Xbar * model.k / (den * den);
      return out;
    }
    case GrowthFamily::Contois: {
      const double S = tank_state(model.substrate_index);
      const double X = tank_state(model.biomass_index);
      const double den = model.k * X + S;
      if (den == 0.0) {
        // Gradient limit along the S axis (X=0, S->0+): (0, mu).
        out.grad(model.biomass_index) = model.mu;
        out.flagged = true;
        return out;
      }
      out.grad(model.substrate_index) = model.mu * model.k * X * X / (den * den);
      out.grad(model.biomass_index) = model.mu * S * S / (den * den);
      return out;
    }
    case GrowthFamily::NonInteractive: {
      const double va = evaluate_rate(model.children[0], spec, tank_state, step);
      const double vb = evaluate_rate(model.children[1], spec, tank_state, step);
      const bool tie = std::abs(va - vb) <= kTieRel * (1.0 + std::abs(va));
      const GrowthModel& active = (va <= vb) ? model.children[0] : model.children[1];
      out = rate_gradient(active, spec, tank_state, step);
      if (tie) out.flagged = true;
      return out;
    }
    case GrowthFamily::GeometricInteractive: {
      const double va = evaluate_rate(model.children[0], spec, tank_state, step);
      const double vb = evaluate_rate(model.children[1], spec, tank_state, step);
      if (va <= 0.0 || vb <= 0.0) {
        out.flagged = true;
        return out;
      }
      RateGradient ga = rate_gradient(model.children[0], spec, tank_state, step);
      RateGradient gb = rate_gradient(model.children[1], spec, tank_state, step);
      const double root = std::sqrt(va * vb);
      out.grad = (vb * ga.grad + va * gb.grad) / (2.0 * root);
      out.flagged = ga.flagged || gb.flagged;
      return out;
    }
  }
  return out;
}

JacobianResult jacobian(const KineticsSpec& spec, const Vec& state, Index step) {
  const Index m_ = spec.m();
  const Index r_ = spec.r();
  const Index s_ = spec.s();
  JacobianResult out;
  std::vector<Triplet> trip;
  for (Index i = 0; i < s_; ++i) {
    const auto tank_state = state.segment(i * m_, m_);
    const TankKinetics& tk = spec.tanks[static_cast<std::size_t>(i)];
    for (Index j = 0; j < r_; ++j) {
      RateGradient g = rate_gradient(tk.reactions[static_cast<std::size_t>(j)],
                                     spec, tank_state, step);
      if (g.flagged) out.flagged.emplace_back(i, j);
      for (Index e = 0; e < m_; ++e)
        if (g.grad(e) != 0.0) trip.emplace_back(i * r_ + j, i * m_ + e, g.grad(e));
    }
  }
  out.J.resize(r_ * s_, m_ * s_);
  out.J.setFromTriplets(trip.begin(), trip.end());
  return out;
}

namespace {

struct Affine {
  std::vector<std::pair<Index, double>> terms;
  double constant = 0.0;
};

// Adds a rotated-cone triple p with 2 p0 p1 >= p2^2 and ties p0=u, p1=v, p2=w
// through equality rows. Returns the cone's first column.
Index emit_rsoc_triple(RowEmitter& em, const Affine& u, const Affine& v,
                       const Affine& w, const std::string& tag) {
  const Index p = em.add_rsoc(3, tag + ":cone");
  auto tie = [&](Index coord, const Affine& a, const char* suffix) {
    std::vector<std::pair<Index, double>> row;
    row.emplace_back(p + coord, 1.0);
    for (const auto& [col, coeff] : a.terms) row.emplace_back(col, -coeff);
    em.add_eq(row, a.constant, tag + suffix);
  };
  tie(0, u, ":u");
  tie(1, v, ":v");
  tie(2, w, ":w");
  return p;
}

} // namespace

void emit_soc_rows(const GrowthModel& model, const KineticsSpec& spec,
                   Index step, const KineticsHandles& handles, RowEmitter& em,
                   const std::string& tag) {
  switch (model.family) {
    case GrowthFamily::Monod: {
      if (model.biomass_index >= 0 || model.biomass_profile < 0)
        throw ValidationError(fmt::format(
            "{}: Monod with variable biomass is not SOC-representable; "
            "use a fixed biomass profile or Contois",
            tag));
      const Index colS = handles.state_cols.at(
          static_cast<std::size_t>(model.substrate_index));
      const double Xbar = spec.profile_value(model.biomass_profile, step);
      // u = mu*Xbar - T, v = S + k_M, w = sqrt(2*mu*Xbar*k_M):
      // 2uv >= w^2  <=>  T <= mu*Xbar*S/(k_M+S)
      Affine u{{{handles.T, -1.0}}, model.mu * Xbar};
      Affine v{{{colS, 1.0}}, model.k};
      Affine w{{}, std::sqrt(2.0 * model.mu * Xbar * model.k)};
      emit_rsoc_triple(em, u, v, w, tag);
      return;
    }
    case GrowthFamily::Contois: {
      const Index colS = handles.state_cols.at(
          static_cast<std::size_t>(model.substrate_index));
      const Index colX = handles.state_cols.at(
          static_cast<std::size_t>(model.biomass_index));
      // u = mu*S - k_C*T, v = S + k_C*X, w = sqrt(2*mu)*S:
      // 2uv >= w^2  <=>  T <= mu*S*X/(k_C*X+S)
      Affine u{{{colS, model.mu}, {handles.T, -model.k}}, 0.0};
      Affine v{{{colS, 1.0}, {colX, model.k}}, 0.0};
      Affine w{{{colS, std::sqrt(2.0 * model.mu)}}, 0.0};
      emit_rsoc_triple(em, u, v, w, tag);
      return;
    }
    case GrowthFamily::NonInteractive: {
      const Index Ta = em.add_nonneg(tag + ":Ta");
      const Index Tb = em.add_nonneg(tag + ":Tb");
      KineticsHandles ha = handles;
      ha.T = Ta;
      KineticsHandles hb = handles;
      hb.T = Tb;
      emit_soc_rows(model.children[0], spec, step, ha, em, tag + ":a");
      emit_soc_rows(model.children[1], spec, step, hb, em, tag + ":b");
      // T <= Ta, T <= Tb via nonnegative slacks
      const Index wa = em.add_nonneg(tag + ":slack_a");
      em.add_eq({{Ta, 1.0}, {handles.T, -1.0}, {wa, -1.0}}, 0.0, tag + ":le_a");
      const Index wb = em.add_nonneg(tag + ":slack_b");
      em.add_eq({{Tb, 1.0}, {handles.T, -1.0}, {wb, -1.0}}, 0.0, tag + ":le_b");
      return;
    }
    case GrowthFamily::GeometricInteractive: {
      // T^2 <= Ta*Tb with Ta, Tb the cone's own first two coordinates.
      const Index p = em.add_rsoc(3, tag + ":hyp");
      em.add_eq({{p + 2, 1.0}, {handles.T, -std::sqrt(2.0)}}, 0.0, tag + ":w");
      KineticsHandles ha = handles;
      ha.T = p + 0;
      KineticsHandles hb = handles;
      hb.T = p + 1;
      emit_soc_rows(model.children[0], spec, step, ha, em, tag + ":a");
      emit_soc_rows(model.children[1], spec, step, hb, em, tag + ":b");
      return;
    }
  }
}

} // namespace bioconic
