#pragma once

#include "bioconic/types.hpp"

#include <optional>
#include <string>

namespace bioconic {

enum class GrowthFamily { Monod, Contois, NonInteractive, GeometricInteractive };

// One growth-rate model. Parameters are in canonical per-day units.
// Composite families (NonInteractive = min, GeometricInteractive = geometric
// mean) own two child models.
struct GrowthModel {
  GrowthFamily family = GrowthFamily::Monod;
  double mu = 0.0;
  double k = 0.0;             // k_M (Monod) or k_C (Contois)
  Index substrate_index = -1;
  Index biomass_index = -1;   // Contois only
  Index biomass_profile = -1; // Monod only: index into KineticsSpec profiles
  std::vector<GrowthModel> children; // size 2 for composite families

  bool composite() const {
    return family == GrowthFamily::NonInteractive ||
           family == GrowthFamily::GeometricInteractive;
  }
};

struct TankKinetics {
  std::vector<GrowthModel> reactions; // phi_i components, order fixes T_i order
  Mat kappa;                          // m x r stoichiometric matrix
};

struct KineticsSpec {
  std::vector<TankKinetics> tanks;
  std::vector<Vec> biomass_profiles; // each of length tau (or 1 = constant)
  std::vector<std::string> profile_names;

  Index s() const { return static_cast<Index>(tanks.size()); }
  Index m() const { return tanks.empty() ? 0 : tanks.front().kappa.rows(); }
  Index r() const {
    return tanks.empty() ? 0
                         : static_cast<Index>(tanks.front().reactions.size());
  }

  double profile_value(Index profile, Index step) const;
  void validate(Index tau) const;

  // Block-diagonal K = diag(kappa_1, ..., kappa_s), ms x rs sparse.
  SpMat assemble_K() const;
};

// phi component value of one model at a tank state (length-m vector).
double evaluate_rate(const GrowthModel& model, const KineticsSpec& spec,
                     const Eigen::Ref<const Vec>& tank_state, Index step);

// Gradient of one model with respect to the tank state. flagged marks a
// nondifferentiable point; the subgradient choice is the limit from the
// S-axis direction (Contois at the origin) or the first child (ties).
struct RateGradient {
  Vec grad;
  bool flagged = false;
};
RateGradient rate_gradient(const GrowthModel& model, const KineticsSpec& spec,
                           const Eigen::Ref<const Vec>& tank_state, Index step);

// Full Jacobian of phi at state xi (stacked tank states), rs x ms,
// block-diagonal by tank.
struct JacobianResult {
  SpMat J;
  std::vector<std::pair<Index, Index>> flagged; // (tank, reaction)
};
JacobianResult jacobian(const KineticsSpec& spec, const Vec& state, Index step);

// Abstract sink for cone-row emission, implemented by the program builder
// (and by small test harnesses). Columns are opaque indices.
class RowEmitter {
public:
  virtual ~RowEmitter() = default;
  // New scalar variable in the nonnegative orthant; returns its column.
  virtual Index add_nonneg(const std::string& name) = 0;
  // New second-order cone segment of dimension dim; returns the first column.
  virtual Index add_soc(Index dim, const std::string& name) = 0;
  // New rotated cone segment (2 x0 x1 >= ||tail||^2); returns the first column.
  virtual Index add_rsoc(Index dim, const std::string& name) = 0;
  // Equality row: sum(coeff * col) = rhs. Returns the row index.
  virtual Index add_eq(const std::vector<std::pair<Index, double>>& terms,
                       double rhs, const std::string& name) = 0;
};

// Variable handles for one (tank, reaction, step) instance. state_cols maps
// each of the tank's m state entries to its program column.
struct KineticsHandles {
  std::vector<Index> state_cols;
  Index T = -1;
};

// Emits cone membership rows enforcing T <= phi(state) for the model at the
// given step. Aux variables (SOC triples, composite sub-rates, order slacks)
// are allocated through the emitter. Throws ValidationError for Monod with
// variable biomass.
void emit_soc_rows(const GrowthModel& model, const KineticsSpec& spec,
                   Index step, const KineticsHandles& handles, RowEmitter& em,
                   const std::string& tag);

} // namespace bioconic
