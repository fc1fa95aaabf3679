#pragma once

#include "bioconic/types.hpp"

namespace bioconic {

// Uniform time grid: steps n = 1..tau of width delta (days).
struct TimeGrid {
  Index tau = 0;
  double delta = 0.0;

  void validate() const {
    if (tau < 1) throw ValidationError("grid: tau must be >= 1");
    if (!(delta > 0.0)) throw ValidationError("grid: delta must be positive");
  }
};

enum class Boundary { FixedInitial, Periodic };

// Finite-difference scheme hook. Implicit Euler is the only implementation;
// the interface exists so a Runge-Kutta variant could slot in.
class TimeStepper {
public:
  virtual ~TimeStepper() = default;
  virtual const char* name() const = 0;
  // Coefficients (a_now, a_prev) of D_n[xi] = a_now*xi(n) + a_prev*xi(n-1).
  virtual std::pair<double, double> difference_coeffs(double delta) const = 0;
};

class ImplicitEuler final : public TimeStepper {
public:
  const char* name() const override { return "implicit-euler"; }
  std::pair<double, double> difference_coeffs(double delta) const override {
    return {1.0 / delta, -1.0 / delta};
  }
};

class RowEmitter;
struct NetworkMatrices;
struct TankNetwork;

// Column handles for the mass balance of one time step.
struct DynamicsHandles {
  // xi(n): one column per stacked state entry (tank-major, length m*s).
  std::vector<Index> state_now;
  // xi(n-1): empty for the first step under FixedInitial (xi0 goes to rhs).
  std::vector<Index> state_prev;
  // T(n): one column per stacked reaction (length r*s).
  std::vector<Index> rate;
  // xi^in(n): column per entry, -1 where the influent is fixed data.
  std::vector<Index> influent;
  // Fixed influent values (used where influent[k] < 0); length m*s or empty.
  const Vec* influent_fixed = nullptr;
  // Fixed xi(0) (FixedInitial first step only); length m*s.
  const Vec* xi_prev_fixed = nullptr;
};

// Emits the m*s mass-balance equality rows for step n:
//   Vhat*D_n[xi] = Vhat*K*phi + Nhat(n)*xi(n) + Chat(n)*xi_in(n)
// written (with D_n from `stepper`) as
//   a_now*Vhat*xi(n) + a_prev*Vhat*xi(n-1) - Vhat*K*T(n) - Nhat(n)*xi(n)
//     - Chat(n)*xi_in(n) = 0,
// with fixed influents and a fixed xi(n-1) moved to the right-hand side.
// Returns the emitted row indices in stacked-entry order.
std::vector<Index> emit_dynamics_rows(const TankNetwork& net,
                                      const NetworkMatrices& mats,
                                      const Mat& K, const TimeStepper& stepper,
                                      double delta,
                                      const DynamicsHandles& handles,
                                      RowEmitter& em, const std::string& tag);

// Steady-state variant: 0 = Vhat*K*T + Nhat*xi + Chat*xi_in, emitted as
//   -Vhat*K*T - Nhat*xi - Chat*xi_in = 0 (fixed influents to the rhs).
std::vector<Index> emit_steady_rows(const TankNetwork& net,
                                    const NetworkMatrices& mats, const Mat& K,
                                    const DynamicsHandles& handles,
                                    RowEmitter& em, const std::string& tag);

} // namespace bioconic
