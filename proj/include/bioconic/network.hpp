#pragma once

#include "bioconic/types.hpp"

namespace bioconic {

// Reactor network: tank volumes, inter-tank flows Q_ij, diffusion d_ij,
// inlet rates Q_i^in and outlet rates Q_i^out. All rates in the canonical
// per-day unit system (m^3/day).
struct TankNetwork {
  Index n_tanks = 0;
  Vec volumes;       // diagonal of V, m^3, strictly positive
  Vec inflow_rates;  // Q_i^in, diagonal of C
  Vec outflow_rates; // Q_i^out
  Mat flows;         // Q_ij, flow tank i -> tank j, zero diagonal
  Mat diffusion;     // d_ij, symmetric, zero diagonal

  // Throws ValidationError naming the offending entry.
  void validate() const;
};

struct NetworkMatrices {
  Mat M; // compartmental flow matrix
  Mat L; // diffusion Laplacian (negative semidefinite sign convention)
  Mat N; // M + L
  Vec C; // diagonal of the inlet matrix
};

NetworkMatrices build_matrices(const TankNetwork& net);

// True iff every tank has a directed flow path (Q edges only) to a tank with
// positive outflow.
bool is_outflow_connected(const TankNetwork& net);

// A (x) I_m as a sparse matrix.
SpMat kron_lift(const Mat& A, Index m);
SpMat kron_lift_diag(const Vec& d, Index m);

// Per-step network snapshots. One snapshot means a constant network; a
// time-varying schedule stores one snapshot per step 1..tau.
struct NetworkSchedule {
  std::vector<TankNetwork> snapshots;

  bool constant() const { return snapshots.size() == 1; }
  const TankNetwork& at(Index step) const {
    return constant() ? snapshots.front()
                      : snapshots.at(static_cast<std::size_t>(step - 1));
  }
  void validate(Index tau) const;
};

} // namespace bioconic
