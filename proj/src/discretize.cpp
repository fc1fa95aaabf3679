#include "bioconic/discretize.hpp"

#include <fmt/format.h>

#include "bioconic/kinetics.hpp"
#include "bioconic/network.hpp"

namespace bioconic {

namespace {

// Shared assembly for the transient and steady balances. The transient terms
// enter through a_now/a_prev; the steady variant passes both as zero.
std::vector<Index> emit_balance_rows(const TankNetwork& net,
                                     const NetworkMatrices& mats, const Mat& K,
                                     double a_now, double a_prev,
                                     const DynamicsHandles& handles,
                                     RowEmitter& em, const std::string& tag) {
  const Index s = net.n_tanks;
  const Index ms = static_cast<Index>(handles.state_now.size());
  if (ms == 0 || ms % s != 0)
    throw ValidationError(fmt::format("{}: state handle count {} is not a multiple of {} tanks", tag, ms, s));
  const Index m = ms / s;
  const Index rs = static_cast<Index>(handles.rate.size());
  if (K.rows() != ms || K.cols() != rs)
    throw ValidationError(fmt::format("{}: K is {}x{}, expected {}x{}", tag, K.rows(), K.cols(), ms, rs));
  if (static_cast<Index>(handles.influent.size()) != ms)
    throw ValidationError(fmt::format("{}: influent handle count {} != {}", tag, handles.influent.size(), ms));

  const bool transient = a_now != 0.0 || a_prev != 0.0;
  const bool prev_fixed = handles.state_prev.empty();
  if (transient && prev_fixed &&
      (handles.xi_prev_fixed == nullptr || handles.xi_prev_fixed->size() != ms))
    throw ValidationError(fmt::format("{}: missing fixed previous state", tag));

  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(ms));
  std::vector<std::pair<Index, double>> terms;
  for (Index i = 0; i < s; ++i) {
    const double vol = net.volumes(i);
    for (Index e = 0; e < m; ++e) {
      const Index k = i * m + e;
      terms.clear();
      double rhs = 0.0;

      // a_now*Vhat*xi(n) - Nhat*xi(n): couplings stay within entry e.
      for (Index j = 0; j < s; ++j) {
        double coeff = -mats.N(i, j);
        if (j == i) coeff += a_now * vol;
        if (coeff != 0.0) terms.emplace_back(handles.state_now[static_cast<std::size_t>(j * m + e)], coeff);
      }

      if (transient) {
        const double cprev = a_prev * vol;
        if (prev_fixed)
          rhs -= cprev * (*handles.xi_prev_fixed)(k);
        else
          terms.emplace_back(handles.state_prev[static_cast<std::size_t>(k)], cprev);
      }

      // -Vhat*K*T(n)
      for (Index q = 0; q < rs; ++q) {
        const double kq = K(k, q);
        if (kq != 0.0) terms.emplace_back(handles.rate[static_cast<std::size_t>(q)], -vol * kq);
      }

      // -Chat*xi_in(n): diagonal, entry k only.
      const double cin = mats.C(i);
      if (cin != 0.0) {
        const Index col = handles.influent[static_cast<std::size_t>(k)];
        if (col >= 0) {
          terms.emplace_back(col, -cin);
        } else {
          if (handles.influent_fixed == nullptr || handles.influent_fixed->size() != ms)
            throw ValidationError(fmt::format("{}: entry {} needs fixed influent data", tag, k));
          rhs += cin * (*handles.influent_fixed)(k);
        }
      }

      rows.push_back(em.add_eq(terms, rhs, fmt::format("{}:bal[{},{}]", tag, i, e)));
    }
  }
  return rows;
}

} // namespace

std::vector<Index> emit_dynamics_rows(const TankNetwork& net,
                                      const NetworkMatrices& mats,
                                      const Mat& K, const TimeStepper& stepper,
                                      double delta,
                                      const DynamicsHandles& handles,
                                      RowEmitter& em, const std::string& tag) {
  const auto [a_now, a_prev] = stepper.difference_coeffs(delta);
  return emit_balance_rows(net, mats, K, a_now, a_prev, handles, em, tag);
}

std::vector<Index> emit_steady_rows(const TankNetwork& net,
                                    const NetworkMatrices& mats, const Mat& K,
                                    const DynamicsHandles& handles,
                                    RowEmitter& em, const std::string& tag) {
  return emit_balance_rows(net, mats, K, 0.0, 0.0, handles, em, tag);
}

} // namespace bioconic
