#include "bioconic/network.hpp"

#include <fmt/format.h>

namespace bioconic {

void TankNetwork::validate() const {
  if (n_tanks <= 0)
    throw ValidationError("network: n_tanks must be positive");
  const Index s = n_tanks;
  auto check_len = [&](const Vec& v, const char* name) {
    if (v.size() != s)
      throw ValidationError(
          fmt::format("network: {} has length {}, expected {}", name, v.size(), s));
  };
  check_len(volumes, "volumes");
  check_len(inflow_rates, "inflow_rates");
  check_len(outflow_rates, "outflow_rates");
  if (flows.rows() != s || flows.cols() != s)
    throw ValidationError(fmt::format("network: flows is {}x{}, expected {}x{}",
                                      flows.rows(), flows.cols(), s, s));
  if (diffusion.rows() != s || diffusion.cols() != s)
    throw ValidationError(
        fmt::format("network: diffusion is {}x{}, expected {}x{}",
                    diffusion.rows(), diffusion.cols(), s, s));
  for (Index i = 0; i < s; ++i) {
    if (!(volumes(i) > 0.0))
      throw ValidationError(
          fmt::format("network: volume of tank {} must be positive, got {}", i,
                      volumes(i)));
    if (inflow_rates(i) < 0.0)
      throw ValidationError(
          fmt::format("network: inflow rate of tank {} is negative", i));
    if (outflow_rates(i) < 0.0)
      throw ValidationError(
          fmt::format("network: outflow rate of tank {} is negative", i));
  }
  for (Index i = 0; i < s; ++i) {
    for (Index j = 0; j < s; ++j) {
      if (flows(i, j) < 0.0)
        throw ValidationError(
            fmt::format("network: flow ({},{}) is negative", i, j));
      if (diffusion(i, j) < 0.0)
        throw ValidationError(
            fmt::format("network: diffusion ({},{}) is negative", i, j));
      if (diffusion(i, j) != diffusion(j, i))
        throw ValidationError(fmt::format(
            "network: diffusion is asymmetric at ({},{}): {} vs {}", i, j,
            diffusion(i, j), diffusion(j, i)));
    }
    if (flows(i, i) != 0.0)
      throw ValidationError(
          fmt::format("network: flows diagonal ({},{}) must be zero", i, i));
    if (diffusion(i, i) != 0.0)
      throw ValidationError(
          fmt::format("network: diffusion diagonal ({},{}) must be zero", i, i));
  }
}

NetworkMatrices build_matrices(const TankNetwork& net) {
  net.validate();
  const Index s = net.n_tanks;
  NetworkMatrices out;
  out.M = Mat::Zero(s, s);
  out.L = Mat::Zero(s, s);
  for (Index i = 0; i < s; ++i) {
    for (Index j = 0; j < s; ++j) {
      if (i == j) continue;
      out.M(i, j) = net.flows(j, i);
      out.L(i, j) = net.diffusion(i, j);
    }
    out.M(i, i) = -net.outflow_rates(i) - net.flows.row(i).sum();
    out.L(i, i) = -net.diffusion.row(i).sum();
  }
  out.N = out.M + out.L;
  out.C = net.inflow_rates;
  return out;
}

bool is_outflow_connected(const TankNetwork& net) {
  const Index s = net.n_tanks;
  std::vector<bool> reaches(static_cast<std::size_t>(s), false);
  for (Index i = 0; i < s; ++i)
    if (net.outflow_rates(i) > 0.0) reaches[static_cast<std::size_t>(i)] = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (Index i = 0; i < s; ++i) {
      if (reaches[static_cast<std::size_t>(i)]) continue;
      for (Index j = 0; j < s; ++j) {
        if (net.flows(i, j) > 0.0 && reaches[static_cast<std::size_t>(j)]) {
          reaches[static_cast<std::size_t>(i)] = true;
          changed = true;
          break;
        }
      }
    }
  }
  for (bool r : reaches)
    if (!r) return false;
  return true;
}

SpMat kron_lift(const Mat& A, Index m) {
  const Index s = A.rows();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(A.size()) * static_cast<std::size_t>(m));
  for (Index i = 0; i < s; ++i)
    for (Index j = 0; j < A.cols(); ++j)
      if (A(i, j) != 0.0)
        for (Index e = 0; e < m; ++e)
          trip.emplace_back(i * m + e, j * m + e, A(i, j));
  SpMat out(s * m, A.cols() * m);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

SpMat kron_lift_diag(const Vec& d, Index m) {
  const Index s = d.size();
  SpMat out(s * m, s * m);
  out.reserve(Eigen::VectorXi::Constant(s * m, 1));
  for (Index i = 0; i < s; ++i)
    for (Index e = 0; e < m; ++e) out.insert(i * m + e, i * m + e) = d(i);
  out.makeCompressed();
  return out;
}

void NetworkSchedule::validate(Index tau) const {
  if (snapshots.empty())
    throw ValidationError("network schedule: no snapshots");
  if (snapshots.size() != 1 &&
      snapshots.size() != static_cast<std::size_t>(tau))
    throw ValidationError(
        fmt::format("network schedule: {} snapshots, expected 1 or tau={}",
                    snapshots.size(), tau));
  const Index s = snapshots.front().n_tanks;
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    snapshots[k].validate();
    if (snapshots[k].n_tanks != s)
      throw ValidationError(fmt::format(
          "network schedule: snapshot {} has {} tanks, expected {}", k,
          snapshots[k].n_tanks, s));
    if (snapshots[k].volumes != snapshots.front().volumes)
      throw ValidationError(fmt::format(
          "network schedule: snapshot {} changes tank volumes (unsupported)",
          k));
  }
}

} // namespace bioconic
