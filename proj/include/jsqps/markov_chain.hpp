#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "jsqps/core.hpp"

namespace jsqps {

inline constexpr double kMaxChainStates = 1e7;

/// All occupancy vectors (a_1, ..., a_R) with every a_u < L1, in
/// lexicographic order with a_1 most significant.
class StateSpace {
 public:
  StateSpace(int servers, int limit);

  int servers() const noexcept { return servers_; }
  int limit() const noexcept { return limit_; }
  std::size_t size() const noexcept { return count_; }

  /// Occupancy of state `index`.
  std::span<const std::uint16_t> operator[](std::size_t index) const {
    return {occupancy_.data() + index * static_cast<std::size_t>(servers_),
            static_cast<std::size_t>(servers_)};
  }

  /// Inverse of operator[], O(R).
  std::size_t index_of(std::span<const std::uint16_t> state) const;

  /// Index of the state reached by adding `delta` (+1 or -1) customers to
  /// server `server` of state `index`.
  std::size_t neighbour(std::size_t index, int server, int delta) const {
    return delta > 0 ? index + stride_[static_cast<std::size_t>(server)]
                     : index - stride_[static_cast<std::size_t>(server)];
  }

 private:
  int servers_;
  int limit_;
  std::size_t count_;
  std::vector<std::size_t> stride_;
  std::vector<std::uint16_t> occupancy_;
};

/// Throws ResourceError when L1^R exceeds kMaxChainStates.
StateSpace enumerate_states(int servers, int limit);

/// Infinitesimal generator Q of the truncated JSQ chain. Row i holds the
/// rates out of state i; the diagonal is the negative row sum.
struct TransitionMatrix {
  Eigen::SparseMatrix<double, Eigen::RowMajor> rates;

  std::size_t dimension() const noexcept {
    return static_cast<std::size_t>(rates.rows());
  }
  double operator()(std::size_t from, std::size_t to) const {
    return rates.coeff(static_cast<Eigen::Index>(from),
                       static_cast<Eigen::Index>(to));
  }
};

TransitionMatrix build_generator(const SystemConfig& config,
                                 const StateSpace& states);

struct SteadyStateVector {
  std::vector<double> probabilities;
  double residual = 0.0;  // max_j |(pQ)_j|

  std::size_t size() const noexcept { return probabilities.size(); }
  double operator[](std::size_t j) const { return probabilities[j]; }
};

inline constexpr std::size_t kDenseSolveLimit = 5000;
inline constexpr double kSteadyStateResidual = 1e-8;

/// Solves pQ = 0, pe = 1. Dense LU up to kDenseSolveLimit states, sparse LU
/// polished by Gauss-Seidel sweeps above. Throws NumericalError if the chain
/// is reducible or the system is singular.
SteadyStateVector solve_steady_state(const TransitionMatrix& q);

/// pi_0 .. pi_{L1-1}: share of arrivals a server receives while holding n.
std::vector<double> arrival_fractions(const SteadyStateVector& p,
                                      const StateSpace& states);

/// Solved truncated chain of one system, shared by the CTMC-based
/// lambda_n and A_n approximations.
struct ChainSolution {
  StateSpace states;
  SteadyStateVector steady_state;
};

ChainSolution solve_jsq_chain(const SystemConfig& config, int chain_limit);

/// lambda_n = pi_n Lambda for n < L1, spliced onto mu (Lambda/(n mu))^n for
/// L1 <= n < L2.
ArrivalRateProfile lambda_n_mc(const SystemConfig& config,
                               const ChainSolution& chain, int system_limit);
ArrivalRateProfile lambda_n_mc(const SystemConfig& config,
                               const Hyperparameters& hyper);

/// A_n = P(min occupancy = n), zero-padded to `system_limit` entries.
JoinProbabilities join_probabilities_mc(const SteadyStateVector& p,
                                        const StateSpace& states,
                                        int system_limit);

/// Mass on states where some server sits at the truncation boundary L1-1.
double truncation_mass(const SteadyStateVector& p, const StateSpace& states);

}  // namespace jsqps
