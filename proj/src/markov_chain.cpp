#include "jsqps/markov_chain.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "jsqps/closed_form.hpp"

namespace jsqps {

StateSpace::StateSpace(int servers, int limit)
    : servers_(servers), limit_(limit), count_(1) {
  if (servers < 1) {
    throw ParameterError(fmt::format("R must be >= 1, got {}", servers));
  }
  if (limit < 2) {
    throw ParameterError(fmt::format("L1 must be >= 2, got {}", limit));
  }
  if (servers * std::log(static_cast<double>(limit)) >
      std::log(kMaxChainStates) + 1e-12) {
    throw ResourceError(fmt::format(
        "state space L1^R = {}^{} exceeds the {:.0e}-state bound", limit,
        servers, kMaxChainStates));
  }
  const auto r = static_cast<std::size_t>(servers);
  stride_.assign(r, 1);
  for (std::size_t u = r; u-- > 0;) {
    stride_[u] = count_;
    count_ *= static_cast<std::size_t>(limit);
  }
  occupancy_.resize(count_ * r);
  std::vector<std::uint16_t> current(r, 0);
  for (std::size_t idx = 0; idx < count_; ++idx) {
    std::copy(current.begin(), current.end(), occupancy_.begin() + idx * r);
    // odometer increment, last server fastest
    for (std::size_t u = r; u-- > 0;) {
      if (++current[u] < limit) break;
      current[u] = 0;
    }
  }
}

std::size_t StateSpace::index_of(std::span<const std::uint16_t> state) const {
  if (state.size() != static_cast<std::size_t>(servers_)) {
    throw ParameterError("state length does not match R");
  }
  std::size_t idx = 0;
  for (std::size_t u = 0; u < state.size(); ++u) {
    if (state[u] >= limit_) {
      throw ParameterError(
          fmt::format("occupancy {} is outside the truncation L1={}", state[u],
                      limit_));
    }
    idx += state[u] * stride_[u];
  }
  return idx;
}

StateSpace enumerate_states(int servers, int limit) {
  return StateSpace(servers, limit);
}

TransitionMatrix build_generator(const SystemConfig& config,
                                 const StateSpace& states) {
  if (states.servers() != config.servers()) {
    throw ParameterError("state space and system disagree on R");
  }
  const std::size_t n = states.size();
  const int r = states.servers();
  const auto top = static_cast<std::uint16_t>(states.limit() - 1);
  const double mu = config.service_rate();
  const double lambda = config.arrival_rate();

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(n * static_cast<std::size_t>(2 * r + 1));
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = states[i];
    const auto shortest = *std::min_element(s.begin(), s.end());
    const auto ties = std::count(s.begin(), s.end(), shortest);
    double out = 0.0;
    for (int u = 0; u < r; ++u) {
      if (s[static_cast<std::size_t>(u)] > 0) {
        triplets.emplace_back(i, states.neighbour(i, u, -1), mu);
        out += mu;
      }
    }
    if (shortest < top) {
      const double share = lambda / static_cast<double>(ties);
      for (int u = 0; u < r; ++u) {
        if (s[static_cast<std::size_t>(u)] == shortest) {
          triplets.emplace_back(i, states.neighbour(i, u, +1), share);
          out += share;
        }
      }
    }
    triplets.emplace_back(i, i, -out);
  }
  TransitionMatrix q;
  q.rates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  q.rates.setFromTriplets(triplets.begin(), triplets.end());
  q.rates.makeCompressed();
  return q;
}

namespace {

using RowMajorSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using ColMajorSparse = Eigen::SparseMatrix<double, Eigen::ColMajor>;

// Off-diagonal positive entries must connect every state to state 0 and back.
void require_irreducible(const RowMajorSparse& q) {
  const auto n = static_cast<std::size_t>(q.rows());
  const ColMajorSparse by_column = q;
  auto reaches_all = [n](auto&& for_each_neighbour) {
    std::vector<char> seen(n, 0);
    std::deque<std::size_t> frontier{0};
    seen[0] = 1;
    std::size_t visited = 1;
    while (!frontier.empty()) {
      const std::size_t i = frontier.front();
      frontier.pop_front();
      for_each_neighbour(i, [&](std::size_t j) {
        if (!seen[j]) {
          seen[j] = 1;
          ++visited;
          frontier.push_back(j);
        }
      });
    }
    return visited == n;
  };
  const bool forward = reaches_all([&](std::size_t i, auto&& visit) {
    for (RowMajorSparse::InnerIterator it(q, static_cast<Eigen::Index>(i)); it;
         ++it) {
      if (static_cast<std::size_t>(it.col()) != i && it.value() > 0.0) {
        visit(static_cast<std::size_t>(it.col()));
      }
    }
  });
  const bool backward = reaches_all([&](std::size_t j, auto&& visit) {
    for (ColMajorSparse::InnerIterator it(by_column,
                                          static_cast<Eigen::Index>(j));
         it; ++it) {
      if (static_cast<std::size_t>(it.row()) != j && it.value() > 0.0) {
        visit(static_cast<std::size_t>(it.row()));
      }
    }
  });
  if (!forward || !backward) {
    throw NumericalError(
        "generator is not irreducible (an absorbing or unreachable state makes "
        "pQ = 0, pe = 1 singular)");
  }
}

double balance_residual(const RowMajorSparse& q, const std::vector<double>& p) {
  std::vector<double> flow(p.size(), 0.0);
  for (Eigen::Index i = 0; i < q.outerSize(); ++i) {
    const double pi = p[static_cast<std::size_t>(i)];
    for (RowMajorSparse::InnerIterator it(q, i); it; ++it) {
      flow[static_cast<std::size_t>(it.col())] += pi * it.value();
    }
  }
  double worst = 0.0;
  for (double f : flow) worst = std::max(worst, std::abs(f));
  return worst;
}

void clamp_and_normalise(std::vector<double>& p) {
  double total = 0.0;
  for (double& v : p) {
    if (v < 0.0) {
      if (v < -1e-10) {
        throw NumericalError(fmt::format(
            "steady-state solve produced probability {:.3g} < 0", v));
      }
      v = 0.0;
    }
    total += v;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericalError("steady-state solve produced a non-normalisable vector");
  }
  for (double& v : p) v /= total;
}

std::vector<double> dense_solve(const RowMajorSparse& q) {
  const Eigen::Index n = q.rows();
  Eigen::MatrixXd a = Eigen::MatrixXd(q.transpose());
  a.row(n - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(n - 1) = 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) {
    throw NumericalError(fmt::format(
        "steady-state system is singular or ill-conditioned (rcond={:.3g})",
        rcond));
  }
  const Eigen::VectorXd x = lu.solve(b);
  return {x.data(), x.data() + n};
}

// Pins p_0 = 1 and solves the remaining balance equations
// sum_{i>0} p_i q_ij = -q_0j (j > 0), which are non-singular for an
// irreducible chain.
std::vector<double> iterative_solve(const RowMajorSparse& q) {
  const Eigen::Index n = q.rows();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(q.nonZeros()));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n - 1);
  for (Eigen::Index i = 0; i < q.outerSize(); ++i) {
    for (RowMajorSparse::InnerIterator it(q, i); it; ++it) {
      if (it.col() == 0) continue;
      if (i == 0) {
        b(it.col() - 1) = -it.value();
      } else {
        triplets.emplace_back(it.col() - 1, i - 1, it.value());
      }
    }
  }
  RowMajorSparse a(n - 1, n - 1);
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();

  Eigen::BiCGSTAB<RowMajorSparse, Eigen::IncompleteLUT<double>> solver;
  solver.preconditioner().setDroptol(1e-4);
  solver.preconditioner().setFillfactor(10);
  solver.setTolerance(1e-14);
  solver.setMaxIterations(2000);
  solver.compute(a);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("incomplete LU of the steady-state system failed");
  }
  const Eigen::VectorXd x = solver.solve(b);
  std::vector<double> p(static_cast<std::size_t>(n), 1.0);
  if (!x.allFinite()) {
    spdlog::debug("BiCGSTAB diverged on the steady-state system; falling back to "
                 "Gauss-Seidel from the uniform vector");
    return p;
  }
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    // Small negative entries are left for the Gauss-Seidel polish to fix.
    p[static_cast<std::size_t>(k + 1)] = std::max(x(k), 0.0);
  }
  return p;
}

// p_j <- sum_{i != j} p_i q_ij / -q_jj, sweeping j in order.
void gauss_seidel(const RowMajorSparse& q, std::vector<double>& p,
                  int max_sweeps) {
  const ColMajorSparse by_column = q;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (Eigen::Index j = 0; j < by_column.outerSize(); ++j) {
      double inflow = 0.0;
      double diagonal = 0.0;
      for (ColMajorSparse::InnerIterator it(by_column, j); it; ++it) {
        if (it.row() == j) {
          diagonal = it.value();
        } else {
          inflow += p[static_cast<std::size_t>(it.row())] * it.value();
        }
      }
      p[static_cast<std::size_t>(j)] = inflow / -diagonal;
    }
    clamp_and_normalise(p);
    if ((sweep + 1) % 50 == 0 &&
        balance_residual(q, p) <= 0.01 * kSteadyStateResidual) {
      return;
    }
  }
}

}  // namespace

SteadyStateVector solve_steady_state(const TransitionMatrix& q) {
  const std::size_t n = q.dimension();
  if (n == 0) throw ParameterError("empty generator");
  SteadyStateVector out;
  if (n == 1) {
    out.probabilities = {1.0};
    return out;
  }
  require_irreducible(q.rates);

  out.probabilities =
      n <= kDenseSolveLimit ? dense_solve(q.rates) : iterative_solve(q.rates);
  clamp_and_normalise(out.probabilities);
  out.residual = balance_residual(q.rates, out.probabilities);
  if (out.residual > kSteadyStateResidual) {
    spdlog::debug("direct solve residual {:.3g}; polishing with Gauss-Seidel",
                  out.residual);
    gauss_seidel(q.rates, out.probabilities, 20000);
    out.residual = balance_residual(q.rates, out.probabilities);
  }
  if (!(out.residual <= kSteadyStateResidual)) {
    throw NumericalError(fmt::format(
        "steady-state residual {:.3g} exceeds {:.0e}", out.residual,
        kSteadyStateResidual));
  }
  return out;
}

std::vector<double> arrival_fractions(const SteadyStateVector& p,
                                      const StateSpace& states) {
  const auto limit = static_cast<std::size_t>(states.limit());
  std::vector<double> numerator(limit, 0.0);
  std::vector<double> denominator(limit, 0.0);
  for (std::size_t j = 0; j < states.size(); ++j) {
    const auto s = states[j];
    const auto first = s[0];
    denominator[first] += p[j];
    const auto shortest = *std::min_element(s.begin(), s.end());
    if (shortest == first) {
      numerator[first] +=
          p[j] / static_cast<double>(std::count(s.begin(), s.end(), first));
    }
  }
  std::vector<double> fractions(limit, 0.0);
  std::vector<std::size_t> degenerate;
  for (std::size_t n = 0; n < limit; ++n) {
    if (denominator[n] < 1e-14) {
      degenerate.push_back(n);
      continue;
    }
    fractions[n] = numerator[n] / denominator[n];
  }
  if (!degenerate.empty()) {
    spdlog::warn("pi_n set to 0 for n in {{{}}}: a server holds n customers with "
                 "probability below 1e-14",
                 fmt::join(degenerate, ","));
  }
  return fractions;
}

ChainSolution solve_jsq_chain(const SystemConfig& config, int chain_limit) {
  config.require_stable();
  StateSpace states = enumerate_states(config.servers(), chain_limit);
  const TransitionMatrix q = build_generator(config, states);
  SteadyStateVector p = solve_steady_state(q);
  return {std::move(states), std::move(p)};
}

ArrivalRateProfile lambda_n_mc(const SystemConfig& config,
                               const ChainSolution& chain, int system_limit) {
  const auto fractions = arrival_fractions(chain.steady_state, chain.states);
  ArrivalRateProfile profile;
  profile.source = ProfileSource::MarkovChain;
  profile.rates.resize(static_cast<std::size_t>(system_limit));
  for (std::size_t n = 0; n < profile.rates.size(); ++n) {
    profile.rates[n] = n < fractions.size()
                           ? fractions[n] * config.arrival_rate()
                           : tail_arrival_rate(config, static_cast<int>(n));
  }
  return profile;
}

ArrivalRateProfile lambda_n_mc(const SystemConfig& config,
                               const Hyperparameters& hyper) {
  hyper.validate();
  return lambda_n_mc(config, solve_jsq_chain(config, hyper.chain_limit),
                     hyper.system_limit);
}

JoinProbabilities join_probabilities_mc(const SteadyStateVector& p,
                                        const StateSpace& states,
                                        int system_limit) {
  JoinProbabilities out;
  out.source = JoinSource::MarkovChain;
  out.probs.assign(
      std::max<std::size_t>(static_cast<std::size_t>(system_limit),
                            static_cast<std::size_t>(states.limit())),
      0.0);
  for (std::size_t j = 0; j < states.size(); ++j) {
    const auto s = states[j];
    out.probs[*std::min_element(s.begin(), s.end())] += p[j];
  }
  return out;
}

double truncation_mass(const SteadyStateVector& p, const StateSpace& states) {
  const auto top = static_cast<std::uint16_t>(states.limit() - 1);
  double mass = 0.0;
  for (std::size_t j = 0; j < states.size(); ++j) {
    const auto s = states[j];
    if (*std::max_element(s.begin(), s.end()) == top) mass += p[j];
  }
  return mass;
}

}  // namespace jsqps
