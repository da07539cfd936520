#pragma once
// Conditional critical values for full-path test statistics.
//
// Under the null, in the Gaussian limit experiment, the moment process splits
// as g(theta) = h(theta) + V(theta) g(theta_0) where V(theta) =
// Cov(g(theta), g(theta_0)) Var(g(theta_0))^{-1} and the residual process h is
// independent of g(theta_0). Holding the observed h fixed and redrawing
// g*(theta_0) ~ N(0, Var(g(theta_0))) therefore simulates the exact null
// conditional distribution of any statistic R(g(theta_0), h, Sigma), and the
// (1-alpha) quantile of those draws is a valid critical value regardless of
// identification strength.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "condinf/covariance.hpp"
#include "condinf/grid.hpp"
#include "condinf/linalg.hpp"
#include "condinf/parallel.hpp"
#include "condinf/rng.hpp"
#include "condinf/types.hpp"

namespace condinf {

// Projects g(theta_0) out of the moment process. The row at the null is set to
// zero identically; V at the null is the computed (near-identity) coefficient.
inline HProcess compute_h(const MomentProcess& g, const CovarianceField& field) {
  if (g.grid->size() != field.size() || g.k() != field.k())
    throw std::invalid_argument("compute_h: process and field shapes differ");
  const int n0 = g.grid->null_index();
  const int gsz = g.grid->size();
  const int k = g.k();

  SpdFactor f00(field.null_block());
  const Eigen::VectorXd g0 = g.at(n0);

  HProcess h;
  h.grid = g.grid;
  h.values.resize(gsz, k);
  h.v.resize(gsz);
  h.degraded = f00.degraded();
  for (int i = 0; i < gsz; ++i) {
    // V_i = block(i, n0) * block(n0, n0)^{-1}, via the shared factorization.
    h.v[i] = f00.solve(field.block(n0, i)).transpose();
    if (i == n0) {
      h.values.row(i).setZero();
    } else {
      h.values.row(i) = (g.at(i) - h.v[i] * g0).transpose();
    }
  }
  return h;
}

// Reconstructs a process from the conditioned pieces: g*(theta_i) = h_i + V_i xi.
inline MomentProcess simulate_g_star(const HProcess& h, const CovarianceField& field,
                                     const Eigen::VectorXd& xi) {
  if (h.grid->size() != field.size() || h.k() != field.k())
    throw std::invalid_argument("simulate_g_star: process and field shapes differ");
  if (xi.size() != h.k()) throw std::invalid_argument("simulate_g_star: xi has wrong length");
  Eigen::MatrixXd values(h.grid->size(), h.k());
  for (int i = 0; i < h.grid->size(); ++i)
    values.row(i) = (h.at(i) + h.v[i] * xi).transpose();
  return MomentProcess(h.grid, std::move(values), 0);
}

// One draw xi ~ N(0, Var(g(theta_0))) through the symmetric matrix root.
inline Eigen::VectorXd draw_xi(const CovarianceField& field, NormalSampler& rng) {
  const Eigen::MatrixXd root = psd_sqrt(field.null_block());
  Eigen::VectorXd z(field.k());
  for (int i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return root * z;
}

// A full-path test statistic evaluated on the conditioned decomposition:
// value = R(xi, h, field) with xi playing the role of g(theta_0).
class StatisticFunctional {
 public:
  virtual ~StatisticFunctional() = default;
  virtual std::string name() const = 0;
  virtual double operator()(const Eigen::VectorXd& xi, const HProcess& h,
                            const CovarianceField& field) const = 0;

  // Per-draw evaluator with (h, field) fixed; may carry precomputed state.
  // The returned callable is not required to be thread-safe: use one instance
  // per worker. h and field must outlive it.
  virtual std::function<double(const Eigen::VectorXd&)> prepared(
      const HProcess& h, const CovarianceField& field) const {
    return [this, &h, &field](const Eigen::VectorXd& xi) { return (*this)(xi, h, field); };
  }
};

struct CriticalValueResult {
  double value = 0.0;           // order statistic at rank ceil((1-alpha) B)
  int rank = 0;                 // 1-based rank used
  std::vector<double> draws;    // simulated statistic values, draw order
};

namespace detail {

// Shared core: simulate the n_draws conditional statistic values with
// per-draw counter-derived substreams.
inline std::vector<double> simulate_stat_draws(const StatisticFunctional& stat,
                                               const HProcess& h, const CovarianceField& field,
                                               int n_draws, const RngStream& rng) {
  const Eigen::MatrixXd root = psd_sqrt(field.null_block());
  const int k = field.k();
  auto eval = stat.prepared(h, field);
  std::vector<double> draws(static_cast<std::size_t>(n_draws));
  Eigen::VectorXd z(k), xi(k);
  for (int b = 0; b < n_draws; ++b) {
    NormalSampler ns(rng, static_cast<std::uint64_t>(b));
    for (int i = 0; i < k; ++i) z(i) = ns.normal();
    xi.noalias() = root * z;
    draws[static_cast<std::size_t>(b)] = eval(xi);
  }
  return draws;
}

inline double order_statistic(std::vector<double> v, int rank_1based) {
  std::nth_element(v.begin(), v.begin() + (rank_1based - 1), v.end());
  return v[static_cast<std::size_t>(rank_1based - 1)];
}

}  // namespace detail

// The conditional (1-alpha) critical value of `stat` given the observed h.
inline CriticalValueResult conditional_critical_value(const StatisticFunctional& stat,
                                                      const HProcess& h,
                                                      const CovarianceField& field, double alpha,
                                                      int n_draws, const RngStream& rng) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("conditional_critical_value: alpha outside (0,1)");
  if (n_draws < static_cast<int>(std::ceil(1.0 / alpha)))
    throw std::invalid_argument("conditional_critical_value: too few draws for requested alpha");
  CriticalValueResult r;
  r.draws = detail::simulate_stat_draws(stat, h, field, n_draws, rng);
  r.rank = static_cast<int>(std::ceil((1.0 - alpha) * n_draws));
  r.rank = std::min(std::max(r.rank, 1), n_draws);
  r.value = detail::order_statistic(r.draws, r.rank);
  return r;
}

// Full conditional test of the hypothesized value marked in g's grid.
// Rejects when the observed statistic exceeds the conditional critical value
// by more than `epsilon` (a deliberate conservative inflation; default none).
inline TestResult conditional_test(const MomentProcess& g, const CovarianceField& field,
                                   const StatisticFunctional& stat, double alpha, int n_draws,
                                   const RngStream& rng, double epsilon = 0.0) {
  if (epsilon < 0.0) throw std::invalid_argument("conditional_test: epsilon must be >= 0");
  const HProcess h = compute_h(g, field);
  auto eval = stat.prepared(h, field);
  const double observed = eval(g.at_null());

  CriticalValueResult cv = conditional_critical_value(stat, h, field, alpha, n_draws, rng);
  long n_ge = 0;
  for (double d : cv.draws) n_ge += (d >= observed);

  TestResult t;
  t.statistic_name = stat.name();
  t.statistic = observed;
  t.critical_value = cv.value;
  t.p_value = static_cast<double>(1 + n_ge) / static_cast<double>(n_draws + 1);
  t.reject = observed > cv.value + epsilon;
  t.alpha = alpha;
  t.n_draws = n_draws;
  t.degraded = h.degraded;
  return t;
}

// Supplies the testing problem for candidate null i: a moment process whose
// grid marks point i as the null, and the covariance field to use. Fields can
// be shared across candidates through the shared_ptr.
using NullProblemSupplier =
    std::function<std::pair<MomentProcess, std::shared_ptr<const CovarianceField>>(int)>;

// Test inversion over a grid of candidate nulls. With common_randomness the
// same underlying normal substreams drive the critical-value draws at every
// candidate, which makes the confidence set boundary deterministic and
// smooth in the candidate index. Per-point numerical failures mark the point
// as failed (and excluded) instead of aborting the scan.
inline ConfidenceSet invert_test(const ParamGrid& candidates, const NullProblemSupplier& supply,
                                 const StatisticFunctional& stat, double alpha, int n_draws,
                                 const RngStream& rng, const ThreadPool& pool = ThreadPool(1),
                                 bool common_randomness = true, double epsilon = 0.0) {
  ConfidenceSet cs;
  cs.grid = std::make_shared<const ParamGrid>(candidates);
  cs.level = 1.0 - alpha;
  cs.accepted.assign(static_cast<std::size_t>(candidates.size()), 0);
  cs.failed.assign(static_cast<std::size_t>(candidates.size()), 0);

  pool.parallel_for(static_cast<std::size_t>(candidates.size()), [&](std::size_t i) {
    const RngStream draw_stream =
        common_randomness ? rng : rng.child(static_cast<std::uint64_t>(i));
    try {
      auto [g, field] = supply(static_cast<int>(i));
      if (!field) throw std::invalid_argument("invert_test: supplier returned null field");
      TestResult t = conditional_test(g, *field, stat, alpha, n_draws, draw_stream, epsilon);
      cs.accepted[i] = !t.reject;
    } catch (const std::exception&) {
      cs.failed[i] = 1;
      cs.accepted[i] = 0;
    }
  });
  return cs;
}

}  // namespace condinf
