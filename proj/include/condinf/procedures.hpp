#pragma once
// Uniform dispatch from a statistic name to a full testing procedure.
// "qlr", "s", "k" and "qlr-weighted" are tested against simulated conditional
// critical values; "jk" is the two-part score rule with chi-square cuts and a
// configurable level split.

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "condinf/condcrit.hpp"
#include "condinf/stats.hpp"

namespace condinf {

struct TestSpec {
  std::string stat = "qlr";
  double alpha = 0.05;
  int n_draws = 1000;
  double epsilon = 0.0;       // conservative inflation added to critical values
  double jk_k_share = 0.8;    // share of alpha spent on the K part of "jk"
  const WeightField* weights = nullptr;  // for "qlr-weighted"

  double jk_alpha_k() const { return alpha * jk_k_share; }
  double jk_alpha_j() const { return alpha * (1.0 - jk_k_share); }
};

inline std::unique_ptr<StatisticFunctional> make_statistic(const TestSpec& spec) {
  if (spec.stat == "qlr-weighted") {
    if (!spec.weights)
      throw std::invalid_argument("qlr-weighted: no weight field configured");
    return std::make_unique<WeightedQlrStatistic>(*spec.weights);
  }
  return make_statistic(spec.stat);
}

// Identity weights: the unweighted minimum-distance objective, the default
// weight field for "qlr-weighted" when none is supplied.
inline WeightField identity_weights(const GridPtr& grid, int k) {
  WeightField w;
  w.grid = grid;
  w.w.assign(static_cast<std::size_t>(grid->size()), Eigen::MatrixXd::Identity(k, k));
  return w;
}

// One point test of the null marked in g's grid.
inline TestResult run_point_test(const MomentProcess& g, const CovarianceField& field,
                                 const TestSpec& spec, const RngStream& rng) {
  if (!(spec.alpha > 0.0 && spec.alpha < 1.0))
    throw std::invalid_argument("run_point_test: alpha outside (0,1)");
  if (spec.stat == "jk") {
    const HProcess h = compute_h(g, field);
    const ScoreMatrix score = score_matrix(h, Stencil::detect(*g.grid));
    const JkOutcome out =
        jk_test(g.at_null(), h, field, score, spec.jk_alpha_k(), spec.jk_alpha_j());
    TestResult t;
    t.statistic_name = "jk";
    t.statistic = out.k_value;
    t.critical_value = out.k_crit;
    t.p_value = out.p_value;
    t.reject = out.reject;
    t.alpha = spec.alpha;
    t.n_draws = 0;
    t.degraded = h.degraded || out.fallback;
    return t;
  }
  auto stat = make_statistic(spec);
  return conditional_test(g, field, *stat, spec.alpha, spec.n_draws, rng, spec.epsilon);
}

// Test inversion with the same dispatch; the supplier provides the per-null
// problem exactly as in invert_test.
inline ConfidenceSet invert_point_test(const ParamGrid& candidates,
                                       const NullProblemSupplier& supply, const TestSpec& spec,
                                       const RngStream& rng,
                                       const ThreadPool& pool = ThreadPool(1),
                                       bool common_randomness = true) {
  if (spec.stat != "jk") {
    auto stat = make_statistic(spec);
    return invert_test(candidates, supply, *stat, spec.alpha, spec.n_draws, rng, pool,
                       common_randomness, spec.epsilon);
  }
  ConfidenceSet cs;
  cs.grid = std::make_shared<const ParamGrid>(candidates);
  cs.level = 1.0 - spec.alpha;
  cs.accepted.assign(static_cast<std::size_t>(candidates.size()), 0);
  cs.failed.assign(static_cast<std::size_t>(candidates.size()), 0);
  pool.parallel_for(static_cast<std::size_t>(candidates.size()), [&](std::size_t i) {
    try {
      auto [g, field] = supply(static_cast<int>(i));
      if (!field) throw std::invalid_argument("invert_point_test: supplier returned null field");
      TestResult t = run_point_test(g, *field, spec, rng);
      cs.accepted[i] = !t.reject;
    } catch (const std::exception&) {
      cs.failed[i] = 1;
    }
  });
  return cs;
}

}  // namespace condinf
