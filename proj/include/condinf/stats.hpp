#pragma once
// Test statistics evaluated on the conditioned decomposition (xi, h, field):
// the quasi-likelihood-ratio statistic and its weighted variant, the AR-type
// S statistic, and the score-based K and J-K statistics built from a
// finite-difference derivative of the h-process at the null.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "condinf/condcrit.hpp"
#include "condinf/covariance.hpp"
#include "condinf/distributions.hpp"
#include "condinf/grid.hpp"
#include "condinf/linalg.hpp"
#include "condinf/types.hpp"

namespace condinf {

// Per-point weights for the weighted quasi-LR objective; each w[i] is a k x k
// symmetric positive definite matrix.
struct WeightField {
  GridPtr grid;
  std::vector<Eigen::MatrixXd> w;
};

namespace detail {

// The minimized path objective in per-point quadratic form:
// term_i(xi) = xi' A_i xi + b_i . xi + c_i, with the A_i stacked so one
// matrix-vector product evaluates all points.
struct PathQuadForm {
  Eigen::MatrixXd a_stack;  // (G k) x k; rows i*k.. hold A_i
  Eigen::MatrixXd b_stack;  // G x k; row i holds b_i
  Eigen::VectorXd c;        // G
  Eigen::MatrixXd s_weight;  // k x k weight of the leading quadratic form in xi
  int k = 0;

  double leading(const Eigen::VectorXd& xi) const { return xi.dot(s_weight * xi); }

  double min_term(const Eigen::VectorXd& xi, Eigen::VectorXd& work_ax,
                  Eigen::VectorXd& work_bx) const {
    work_ax.noalias() = a_stack * xi;
    work_bx.noalias() = b_stack * xi;
    const int g = static_cast<int>(c.size());
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < g; ++i) {
      const double t = xi.dot(work_ax.segment(static_cast<long>(i) * k, k)) + work_bx(i) + c(i);
      if (t < best) best = t;
    }
    return best;
  }

  double eval(const Eigen::VectorXd& xi, Eigen::VectorXd& work_ax,
              Eigen::VectorXd& work_bx) const {
    return leading(xi) - min_term(xi, work_ax, work_bx);
  }
};

// weight_at(i) must return the k x k weight applied to the path at point i;
// pass nullptr to use the inverse diagonal covariance blocks.
inline PathQuadForm build_path_quad_form(const HProcess& h, const CovarianceField& field,
                                         const WeightField* weights) {
  const int g = h.grid->size();
  const int k = h.k();
  const int n0 = h.grid->null_index();
  if (weights) {
    if (!weights->grid || weights->grid->size() != g ||
        static_cast<int>(weights->w.size()) != g)
      throw std::invalid_argument("qlr_weighted: weight field does not match grid");
  }

  PathQuadForm q;
  q.k = k;
  q.a_stack.resize(static_cast<long>(g) * k, k);
  q.b_stack.resize(g, k);
  q.c.resize(g);

  // Leading term: the objective at the null, as a function of xi alone.
  if (weights) {
    const Eigen::MatrixXd& w0 = weights->w[static_cast<std::size_t>(n0)];
    if (w0.rows() != k || w0.cols() != k)
      throw std::invalid_argument("qlr_weighted: weight block has wrong size");
    q.s_weight = 0.5 * (w0 + w0.transpose());
  } else {
    SpdFactor f00(field.null_block());
    q.s_weight = f00.solve(Eigen::MatrixXd::Identity(k, k));
    q.s_weight = 0.5 * (q.s_weight + q.s_weight.transpose()).eval();
  }

  for (int i = 0; i < g; ++i) {
    if (i == n0) {
      // At the null V = I and h = 0, so the path term equals the leading term;
      // writing it that way keeps the statistic exactly nonnegative.
      q.a_stack.middleRows(static_cast<long>(i) * k, k) = q.s_weight;
      q.b_stack.row(i).setZero();
      q.c(i) = 0.0;
      continue;
    }
    Eigen::MatrixXd wv;  // weight * V_i
    Eigen::VectorXd wh;  // weight * h_i
    if (weights) {
      const Eigen::MatrixXd& wi = weights->w[static_cast<std::size_t>(i)];
      if (wi.rows() != k || wi.cols() != k)
        throw std::invalid_argument("qlr_weighted: weight block has wrong size");
      wv.noalias() = wi * h.v[static_cast<std::size_t>(i)];
      wh.noalias() = wi * h.at(i);
    } else {
      SpdFactor fii(field.diag_block(i));
      wv = fii.solve(h.v[static_cast<std::size_t>(i)]);
      wh = fii.solve(h.at(i));
    }
    Eigen::MatrixXd a = h.v[static_cast<std::size_t>(i)].transpose() * wv;
    q.a_stack.middleRows(static_cast<long>(i) * k, k) = 0.5 * (a + a.transpose());
    q.b_stack.row(i) = 2.0 * (wv.transpose() * h.at(i)).transpose();
    q.c(i) = h.at(i).dot(wh);
  }
  return q;
}

}  // namespace detail

// Quasi-LR statistic: objective at the null minus the path minimum, both in
// the inverse-variance metric. Nonnegative; zero iff the minimum sits at the
// null point.
inline double qlr(const Eigen::VectorXd& xi, const HProcess& h, const CovarianceField& field) {
  detail::PathQuadForm q = detail::build_path_quad_form(h, field, nullptr);
  Eigen::VectorXd wa, wb;
  return q.eval(xi, wa, wb);
}

// Weighted variant; reduces to qlr when w[i] = diag_block(i)^{-1}.
inline double qlr_weighted(const Eigen::VectorXd& xi, const HProcess& h,
                           const CovarianceField& field, const WeightField& weights) {
  detail::PathQuadForm q = detail::build_path_quad_form(h, field, &weights);
  Eigen::VectorXd wa, wb;
  return q.eval(xi, wa, wb);
}

// AR-type statistic: xi' Var(g(theta_0))^{-1} xi.
inline double s_stat(const Eigen::VectorXd& xi, const CovarianceField& field) {
  SpdFactor f00(field.null_block());
  return xi.dot(f00.solve(xi));
}

// Finite-difference derivative of the h-process at the null: column j of d is
// -dh/dtheta_j estimated from the stencil pair for coordinate j.
struct ScoreMatrix {
  Eigen::MatrixXd d;  // k x q
  bool full_rank = false;
  int rank = 0;
};

inline ScoreMatrix score_matrix(const HProcess& h, const Stencil& stencil) {
  const int q = h.grid->dim();
  const int k = h.k();
  if (static_cast<int>(stencil.plus.size()) != q || static_cast<int>(stencil.minus.size()) != q)
    throw std::invalid_argument("score_matrix: stencil dimension mismatch");
  const Eigen::VectorXd t0 = h.grid->null_point();
  ScoreMatrix s;
  s.d.resize(k, q);
  for (int j = 0; j < q; ++j) {
    const int ip = stencil.plus[j];
    const int im = stencil.minus[j];
    Eigen::VectorXd hp, hm;
    double xp, xm;
    if (ip >= 0) {
      hp = h.at(ip);
      xp = h.grid->point(ip)(j);
    } else {
      hp = Eigen::VectorXd::Zero(k);  // h at the null is identically zero
      xp = t0(j);
    }
    if (im >= 0) {
      hm = h.at(im);
      xm = h.grid->point(im)(j);
    } else {
      hm = Eigen::VectorXd::Zero(k);
      xm = t0(j);
    }
    if (!(xp > xm))
      throw std::invalid_argument("score_matrix: stencil points do not straddle the null");
    s.d.col(j) = -(hp - hm) / (xp - xm);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(s.d);
  s.rank = static_cast<int>(qr.rank());
  s.full_rank = (s.rank == q);
  return s;
}

// Score statistic: squared length of the projection of xi onto the span of
// Var^{-1} d, in the inverse-variance metric. If d is rank deficient the
// statistic falls back to the S statistic and reports the fallback.
struct KStatValue {
  double value = 0.0;
  bool fallback_to_s = false;
};

inline KStatValue k_stat_full(const Eigen::VectorXd& xi, const CovarianceField& field,
                              const ScoreMatrix& score) {
  KStatValue out;
  if (!score.full_rank) {
    out.value = s_stat(xi, field);
    out.fallback_to_s = true;
    return out;
  }
  SpdFactor f00(field.null_block());
  const Eigen::MatrixXd b = f00.solve(score.d);           // k x q
  const Eigen::MatrixXd m = score.d.transpose() * b;      // q x q
  SpdFactor fm(0.5 * (m + m.transpose()));
  const Eigen::VectorXd u = b.transpose() * xi;           // q
  out.value = u.dot(fm.solve(u));
  return out;
}

inline double k_stat(const Eigen::VectorXd& xi, const HProcess& h, const CovarianceField& field,
                     const Stencil& stencil) {
  return k_stat_full(xi, field, score_matrix(h, stencil)).value;
}

// Two-part score test: rejects when K exceeds its chi-square(q) cut at level
// alpha_k or the overidentification part J = S - K exceeds chi-square(k-q) at
// level alpha_j. The reported p-value is the weighted-Bonferroni combination,
// calibrated so that p <= alpha_k + alpha_j exactly reproduces the rejection
// rule.
struct JkOutcome {
  double k_value = 0.0;
  double j_value = 0.0;
  double k_crit = 0.0;
  double j_crit = 0.0;
  bool reject = false;
  double p_value = 1.0;
  bool fallback = false;  // k == q (no J part) or rank-deficient score
};

inline JkOutcome jk_test(const Eigen::VectorXd& xi, const HProcess& h,
                         const CovarianceField& field, const ScoreMatrix& score, double alpha_k,
                         double alpha_j) {
  if (!(alpha_k > 0.0 && alpha_k < 1.0) || !(alpha_j >= 0.0 && alpha_j < 1.0))
    throw std::invalid_argument("jk_test: invalid alpha split");
  const int k = field.k();
  const int q = static_cast<int>(score.d.cols());
  const double alpha = alpha_k + alpha_j;

  JkOutcome out;
  KStatValue kv = k_stat_full(xi, field, score);
  out.k_value = kv.value;
  out.fallback = kv.fallback_to_s;
  const int k_dof = kv.fallback_to_s ? k : q;
  out.k_crit = chi2_quantile(k_dof, 1.0 - alpha_k);
  const double s = s_stat(xi, field);
  out.j_value = std::max(0.0, s - out.k_value);

  double p_k = 1.0 - chi2_cdf(k_dof, out.k_value);
  double p_j = 1.0;
  bool reject_j = false;
  if (k > q && !kv.fallback_to_s && alpha_j > 0.0) {
    out.j_crit = chi2_quantile(k - q, 1.0 - alpha_j);
    reject_j = out.j_value > out.j_crit;
    p_j = 1.0 - chi2_cdf(k - q, out.j_value);
  } else {
    out.j_crit = std::numeric_limits<double>::infinity();
    out.fallback = out.fallback || (k == q);
  }
  const bool reject_k = out.k_value > out.k_crit;
  out.reject = reject_k || reject_j;
  double p = std::min(p_k * (alpha / alpha_k),
                      (alpha_j > 0.0 && k > q) ? p_j * (alpha / alpha_j)
                                               : std::numeric_limits<double>::infinity());
  out.p_value = std::min(1.0, p);
  return out;
}

// ---- StatisticFunctional wrappers ------------------------------------------

class QlrStatistic : public StatisticFunctional {
 public:
  std::string name() const override { return "qlr"; }
  double operator()(const Eigen::VectorXd& xi, const HProcess& h,
                    const CovarianceField& field) const override {
    return qlr(xi, h, field);
  }
  std::function<double(const Eigen::VectorXd&)> prepared(
      const HProcess& h, const CovarianceField& field) const override {
    auto state = std::make_shared<State>();
    state->q = detail::build_path_quad_form(h, field, nullptr);
    return [state](const Eigen::VectorXd& xi) { return state->q.eval(xi, state->wa, state->wb); };
  }

 private:
  struct State {
    detail::PathQuadForm q;
    Eigen::VectorXd wa, wb;
  };
};

class WeightedQlrStatistic : public StatisticFunctional {
 public:
  explicit WeightedQlrStatistic(WeightField weights) : weights_(std::move(weights)) {}
  std::string name() const override { return "qlr-weighted"; }
  double operator()(const Eigen::VectorXd& xi, const HProcess& h,
                    const CovarianceField& field) const override {
    return qlr_weighted(xi, h, field, weights_);
  }
  std::function<double(const Eigen::VectorXd&)> prepared(
      const HProcess& h, const CovarianceField& field) const override {
    auto state = std::make_shared<State>();
    state->q = detail::build_path_quad_form(h, field, &weights_);
    return [state](const Eigen::VectorXd& xi) { return state->q.eval(xi, state->wa, state->wb); };
  }

 private:
  struct State {
    detail::PathQuadForm q;
    Eigen::VectorXd wa, wb;
  };
  WeightField weights_;
};

class SStatistic : public StatisticFunctional {
 public:
  std::string name() const override { return "s"; }
  double operator()(const Eigen::VectorXd& xi, const HProcess&,
                    const CovarianceField& field) const override {
    return s_stat(xi, field);
  }
  std::function<double(const Eigen::VectorXd&)> prepared(
      const HProcess&, const CovarianceField& field) const override {
    SpdFactor f00(field.null_block());
    Eigen::MatrixXd a0 = f00.solve(Eigen::MatrixXd::Identity(field.k(), field.k()));
    a0 = 0.5 * (a0 + a0.transpose()).eval();
    return [a0](const Eigen::VectorXd& xi) { return xi.dot(a0 * xi); };
  }
};

// K as a conditional statistic: the score direction is recomputed from the
// conditioned h, so it stays fixed across critical-value draws.
class KStatistic : public StatisticFunctional {
 public:
  explicit KStatistic(Stencil stencil) : stencil_(std::move(stencil)), auto_stencil_(false) {}
  KStatistic() : auto_stencil_(true) {}
  std::string name() const override { return "k"; }
  double operator()(const Eigen::VectorXd& xi, const HProcess& h,
                    const CovarianceField& field) const override {
    const Stencil st = auto_stencil_ ? Stencil::detect(*h.grid) : stencil_;
    return k_stat(xi, h, field, st);
  }
  std::function<double(const Eigen::VectorXd&)> prepared(
      const HProcess& h, const CovarianceField& field) const override {
    const Stencil st = auto_stencil_ ? Stencil::detect(*h.grid) : stencil_;
    const ScoreMatrix score = score_matrix(h, st);
    if (!score.full_rank) {
      SStatistic s;
      return s.prepared(h, field);
    }
    SpdFactor f00(field.null_block());
    const Eigen::MatrixXd b = f00.solve(score.d);
    Eigen::MatrixXd m = score.d.transpose() * b;
    auto fm = std::make_shared<SpdFactor>(0.5 * (m + m.transpose()).eval());
    return [b, fm](const Eigen::VectorXd& xi) {
      const Eigen::VectorXd u = b.transpose() * xi;
      return u.dot(fm->solve(u));
    };
  }

 private:
  Stencil stencil_;
  bool auto_stencil_ = false;
};

// Statistic registry used by the command-line tool and the experiments.
inline std::unique_ptr<StatisticFunctional> make_statistic(const std::string& name) {
  if (name == "qlr") return std::make_unique<QlrStatistic>();
  if (name == "s") return std::make_unique<SStatistic>();
  if (name == "k") return std::make_unique<KStatistic>();
  throw std::invalid_argument("unknown statistic '" + name +
                              "' (expected qlr, s, k, jk, or qlr-weighted)");
}

}  // namespace condinf
