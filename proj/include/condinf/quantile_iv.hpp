#pragma once
// Instrumental-variable quantile model: for each structural value theta the
// nuisance coefficients beta(theta) are fit by quantile regression of
// y - d'theta on the included regressors c, and the concentrated moment
// process uses the instruments z. The covariance field across theta pairs
// corrects for the estimated beta path through kernel-weighted Jacobians.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "condinf/concentrate.hpp"
#include "condinf/covariance.hpp"
#include "condinf/distributions.hpp"
#include "condinf/grid.hpp"
#include "condinf/io.hpp"
#include "condinf/linalg.hpp"
#include "condinf/procedures.hpp"
#include "condinf/types.hpp"

namespace condinf {

struct QuantileIVData {
  Eigen::VectorXd y;  // T
  Eigen::MatrixXd d;  // T x q, endogenous regressors
  Eigen::MatrixXd c;  // T x p, included exogenous regressors
  Eigen::MatrixXd z;  // T x k, instruments
  double tau = 0.5;

  long T() const { return y.size(); }

  void validate() const {
    if (y.size() < 2) throw std::invalid_argument("QuantileIVData: need at least two rows");
    if (d.rows() != y.size() || c.rows() != y.size() || z.rows() != y.size())
      throw std::invalid_argument("QuantileIVData: row count mismatch");
    if (d.cols() < 1 || c.cols() < 1 || z.cols() < 1)
      throw std::invalid_argument("QuantileIVData: d, c and z must each have columns");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("QuantileIVData: tau outside (0,1)");
    if (!y.allFinite() || !d.allFinite() || !c.allFinite() || !z.allFinite())
      throw std::invalid_argument("QuantileIVData: non-finite entries");
    Eigen::MatrixXd cz(y.size(), c.cols() + z.cols());
    cz << c, z;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(cz);
    if (qr.rank() < cz.cols())
      throw std::invalid_argument("QuantileIVData: (c, z) is rank deficient");
  }
};

// Loads columns y, d1..dq, c1..cp, z1..zk (exact names) from a CSV file.
inline QuantileIVData load_qiv_csv(const std::string& path, double tau) {
  const CsvTable t = read_csv(path);
  auto group = [&](const std::string& prefix) {
    std::vector<int> cols;
    for (int j = 1;; ++j) {
      const int c = t.column(prefix + std::to_string(j));
      if (c < 0) break;
      cols.push_back(c);
    }
    return cols;
  };
  const int ycol = t.column("y");
  if (ycol < 0) throw std::invalid_argument("load_qiv_csv: missing column 'y'");
  const std::vector<int> dcols = group("d"), ccols = group("c"), zcols = group("z");
  if (dcols.empty() || ccols.empty() || zcols.empty())
    throw std::invalid_argument("load_qiv_csv: need columns d1.., c1.., z1..");
  QuantileIVData data;
  data.tau = tau;
  data.y = t.data.col(ycol);
  auto take = [&](const std::vector<int>& cols) {
    Eigen::MatrixXd m(t.data.rows(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) m.col(j) = t.data.col(cols[j]);
    return m;
  };
  data.d = take(dcols);
  data.c = take(ccols);
  data.z = take(zcols);
  data.validate();
  return data;
}

// ---- Quantile regression of the nuisance coefficients -----------------------

struct FitOptions {
  int max_iter = 60;        // Newton iterations per smoothing stage
  double tol = 1e-11;       // gradient sup-norm tolerance, relative to scale
  int polish_points = 8;    // nearest-to-zero residuals considered for vertices
};

struct FitResult {
  Eigen::VectorXd beta;
  double objective = 0.0;  // mean check loss at beta
  bool converged = false;
  int iterations = 0;
};

inline double check_loss(const Eigen::VectorXd& u, double tau) {
  double s = 0.0;
  for (long t = 0; t < u.size(); ++t) s += u(t) * (tau - (u(t) < 0.0 ? 1.0 : 0.0));
  return s / static_cast<double>(u.size());
}

namespace detail {

// Gaussian-smoothed check loss: value h*phi(u/h) + u*(tau - Phi(-u/h)).
inline double smoothed_loss(const Eigen::VectorXd& u, double tau, double h) {
  double s = 0.0;
  const double inv_h = 1.0 / h;
  for (long t = 0; t < u.size(); ++t) {
    const double x = u(t) * inv_h;
    const double phi = 0.3989422804014326779 * std::exp(-0.5 * x * x);
    s += h * phi + u(t) * (tau - normal_cdf(-x));
  }
  return s / static_cast<double>(u.size());
}

// Enumerates candidate vertex solutions that interpolate p observations with
// the smallest smoothed-fit residuals and keeps the best exact objective.
inline void polish_vertices(const Eigen::VectorXd& r, const Eigen::MatrixXd& c, double tau,
                            int n_candidates, Eigen::VectorXd& best_beta, double& best_obj) {
  const long T = r.size();
  const int p = static_cast<int>(c.cols());
  Eigen::VectorXd res = r - c * best_beta;
  std::vector<long> order(static_cast<std::size_t>(T));
  std::iota(order.begin(), order.end(), 0L);
  const int m = static_cast<int>(std::min<long>(T, n_candidates));
  std::partial_sort(order.begin(), order.begin() + m, order.end(),
                    [&](long a, long b) { return std::abs(res(a)) < std::abs(res(b)); });

  std::vector<int> pick(static_cast<std::size_t>(p), 0);
  // iterate over p-subsets of the m candidates in lexicographic order
  for (int i = 0; i < p; ++i) pick[static_cast<std::size_t>(i)] = i;
  if (m < p) return;
  for (;;) {
    Eigen::MatrixXd cs(p, p);
    Eigen::VectorXd rs(p);
    for (int i = 0; i < p; ++i) {
      cs.row(i) = c.row(order[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])]);
      rs(i) = r(order[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(cs);
    if (lu.isInvertible()) {
      const Eigen::VectorXd beta = lu.solve(rs);
      const double obj = check_loss(r - c * beta, tau);
      if (obj < best_obj) {
        best_obj = obj;
        best_beta = beta;
      }
    }
    // next subset
    int i = p - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == m - p + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < p; ++j)
      pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
}

}  // namespace detail

// Profiled quantile regression: beta(theta) = argmin_b mean check loss of
// y - d'theta - c'b. A constant single regressor is solved exactly by the
// order statistic at rank ceil(tau*T); otherwise a smoothed Newton iteration
// with the smoothing bandwidth annealed toward zero, followed by an exact
// vertex polish over nearby interpolating solutions.
inline FitResult fit_beta(const QuantileIVData& data, const Eigen::VectorXd& theta,
                          const FitOptions& opts = FitOptions()) {
  if (theta.size() != data.d.cols()) throw std::invalid_argument("fit_beta: theta length != q");
  const long T = data.T();
  const int p = static_cast<int>(data.c.cols());
  if (T < p) throw std::invalid_argument("fit_beta: fewer observations than coefficients");
  const Eigen::VectorXd r = data.y - data.d * theta;

  FitResult out;
  // Exact path: single constant regressor.
  if (p == 1 && (data.c.col(0).array() == data.c(0, 0)).all() && data.c(0, 0) > 0.0) {
    std::vector<double> v(r.data(), r.data() + T);
    const long rank = std::max<long>(1, static_cast<long>(std::ceil(data.tau * T)));
    std::nth_element(v.begin(), v.begin() + (rank - 1), v.end());
    out.beta = Eigen::VectorXd::Constant(1, v[static_cast<std::size_t>(rank - 1)] / data.c(0, 0));
    out.objective = check_loss(r - data.c * out.beta, data.tau);
    out.converged = true;
    return out;
  }

  const double scale = std::max(1e-8, std::sqrt((r.array() - r.mean()).square().sum() /
                                                std::max<long>(1, T - 1)));
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  {
    // start from the least-squares fit
    Eigen::MatrixXd ctc = data.c.transpose() * data.c;
    beta = solve_spd(ctc, (data.c.transpose() * r).eval()).solution;
  }

  const double h_floors[] = {0.5, 0.1, 0.02, 4e-3, 8e-4, 1.6e-4, 3.2e-5};
  Eigen::VectorXd res = r - data.c * beta;
  for (double hf : h_floors) {
    const double h = hf * scale;
    for (int it = 0; it < opts.max_iter; ++it) {
      ++out.iterations;
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(p, p);
      for (long t = 0; t < T; ++t) {
        const double x = res(t) / h;
        const double psi = data.tau - normal_cdf(-x);
        const double w = 0.3989422804014326779 * std::exp(-0.5 * x * x) / h;
        grad.noalias() -= psi * data.c.row(t).transpose();
        hess.noalias() += w * data.c.row(t).transpose() * data.c.row(t);
      }
      grad /= static_cast<double>(T);
      hess /= static_cast<double>(T);
      if (grad.cwiseAbs().maxCoeff() < opts.tol * std::max(1.0, scale)) break;
      const Eigen::VectorXd step = solve_spd(hess, (-grad).eval()).solution;
      // backtracking on the smoothed objective
      const double f0 = detail::smoothed_loss(res, data.tau, h);
      double lam = 1.0;
      Eigen::VectorXd beta_new;
      for (int bt = 0; bt < 30; ++bt) {
        beta_new = beta + lam * step;
        const Eigen::VectorXd res_new = r - data.c * beta_new;
        if (detail::smoothed_loss(res_new, data.tau, h) <= f0) {
          beta = beta_new;
          res = res_new;
          break;
        }
        lam *= 0.5;
      }
      if (lam < 1e-9) break;
    }
  }

  out.beta = beta;
  out.objective = check_loss(r - data.c * beta, data.tau);
  detail::polish_vertices(r, data.c, data.tau, std::max(opts.polish_points, p + 3), out.beta,
                          out.objective);
  out.converged = true;
  return out;
}

// ---- Concentrated process and covariance field ------------------------------

// g(theta_i) = T^{-1/2} sum_t (tau - 1{y_t <= c_t' beta_i + d_t' theta_i}) z_t.
inline MomentProcess concentrated_g(const QuantileIVData& data, const ProfilePath& path) {
  const int g = path.grid->size();
  const long T = data.T();
  Eigen::MatrixXd values(g, static_cast<int>(data.z.cols()));
  const double root_t = std::sqrt(static_cast<double>(T));
  for (int i = 0; i < g; ++i) {
    const Eigen::VectorXd fit =
        data.c * path.betas.row(i).transpose() + data.d * path.grid->point(i);
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(data.z.cols());
    for (long t = 0; t < T; ++t) {
      const double s = data.tau - (data.y(t) <= fit(t) ? 1.0 : 0.0);
      acc += s * data.z.row(t);
    }
    values.row(i) = acc / root_t;
  }
  return MomentProcess(path.grid, std::move(values), T);
}

struct KernelSpec {
  enum class Type { gaussian, uniform };
  Type type = Type::gaussian;
  double bandwidth = 0.0;  // <= 0: plug-in rule 1.06 sd(residuals) T^{-1/5}

  double operator()(double x) const {
    switch (type) {
      case Type::uniform:
        return (x >= -0.5 && x <= 0.5) ? 1.0 : 0.0;
      case Type::gaussian:
      default:
        return 0.3989422804014326779 * std::exp(-0.5 * x * x);
    }
  }
  static Type parse(const std::string& name) {
    if (name == "gaussian") return Type::gaussian;
    if (name == "uniform") return Type::uniform;
    throw std::invalid_argument("kernel must be 'gaussian' or 'uniform'");
  }
};

inline double plugin_bandwidth(const Eigen::VectorXd& residuals, const KernelSpec& spec) {
  if (spec.bandwidth > 0.0) return spec.bandwidth;
  const long T = residuals.size();
  const double sd = std::sqrt((residuals.array() - residuals.mean()).square().sum() /
                              std::max<long>(1, T - 1));
  const double h = 1.06 * sd * std::pow(static_cast<double>(T), -0.2);
  return std::max(h, 1e-12);
}

struct KernelJacobians {
  Eigen::MatrixXd m;  // k x p: (T h)^{-1} sum_t z_t c_t' K(eps_t / h)
  Eigen::MatrixXd j;  // p x p: (T h)^{-1} sum_t c_t c_t' K(eps_t / h)
  double bandwidth = 0.0;
};

inline KernelJacobians kernel_jacobians(const QuantileIVData& data, const Eigen::VectorXd& theta,
                                        const Eigen::VectorXd& beta,
                                        const KernelSpec& spec = KernelSpec()) {
  if (theta.size() != data.d.cols() || beta.size() != data.c.cols())
    throw std::invalid_argument("kernel_jacobians: parameter length mismatch");
  const long T = data.T();
  const Eigen::VectorXd eps = data.y - data.c * beta - data.d * theta;
  KernelJacobians out;
  out.bandwidth = plugin_bandwidth(eps, spec);
  const int k = static_cast<int>(data.z.cols());
  const int p = static_cast<int>(data.c.cols());
  out.m = Eigen::MatrixXd::Zero(k, p);
  out.j = Eigen::MatrixXd::Zero(p, p);
  for (long t = 0; t < T; ++t) {
    const double w = spec(eps(t) / out.bandwidth);
    if (w == 0.0) continue;
    out.m.noalias() += w * data.z.row(t).transpose() * data.c.row(t);
    out.j.noalias() += w * data.c.row(t).transpose() * data.c.row(t);
  }
  const double norm = 1.0 / (static_cast<double>(T) * out.bandwidth);
  out.m *= norm;
  out.j *= norm;
  return out;
}

// Covariance field of the concentrated process: block(i,j) = T^{-1} sum_t
// s_t(i) s_t(j) (z_t - A_i c_t)(z_t - A_j c_t)' with s_t(i) = tau - 1{eps_t(i)<0}
// and A_i = M_i J_i^{-1}.
inline CovarianceField qiv_covariance(const QuantileIVData& data, const ProfilePath& path,
                                      const KernelSpec& spec = KernelSpec(),
                                      double lambda_bar = 1e6) {
  const int g = path.grid->size();
  const long T = data.T();
  const int k = static_cast<int>(data.z.cols());
  Eigen::MatrixXd omega(T, static_cast<long>(g) * k);
  bool degraded = false;
  for (int i = 0; i < g; ++i) {
    const Eigen::VectorXd fit =
        data.c * path.betas.row(i).transpose() + data.d * path.grid->point(i);
    const Eigen::VectorXd eps = data.y - fit;
    const KernelJacobians kj =
        kernel_jacobians(data, path.grid->point(i), path.betas.row(i).transpose(), spec);
    const SpdSolveResult sol = solve_spd(kj.j, kj.m.transpose());
    degraded = degraded || sol.degraded;
    const Eigen::MatrixXd a = sol.solution.transpose();  // k x p
    Eigen::MatrixXd zt = data.z - data.c * a.transpose();  // T x k
    for (long t = 0; t < T; ++t) {
      const double s = data.tau - (eps(t) < 0.0 ? 1.0 : 0.0);
      zt.row(t) *= s;
    }
    omega.middleCols(static_cast<long>(i) * k, k) = zt;
  }
  (void)degraded;
  Eigen::MatrixXd assembled = (omega.transpose() * omega) / static_cast<double>(T);
  return CovarianceField(path.grid, k, std::move(assembled), lambda_bar);
}

// Fits the nuisance path and its kernel sensitivities over a grid.
inline ProfilePath fit_profile_path(const QuantileIVData& data, const GridPtr& grid,
                                    const KernelSpec& spec = KernelSpec(),
                                    const FitOptions& opts = FitOptions()) {
  const int g = grid->size();
  Eigen::MatrixXd betas(g, data.c.cols());
  std::vector<Eigen::MatrixXd> mhats(static_cast<std::size_t>(g));
  for (int i = 0; i < g; ++i) {
    const FitResult fit = fit_beta_at(data, grid->point(i), opts);
    betas.row(i) = fit.beta.transpose();
    const KernelJacobians kj = kernel_jacobians(data, grid->point(i), fit.beta, spec);
    mhats[static_cast<std::size_t>(i)] = kj.m;
  }
  return ProfilePath(grid, std::move(betas), std::move(mhats));
}

// ---- End-to-end pipeline -----------------------------------------------------

struct QivModel {
  MomentProcess g;
  std::shared_ptr<const CovarianceField> field;
  ProfilePath path;
};

struct QivOptions {
  TestSpec test;
  KernelSpec kernel;
  FitOptions fit;
  double lambda_bar = 1e6;
};

inline QivModel qiv_build(const QuantileIVData& data, const GridPtr& grid,
                          const QivOptions& opts = QivOptions()) {
  data.validate();
  QivModel m;
  m.path = fit_profile_path(data, grid, opts.kernel, opts.fit);
  m.g = concentrated_g(data, m.path);
  m.field = std::make_shared<const CovarianceField>(
      qiv_covariance(data, m.path, opts.kernel, opts.lambda_bar));
  return m;
}

// Tests the null marked in the grid.
inline TestResult qiv_test(const QuantileIVData& data, const GridPtr& grid, const QivOptions& opts,
                           const RngStream& rng) {
  const QivModel m = qiv_build(data, grid, opts);
  return run_point_test(m.g, *m.field, opts.test, rng);
}

// Inverts the test over every grid point.
inline ConfidenceSet qiv_confset(const QuantileIVData& data, const GridPtr& grid,
                                 const QivOptions& opts, const RngStream& rng,
                                 const ThreadPool& pool = ThreadPool(1)) {
  const QivModel m = qiv_build(data, grid, opts);
  NullProblemSupplier supply = [&m](int i) {
    GridPtr g = std::make_shared<const ParamGrid>(m.g.grid->with_null(i));
    return std::make_pair(MomentProcess(g, m.g.values, m.g.sample_size), m.field);
  };
  return invert_point_test(*grid, supply, opts.test, rng, pool, true);
}

}  // namespace condinf
