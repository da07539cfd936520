#pragma once
// Concentrating well-identified nuisance parameters out of a longer moment
// system. Given a profile beta_hat(theta) and the joint ("long") covariance
// field of the stacked vector (phi_t, influence of sqrt(T)(beta_hat - beta)),
// the covariance field of the concentrated process is the sandwich
//   (I_k, M_i) Sigma_L(i,j) (I_k, M_j)'
// where M_i is the k x p sensitivity of the moments to beta at grid point i.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "condinf/covariance.hpp"
#include "condinf/grid.hpp"
#include "condinf/types.hpp"

namespace condinf {

// A moment model phi(t, beta, theta) with nuisance dimension p; used for
// cross-checking concentrated pipelines against direct evaluation.
struct LongMomentModel {
  std::function<Eigen::VectorXd(long t, const Eigen::VectorXd& beta, const Eigen::VectorXd& theta)>
      phi;
  long T = 0;
  int k = 0;
  int p = 0;
};

// The profiled nuisance path beta_hat(theta_i) and the moment sensitivities
// M_i = d m / d beta' at (beta_hat(theta_i), theta_i), each k x p.
struct ProfilePath {
  GridPtr grid;
  Eigen::MatrixXd betas;                // G x p
  std::vector<Eigen::MatrixXd> m_hats;  // G matrices, k x p

  ProfilePath() = default;
  ProfilePath(GridPtr g, Eigen::MatrixXd b, std::vector<Eigen::MatrixXd> m)
      : grid(std::move(g)), betas(std::move(b)), m_hats(std::move(m)) {
    if (!grid) throw std::invalid_argument("ProfilePath: null grid");
    if (betas.rows() != grid->size())
      throw std::invalid_argument("ProfilePath: one beta row per grid point required");
    if (static_cast<int>(m_hats.size()) != grid->size())
      throw std::invalid_argument("ProfilePath: one sensitivity block per grid point required");
    if (!betas.allFinite()) throw std::invalid_argument("ProfilePath: non-finite betas");
    for (const auto& m : m_hats)
      if (!m.allFinite()) throw std::invalid_argument("ProfilePath: non-finite sensitivities");
  }

  int p() const { return static_cast<int>(betas.cols()); }
};

// Covariance field of the (k+p)-dimensional stacked process along the grid.
struct LongCovarianceField {
  CovarianceField field;  // block size k + p

  int long_k() const { return field.k(); }
};

// g(theta_i) = T^{-1/2} sum_t phi(t, beta_hat(theta_i), theta_i).
inline MomentProcess concentrated_moment(const LongMomentModel& model, const ProfilePath& path) {
  if (!model.phi) throw std::invalid_argument("concentrated_moment: model has no phi");
  if (model.T < 1) throw std::invalid_argument("concentrated_moment: T must be positive");
  if (path.p() != model.p)
    throw std::invalid_argument("concentrated_moment: nuisance dimension mismatch");
  const int g = path.grid->size();
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(g, model.k);
  for (int i = 0; i < g; ++i) {
    const Eigen::VectorXd beta = path.betas.row(i).transpose();
    const Eigen::VectorXd theta = path.grid->point(i);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(model.k);
    for (long t = 0; t < model.T; ++t) {
      const Eigen::VectorXd v = model.phi(t, beta, theta);
      if (v.size() != model.k)
        throw std::invalid_argument("concentrated_moment: phi returned wrong length");
      acc += v;
    }
    values.row(i) = acc.transpose() / std::sqrt(static_cast<double>(model.T));
  }
  return MomentProcess(path.grid, std::move(values), model.T);
}

// Sandwich transform of the long covariance field by the selection matrices
// (I_k, M_i). With p = 0 this is the identity transform.
inline CovarianceField concentrated_covariance(const LongCovarianceField& long_field,
                                               const ProfilePath& path, int k,
                                               double lambda_bar = 1e6) {
  const int g = path.grid->size();
  const int p = path.p();
  if (long_field.field.size() != g)
    throw std::invalid_argument("concentrated_covariance: field grid size mismatch");
  if (long_field.long_k() != k + p)
    throw std::invalid_argument("concentrated_covariance: long block size must be k+p");
  for (const auto& m : path.m_hats)
    if (m.rows() != k || m.cols() != p)
      throw std::invalid_argument("concentrated_covariance: sensitivity block must be k x p");

  // Selection blocks S_i = (I_k, M_i), each k x (k+p).
  std::vector<Eigen::MatrixXd> sel(static_cast<std::size_t>(g));
  for (int i = 0; i < g; ++i) {
    sel[static_cast<std::size_t>(i)].resize(k, k + p);
    sel[static_cast<std::size_t>(i)].leftCols(k) = Eigen::MatrixXd::Identity(k, k);
    if (p > 0) sel[static_cast<std::size_t>(i)].rightCols(p) = path.m_hats[static_cast<std::size_t>(i)];
  }

  Eigen::MatrixXd assembled(static_cast<long>(g) * k, static_cast<long>(g) * k);
  for (int i = 0; i < g; ++i) {
    for (int j = i; j < g; ++j) {
      const Eigen::MatrixXd bij =
          sel[static_cast<std::size_t>(i)] * long_field.field.block(i, j) *
          sel[static_cast<std::size_t>(j)].transpose();
      assembled.block(static_cast<long>(i) * k, static_cast<long>(j) * k, k, k) = bij;
      if (j > i)
        assembled.block(static_cast<long>(j) * k, static_cast<long>(i) * k, k, k) =
            bij.transpose();
    }
  }
  return CovarianceField(path.grid, k, std::move(assembled), lambda_bar);
}

}  // namespace condinf
