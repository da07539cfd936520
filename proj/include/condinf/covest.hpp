#pragma once
// Covariance field estimators from per-observation moment contributions:
// the independent-sampling estimator and the Newey-West (Bartlett kernel)
// autocorrelation-robust estimator, plus an eigenvalue-clipping projection
// onto the positive semidefinite cone.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "condinf/covariance.hpp"
#include "condinf/grid.hpp"
#include "condinf/types.hpp"

namespace condinf {

// Per-observation moment contributions phi_t(theta_i), stored as one T x (G k)
// matrix whose column block i holds phi(., theta_i); that layout lets the
// covariance estimators run as single matrix products.
struct MomentPanel {
  GridPtr grid;
  Eigen::MatrixXd data;  // T x (G k)
  int k = 0;

  MomentPanel() = default;
  MomentPanel(GridPtr g, Eigen::MatrixXd d, int kk) : grid(std::move(g)), data(std::move(d)), k(kk) {
    if (!grid) throw std::invalid_argument("MomentPanel: null grid");
    if (k < 1) throw std::invalid_argument("MomentPanel: k must be positive");
    if (data.cols() != static_cast<long>(grid->size()) * k)
      throw std::invalid_argument("MomentPanel: column count must be G*k");
    if (data.rows() < 1) throw std::invalid_argument("MomentPanel: empty panel");
    if (!data.allFinite()) throw std::invalid_argument("MomentPanel: non-finite contributions");
  }

  long T() const { return data.rows(); }
  Eigen::Block<const Eigen::MatrixXd> block(int i) const {
    return data.middleCols(static_cast<long>(i) * k, k);
  }
};

// Normalized process g(theta_i) = T^{-1/2} sum_t phi_t(theta_i).
inline MomentProcess panel_mean_process(const MomentPanel& panel) {
  const int g = panel.grid->size();
  const double root_t = std::sqrt(static_cast<double>(panel.T()));
  Eigen::MatrixXd values(g, panel.k);
  for (int i = 0; i < g; ++i) values.row(i) = panel.block(i).colwise().sum() / root_t;
  return MomentProcess(panel.grid, std::move(values), panel.T());
}

// Independent-sampling covariance field: block(i,j) = T^{-1} sum_t
// phi_t(theta_i) phi_t(theta_j)', with optional centering at the per-point
// sample means.
inline CovarianceField iid_covariance(const MomentPanel& panel, bool center = true,
                                      double lambda_bar = 1e6) {
  Eigen::MatrixXd x = panel.data;
  if (center) x.rowwise() -= panel.data.colwise().mean();
  Eigen::MatrixXd assembled = (x.transpose() * x) / static_cast<double>(panel.T());
  return CovarianceField(panel.grid, panel.k, std::move(assembled), lambda_bar);
}

// Newey-West estimator with Bartlett weights w_l = 1 - l/(lags+1):
// Gamma_0 + sum_l w_l (Gamma_l + Gamma_l') where
// Gamma_l = T^{-1} sum_{t>l} phi_t phi_{t-l}'. lags = 0 reproduces
// iid_covariance exactly.
inline CovarianceField newey_west(const MomentPanel& panel, int lags, bool center = true,
                                  double lambda_bar = 1e6) {
  if (lags < 0) throw std::invalid_argument("newey_west: lags must be >= 0");
  if (lags >= panel.T()) throw std::invalid_argument("newey_west: lags must be < T");
  Eigen::MatrixXd x = panel.data;
  if (center) x.rowwise() -= panel.data.colwise().mean();
  const double t = static_cast<double>(panel.T());
  Eigen::MatrixXd assembled = (x.transpose() * x) / t;
  for (int l = 1; l <= lags; ++l) {
    const double w = 1.0 - static_cast<double>(l) / (lags + 1);
    const long rows = panel.T() - l;
    Eigen::MatrixXd gl = (x.bottomRows(rows).transpose() * x.topRows(rows)) / t;
    assembled.noalias() += w * (gl + gl.transpose());
  }
  return CovarianceField(panel.grid, panel.k, std::move(assembled), lambda_bar);
}

// Nearest-PSD repair: eigenvalues of the assembled matrix below zero are
// clipped to zero. Idempotent; leaves already-PSD fields unchanged up to
// eigensolver rounding.
inline CovarianceField psd_project(const CovarianceField& field) {
  if (field.compact()) return field;  // cosine fields are PSD by construction
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(field.assembled());
  if (es.eigenvalues().minCoeff() >= 0.0) return field;
  Eigen::MatrixXd repaired = es.eigenvectors() *
                             es.eigenvalues().cwiseMax(0.0).asDiagonal() *
                             es.eigenvectors().transpose();
  return CovarianceField(field.grid_ptr(), field.k(), std::move(repaired), field.lambda_bar());
}

}  // namespace condinf
