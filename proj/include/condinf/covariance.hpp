#pragma once
// Covariance field of a moment process over a parameter grid: the G*G array of
// k*k cross-covariance blocks Cov(g(theta_i), g(theta_j)), stored either as one
// assembled (G k) x (G k) symmetric matrix or, for very large grids with
// separable structure, as a compact cosine-correlation representation
// block(i,j) = cos(angle_i - angle_j) * Sigma0 (positive semidefinite because
// the cosine kernel is a rank-two Gram matrix).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "condinf/grid.hpp"
#include "condinf/linalg.hpp"

namespace condinf {

class CovarianceField {
 public:
  // Dense mode. assembled is (G k) x (G k) with block (i,j) at rows i*k...,
  // cols j*k...; it is symmetrized exactly on construction.
  CovarianceField(GridPtr grid, int k, Eigen::MatrixXd assembled, double lambda_bar = 1e6)
      : grid_(std::move(grid)), k_(k), lambda_bar_(lambda_bar) {
    if (!grid_) throw std::invalid_argument("CovarianceField: null grid");
    if (k_ < 1) throw std::invalid_argument("CovarianceField: k must be positive");
    const long n = static_cast<long>(grid_->size()) * k_;
    if (assembled.rows() != n || assembled.cols() != n)
      throw std::invalid_argument("CovarianceField: assembled matrix has wrong size");
    if (!assembled.allFinite())
      throw std::invalid_argument("CovarianceField: non-finite covariance");
    if (!(lambda_bar_ > 0.0))
      throw std::invalid_argument("CovarianceField: lambda_bar must be positive");
    assembled_ = 0.5 * (assembled + assembled.transpose());
  }

  // Compact cosine mode: block(i,j) = cos(angles[i]-angles[j]) * sigma0.
  CovarianceField(GridPtr grid, Eigen::MatrixXd sigma0, Eigen::VectorXd angles,
                  double lambda_bar = 1e6)
      : grid_(std::move(grid)),
        k_(static_cast<int>(sigma0.rows())),
        lambda_bar_(lambda_bar),
        compact_(true),
        sigma0_(0.5 * (sigma0 + sigma0.transpose())),
        angles_(std::move(angles)) {
    if (!grid_) throw std::invalid_argument("CovarianceField: null grid");
    if (sigma0_.rows() != sigma0_.cols() || sigma0_.rows() < 1)
      throw std::invalid_argument("CovarianceField: sigma0 must be square");
    if (angles_.size() != grid_->size())
      throw std::invalid_argument("CovarianceField: one angle per grid point required");
    if (!sigma0_.allFinite() || !angles_.allFinite())
      throw std::invalid_argument("CovarianceField: non-finite covariance");
    if (!(lambda_bar_ > 0.0))
      throw std::invalid_argument("CovarianceField: lambda_bar must be positive");
  }

  const ParamGrid& grid() const { return *grid_; }
  GridPtr grid_ptr() const { return grid_; }
  int k() const { return k_; }
  int size() const { return grid_->size(); }
  double lambda_bar() const { return lambda_bar_; }
  bool compact() const { return compact_; }

  // Cross-covariance block Cov(g(theta_i), g(theta_j)); k x k, by value so the
  // two storage modes expose one interface.
  Eigen::MatrixXd block(int i, int j) const {
    if (compact_) return std::cos(angles_(i) - angles_(j)) * sigma0_;
    return assembled_.block(static_cast<long>(i) * k_, static_cast<long>(j) * k_, k_, k_);
  }
  Eigen::MatrixXd diag_block(int i) const { return block(i, i); }
  Eigen::MatrixXd null_block() const { return diag_block(grid_->null_index()); }

  // The full (G k) x (G k) matrix; materializes in compact mode.
  Eigen::MatrixXd assembled() const {
    if (!compact_) return assembled_;
    const int g = size();
    Eigen::MatrixXd full(static_cast<long>(g) * k_, static_cast<long>(g) * k_);
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < g; ++j)
        full.block(static_cast<long>(i) * k_, static_cast<long>(j) * k_, k_, k_) = block(i, j);
    return full;
  }

  // Compact-mode internals (for structured samplers).
  const Eigen::MatrixXd& sigma0() const {
    if (!compact_) throw std::logic_error("CovarianceField: sigma0 only in compact mode");
    return sigma0_;
  }
  const Eigen::VectorXd& angles() const {
    if (!compact_) throw std::logic_error("CovarianceField: angles only in compact mode");
    return angles_;
  }

 private:
  GridPtr grid_;
  int k_ = 0;
  double lambda_bar_ = 1e6;
  Eigen::MatrixXd assembled_;  // dense mode: (G k) x (G k)
  bool compact_ = false;
  Eigen::MatrixXd sigma0_;  // compact mode: k x k
  Eigen::VectorXd angles_;  // compact mode: G
};

struct FieldValidation {
  bool ok = false;
  double symmetry_violation = 0.0;  // max |A - A'| over the assembled matrix
  double min_diag_eig = 0.0;        // smallest eigenvalue across diagonal blocks
  double max_diag_eig = 0.0;        // largest eigenvalue across diagonal blocks
  double min_assembled_eig = 0.0;   // smallest eigenvalue of the assembled matrix
  std::string message;
};

// Structural checks on a covariance field: exact block symmetry, diagonal
// block spectra inside [1/lambda_bar, lambda_bar], and positive
// semidefiniteness of the assembled matrix within tolerance. check_assembled
// can be disabled for very large grids where the dense eigensolve is the
// dominant cost.
inline FieldValidation validate_field(const CovarianceField& field, double psd_tol = 1e-8,
                                      bool check_assembled = true) {
  FieldValidation v;
  const int g = field.size();
  const int k = field.k();

  v.min_diag_eig = std::numeric_limits<double>::infinity();
  v.max_diag_eig = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < g; ++i) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(field.diag_block(i), Eigen::EigenvaluesOnly);
    v.min_diag_eig = std::min(v.min_diag_eig, es.eigenvalues().minCoeff());
    v.max_diag_eig = std::max(v.max_diag_eig, es.eigenvalues().maxCoeff());
  }

  bool psd_ok = true;
  if (field.compact()) {
    // cos(a_i - a_j) is a Gram matrix, so the assembled field is PSD whenever
    // sigma0 is; reuse the diagonal-block spectrum (all diagonal blocks equal
    // sigma0 up to the cosine factor 1).
    v.symmetry_violation = 0.0;
    v.min_assembled_eig = std::min(0.0, v.min_diag_eig);
    psd_ok = v.min_diag_eig >= -psd_tol * std::max(1.0, std::abs(v.max_diag_eig));
  } else {
    const Eigen::MatrixXd& a = field.assembled();
    v.symmetry_violation = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (check_assembled) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
      v.min_assembled_eig = es.eigenvalues().minCoeff();
      const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
      psd_ok = v.min_assembled_eig >= -psd_tol * std::max(1.0, lmax);
    } else {
      v.min_assembled_eig = std::numeric_limits<double>::quiet_NaN();
    }
  }

  const bool sym_ok = v.symmetry_violation == 0.0;
  const bool diag_ok =
      v.min_diag_eig >= 1.0 / field.lambda_bar() && v.max_diag_eig <= field.lambda_bar();
  v.ok = sym_ok && diag_ok && psd_ok;
  if (!sym_ok)
    v.message = "assembled matrix is not exactly symmetric";
  else if (!diag_ok)
    v.message = "diagonal block spectrum outside [1/lambda_bar, lambda_bar]";
  else if (!psd_ok)
    v.message = "assembled matrix is not positive semidefinite within tolerance";
  return v;
}

}  // namespace condinf
