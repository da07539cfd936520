#pragma once
// Symmetric positive definite solves with an explicit conditioning policy:
// a matrix whose smallest eigenvalue falls below a relative floor is ridged
// before factorization and the result is flagged as degraded rather than
// silently returned.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace condinf {

// Raised for runtime numerical failures (as opposed to invalid inputs).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Factor-once, solve-many wrapper around LDLT with the ridge policy.
class SpdFactor {
 public:
  explicit SpdFactor(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("solve_spd: matrix not square");
    if (!a.allFinite()) throw std::invalid_argument("solve_spd: non-finite matrix");
    const int k = static_cast<int>(a.rows());
    const double tr = a.trace();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    const double min_eig = es.eigenvalues().minCoeff();
    if (!(min_eig >= 1e-10 * tr / k)) {
      // Near-singular (or trace not positive): stabilize and flag.
      ridge_ = (tr > 0.0) ? 1e-8 * tr / k : 1e-8;
      degraded_ = true;
    }
    Eigen::MatrixXd work = a;
    if (ridge_ > 0.0) work.diagonal().array() += ridge_;
    ldlt_.compute(work);
    if (ldlt_.info() != Eigen::Success || !ldlt_.isPositive()) {
      // Last resort: clip the spectrum and solve through the eigenbasis.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full(work);
      const double lmax = full.eigenvalues().cwiseAbs().maxCoeff();
      clipped_inv_ = full.eigenvectors() *
                     (full.eigenvalues().array() > 1e-14 * std::max(1.0, lmax))
                         .select(full.eigenvalues().array().inverse(), 0.0)
                         .matrix()
                         .asDiagonal() *
                     full.eigenvectors().transpose();
      use_clip_ = true;
      degraded_ = true;
    }
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const {
    if (use_clip_) return clipped_inv_ * b;
    return ldlt_.solve(b);
  }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    if (use_clip_) return clipped_inv_ * b;
    return ldlt_.solve(b);
  }

  bool degraded() const { return degraded_; }
  double ridge() const { return ridge_; }

 private:
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  Eigen::MatrixXd clipped_inv_;
  bool use_clip_ = false;
  bool degraded_ = false;
  double ridge_ = 0.0;
};

struct SpdSolveResult {
  Eigen::MatrixXd solution;
  bool degraded = false;
  double ridge = 0.0;
};

// Solves a X = b for symmetric positive (semi)definite a.
inline SpdSolveResult solve_spd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("solve_spd: dimension mismatch");
  if (!b.allFinite()) throw std::invalid_argument("solve_spd: non-finite right-hand side");
  SpdFactor f(a);
  return SpdSolveResult{f.solve(b), f.degraded(), f.ridge()};
}

// Symmetric square root of a positive semidefinite matrix; negative
// eigenvalues from rounding are clipped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("psd_sqrt: matrix not square");
  if (!a.allFinite()) throw std::invalid_argument("psd_sqrt: non-finite matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace condinf
