#pragma once
// Value types shared across the library: moment processes and mean functions
// on a grid, the conditionally sufficient h-process, and test outputs.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "condinf/grid.hpp"

namespace condinf {

// Normalized sample moment process: row i holds g_T(theta_i)' (1 x k).
struct MomentProcess {
  GridPtr grid;
  Eigen::MatrixXd values;  // G x k
  long sample_size = 0;    // T; 0 when the process is a limit-problem draw

  MomentProcess() = default;
  MomentProcess(GridPtr g, Eigen::MatrixXd v, long t = 0)
      : grid(std::move(g)), values(std::move(v)), sample_size(t) {
    if (!grid) throw std::invalid_argument("MomentProcess: null grid");
    if (values.rows() != grid->size())
      throw std::invalid_argument("MomentProcess: one row per grid point required");
    if (!values.allFinite()) throw std::invalid_argument("MomentProcess: non-finite values");
  }

  int k() const { return static_cast<int>(values.cols()); }
  Eigen::VectorXd at(int i) const { return values.row(i).transpose(); }
  Eigen::VectorXd at_null() const { return at(grid->null_index()); }
};

// Deterministic drift m_T(theta_i) of a limit experiment; same layout.
struct MeanFunction {
  GridPtr grid;
  Eigen::MatrixXd values;  // G x k

  MeanFunction() = default;
  MeanFunction(GridPtr g, Eigen::MatrixXd v) : grid(std::move(g)), values(std::move(v)) {
    if (!grid) throw std::invalid_argument("MeanFunction: null grid");
    if (values.rows() != grid->size())
      throw std::invalid_argument("MeanFunction: one row per grid point required");
    if (!values.allFinite()) throw std::invalid_argument("MeanFunction: non-finite values");
  }
};

// The sufficient residual process h(theta_i) = g(theta_i) - V_i g(theta_0)
// together with the projection coefficients V_i; h is independent of g(theta_0)
// under the null in the Gaussian limit, which is what conditional critical
// values exploit.
struct HProcess {
  GridPtr grid;
  Eigen::MatrixXd values;             // G x k, row at the null is exactly zero
  std::vector<Eigen::MatrixXd> v;     // G coefficient matrices, each k x k
  bool degraded = false;              // a ridged/clipped solve occurred

  int k() const { return static_cast<int>(values.cols()); }
  Eigen::VectorXd at(int i) const { return values.row(i).transpose(); }
};

struct TestResult {
  std::string statistic_name;
  double statistic = 0.0;
  double critical_value = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double alpha = 0.0;
  int n_draws = 0;
  bool degraded = false;
};

struct ConfidenceSet {
  GridPtr grid;
  std::vector<char> accepted;  // one flag per grid point
  double level = 0.0;          // 1 - alpha
  std::vector<char> failed;    // points skipped because of numerical failure

  double accepted_fraction() const {
    if (accepted.empty()) return 0.0;
    long n = 0;
    for (char a : accepted) n += (a != 0);
    return static_cast<double>(n) / static_cast<double>(accepted.size());
  }
};

}  // namespace condinf
