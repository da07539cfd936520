#pragma once
// Finite evaluation grid for the structural parameter, with a designated null
// point. Every process, covariance field and statistic in this library is
// indexed by positions in one of these grids.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace condinf {

class ParamGrid {
 public:
  // points: G x q, one parameter value per row; null_index selects the row
  // hosting the hypothesized value.
  ParamGrid(Eigen::MatrixXd points, int null_index)
      : pts_(std::move(points)), null_(null_index) {
    if (pts_.rows() < 1 || pts_.cols() < 1)
      throw std::invalid_argument("ParamGrid: grid must contain at least one point");
    if (!pts_.allFinite()) throw std::invalid_argument("ParamGrid: non-finite grid point");
    if (null_ < 0 || null_ >= pts_.rows())
      throw std::invalid_argument("ParamGrid: null_index out of range");
    check_distinct();
  }

  int size() const { return static_cast<int>(pts_.rows()); }
  int dim() const { return static_cast<int>(pts_.cols()); }
  int null_index() const { return null_; }
  const Eigen::MatrixXd& points() const { return pts_; }
  Eigen::VectorXd point(int i) const { return pts_.row(i).transpose(); }
  Eigen::VectorXd null_point() const { return pts_.row(null_).transpose(); }

  // Same points, different hypothesized value; used when inverting a test.
  ParamGrid with_null(int null_index) const { return ParamGrid(pts_, null_index); }

  // Row-major product grid over per-coordinate axes (last axis fastest).
  // The null point must coincide with an axis combination exactly.
  static ParamGrid product(const std::vector<Eigen::VectorXd>& axes,
                           const Eigen::VectorXd& null_point) {
    if (axes.empty()) throw std::invalid_argument("ParamGrid: no axes");
    const int q = static_cast<int>(axes.size());
    if (null_point.size() != q)
      throw std::invalid_argument("ParamGrid: null point dimension mismatch");
    long total = 1;
    for (const auto& a : axes) {
      if (a.size() < 1) throw std::invalid_argument("ParamGrid: empty axis");
      total *= a.size();
    }
    Eigen::MatrixXd pts(total, q);
    std::vector<long> idx(q, 0);
    for (long r = 0; r < total; ++r) {
      for (int j = 0; j < q; ++j) pts(r, j) = axes[j](idx[j]);
      for (int j = q - 1; j >= 0; --j) {
        if (++idx[j] < axes[j].size()) break;
        idx[j] = 0;
      }
    }
    int null_index = -1;
    for (long r = 0; r < total; ++r) {
      if ((pts.row(r).transpose() - null_point).cwiseAbs().maxCoeff() == 0.0) {
        null_index = static_cast<int>(r);
        break;
      }
    }
    if (null_index < 0)
      throw std::invalid_argument("ParamGrid: null point is not on the product grid");
    return ParamGrid(std::move(pts), null_index);
  }

  static Eigen::VectorXd linspace(double lo, double hi, int n) {
    if (n < 1) throw std::invalid_argument("ParamGrid: linspace needs n >= 1");
    if (n == 1) return Eigen::VectorXd::Constant(1, lo);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    return v;
  }

 private:
  void check_distinct() const {
    const long g = pts_.rows();
    std::vector<int> order(g);
    std::iota(order.begin(), order.end(), 0);
    auto lex_less = [&](int a, int b) {
      for (int j = 0; j < pts_.cols(); ++j) {
        if (pts_(a, j) != pts_(b, j)) return pts_(a, j) < pts_(b, j);
      }
      return false;
    };
    std::sort(order.begin(), order.end(), lex_less);
    for (long i = 1; i < g; ++i) {
      if (pts_.row(order[i - 1]) == pts_.row(order[i]))
        throw std::invalid_argument("ParamGrid: duplicate grid points");
    }
  }

  Eigen::MatrixXd pts_;  // G x q
  int null_;
};

using GridPtr = std::shared_ptr<const ParamGrid>;

inline GridPtr make_grid(Eigen::MatrixXd points, int null_index) {
  return std::make_shared<const ParamGrid>(std::move(points), null_index);
}

// Finite-difference stencil: for each parameter coordinate a pair of grid
// indices straddling (or one-sidedly adjacent to) the null point, used to
// differentiate processes defined on the grid.
struct Stencil {
  std::vector<int> plus;   // index of the point above the null, -1 if absent
  std::vector<int> minus;  // index of the point below the null, -1 if absent

  // Detects per-coordinate neighbours: points differing from the null point in
  // exactly one coordinate, nearest on each side.
  static Stencil detect(const ParamGrid& grid) {
    const int q = grid.dim();
    const Eigen::VectorXd t0 = grid.null_point();
    Stencil st;
    st.plus.assign(q, -1);
    st.minus.assign(q, -1);
    std::vector<double> dplus(q, 0.0), dminus(q, 0.0);
    for (int i = 0; i < grid.size(); ++i) {
      if (i == grid.null_index()) continue;
      const Eigen::VectorXd d = grid.point(i) - t0;
      int moved = -1;
      bool single = true;
      for (int j = 0; j < q; ++j) {
        if (d(j) != 0.0) {
          if (moved >= 0) {
            single = false;
            break;
          }
          moved = j;
        }
      }
      if (!single || moved < 0) continue;
      const double step = d(moved);
      if (step > 0.0 && (st.plus[moved] < 0 || step < dplus[moved])) {
        st.plus[moved] = i;
        dplus[moved] = step;
      } else if (step < 0.0 && (st.minus[moved] < 0 || -step < dminus[moved])) {
        st.minus[moved] = i;
        dminus[moved] = -step;
      }
    }
    for (int j = 0; j < q; ++j) {
      if (st.plus[j] < 0 && st.minus[j] < 0)
        throw std::invalid_argument("Stencil: no neighbour of the null point in coordinate " +
                                    std::to_string(j));
    }
    return st;
  }
};

// Grid serialization: a comment header carrying the null index followed by one
// CSV row per grid point.
inline void save_grid(const ParamGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("save_grid: cannot open " + path);
  out << "# null_index=" << grid.null_index() << "\n";
  char buf[64];
  for (int i = 0; i < grid.size(); ++i) {
    for (int j = 0; j < grid.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", grid.points()(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
}

inline ParamGrid load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_grid: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# null_index=", 0) != 0)
    throw std::invalid_argument("load_grid: missing '# null_index=' header");
  const int null_index = std::stoi(line.substr(std::string("# null_index=").size()));
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("load_grid: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("load_grid: no grid points");
  Eigen::MatrixXd pts(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j) pts(i, j) = rows[i][j];
  return ParamGrid(std::move(pts), null_index);
}

}  // namespace condinf
