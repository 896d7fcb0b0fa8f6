#pragma once

// Rectangular linear assignment (Kuhn-Munkres with potentials, O(n^2 m)).
// Shared by the single-camera frame tracker and the identity matching in the
// evaluator.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace mtmct {

struct Assignment {
  std::vector<int> row_to_col;  // -1 when the row stays unassigned
  std::vector<int> col_to_row;
  double total_cost = 0.0;  // sum over assigned pairs, in row order
};

/// Minimum-cost assignment of min(rows, cols) pairs. Entries equal to +inf are
/// forbidden: the solver first maximizes the number of allowed pairs and then
/// minimizes their cost; forbidden pairs it is forced into are dropped.
inline Assignment solve_assignment(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  Assignment out;
  out.row_to_col.assign(rows, -1);
  out.col_to_row.assign(cols, -1);
  if (rows == 0 || cols == 0) return out;

  const bool transposed = rows > cols;
  const int n = transposed ? cols : rows;
  const int m = transposed ? rows : cols;
  auto raw = [&](int r, int c) { return transposed ? cost(c, r) : cost(r, c); };

  double span = 0.0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c)
      if (std::isfinite(raw(r, c))) span = std::max(span, std::abs(raw(r, c)));
  const double forbidden = (span + 1.0) * (n + 1) * 2.0;
  auto a = [&](int r, int c) {
    const double v = raw(r, c);
    return std::isfinite(v) ? v : forbidden;
  };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= m; ++j) {
    const int i = p[j];
    if (i == 0) continue;
    const int r = transposed ? j - 1 : i - 1;
    const int c = transposed ? i - 1 : j - 1;
    if (!std::isfinite(cost(r, c))) continue;
    out.row_to_col[r] = c;
    out.col_to_row[c] = r;
  }
  for (int r = 0; r < rows; ++r)
    if (out.row_to_col[r] >= 0) out.total_cost += cost(r, out.row_to_col[r]);
  return out;
}

}  // namespace mtmct
