#pragma once

#include <cmath>
#include <algorithm>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace realface::testing {

/// f(x) = 0.5 x'Ax - b'x with A symmetric positive definite.
struct Quadratic {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  double operator()(const Eigen::VectorXd& x) const { return 0.5 * x.dot(A * x) - b.dot(x); }
};

struct BoxMinimum {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
};

/// Exact box-constrained minimum by enumerating every active set: each
/// coordinate is free, at its lower bound or at its upper bound (3^k faces).
/// The constrained optimum is the unconstrained minimiser of one face, so the
/// best feasible face minimiser is the answer.
inline BoxMinimum box_minimum(const Quadratic& q, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const Eigen::Index k = q.b.size();
  long faces = 1;
  for (Eigen::Index i = 0; i < k; ++i) faces *= 3;
  BoxMinimum best;
  for (long code = 0; code < faces; ++code) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
    std::vector<Eigen::Index> free;
    long c = code;
    for (Eigen::Index i = 0; i < k; ++i, c /= 3) {
      if (c % 3 == 0) free.push_back(i);
      else x[i] = (c % 3 == 1) ? lo[i] : hi[i];
    }
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd Aff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (Eigen::Index r = 0; r < nf; ++r) {
        rhs[r] = q.b[free[r]];
        for (Eigen::Index j = 0; j < k; ++j) {
          const bool is_free = std::find(free.begin(), free.end(), j) != free.end();
          if (!is_free) rhs[r] -= q.A(free[r], j) * x[j];
        }
        for (Eigen::Index s = 0; s < nf; ++s) Aff(r, s) = q.A(free[r], free[s]);
      }
      const Eigen::VectorXd xf = Aff.ldlt().solve(rhs);
      for (Eigen::Index r = 0; r < nf; ++r) x[free[r]] = xf[r];
    }
    if (((x - lo).array() < -1e-12).any() || ((x - hi).array() > 1e-12).any()) continue;
    const double v = q(x);
    if (v < best.value) best = {x, v};
  }
  return best;
}

}  // namespace realface::testing
