#include "maskrank/diff/finite_diff.hpp"

#include <cmath>

namespace maskrank::diff {

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f,
                        const Matrix& x, double h) {
  if (!(h > 0.0)) throw OracleError("finite_diff_grad: step size must be > 0");
  Matrix probe = x;
  Matrix grad(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double saved = probe(i, j);
      probe(i, j) = saved + h;
      const double plus = f(probe);
      probe(i, j) = saved - h;
      const double minus = f(probe);
      probe(i, j) = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus))
        throw OracleError("finite_diff_grad: non-finite evaluation");
      grad(i, j) = (plus - minus) / (2.0 * h);
    }
  }
  return grad;
}

}  // namespace maskrank::diff
