#pragma once

#include <functional>

#include "maskrank/types.hpp"

namespace maskrank::diff {

/// Central-difference gradient of a scalar function, coefficient by
/// coefficient: (f(x + h e_i) - f(x - h e_i)) / (2h). The numerical oracle
/// against which every reverse-mode gradient in this library is checked.
/// Throws OracleError if f evaluates to a non-finite value.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f,
                        const Matrix& x, double h = 1e-5);

}  // namespace maskrank::diff
