#pragma once

#include <cstdint>
#include <string>

#include "maskrank/types.hpp"

namespace maskrank::verify {

struct GradCheckReport {
  std::string target;
  int trials = 0;
  double tolerance = 0.0;
  double max_rel_err = 0.0;
  bool pass = false;
};

/// max over entries of |a - f| / max(|a|, |f|, 1e-6).
double relative_error(const Matrix& analytic, const Matrix& fd);

/// Runs `trials` randomized comparisons of reverse-mode gradients against
/// the central-difference oracle. Targets: npair, ranking, ranking_full,
/// triplet, softmax, encoder. Loss targets differentiate the composition
/// raw-rows -> l2-normalize -> loss, so the oracle perturbs freely;
/// configurations near a selection tie, relu kink or clip threshold are
/// resampled before comparing.
GradCheckReport grad_check(const std::string& target, int trials,
                           double tolerance, std::uint64_t seed = 7);

}  // namespace maskrank::verify
