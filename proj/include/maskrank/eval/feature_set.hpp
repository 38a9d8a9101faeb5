#pragma once

#include <string>
#include <vector>

#include "maskrank/types.hpp"

namespace maskrank::eval {

// Extracted features with their labels: one unit-norm row per image.
// n = 0 is allowed (an empty set still round-trips through the file
// format); evaluation entry points impose their own minimums.
class FeatureSet {
 public:
  FeatureSet() = default;
  FeatureSet(Matrix features, std::vector<std::string> identity,
             std::vector<std::string> camera);

  const Matrix& features() const { return features_; }
  const std::vector<std::string>& identity() const { return identity_; }
  const std::vector<std::string>& camera() const { return camera_; }
  Index size() const { return features_.rows(); }
  Index dim() const { return features_.cols(); }
  Vector row(Index i) const { return features_.row(i).transpose(); }

  static constexpr double kRowNormTolerance = 1e-6;

 private:
  Matrix features_;
  std::vector<std::string> identity_;
  std::vector<std::string> camera_;
};

}  // namespace maskrank::eval
