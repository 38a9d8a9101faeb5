#include "maskrank/eval/feature_set.hpp"

#include <cmath>

namespace maskrank::eval {

FeatureSet::FeatureSet(Matrix features, std::vector<std::string> identity,
                       std::vector<std::string> camera)
    : features_(std::move(features)),
      identity_(std::move(identity)),
      camera_(std::move(camera)) {
  if (static_cast<Index>(identity_.size()) != features_.rows() ||
      static_cast<Index>(camera_.size()) != features_.rows())
    throw ContractError("FeatureSet: one identity and camera label per row");
  for (Index i = 0; i < features_.rows(); ++i) {
    const double norm = features_.row(i).norm();
    if (std::abs(norm - 1.0) > kRowNormTolerance)
      throw ContractError("FeatureSet: row " + std::to_string(i) +
                          " is not unit-norm (norm=" + std::to_string(norm) +
                          ")");
  }
}

}  // namespace maskrank::eval
