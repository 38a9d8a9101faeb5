#include "maskrank/losses/batch.hpp"

#include <algorithm>
#include <string>

namespace maskrank::losses {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace

EmbeddingBatch::EmbeddingBatch(Matrix features, std::vector<int> identity,
                               std::vector<int> camera)
    : features_(std::move(features)),
      identity_(std::move(identity)),
      camera_(std::move(camera)) {
  require(features_.rows() >= 2, "EmbeddingBatch: needs at least two rows");
  require(static_cast<Index>(identity_.size()) == features_.rows(),
          "EmbeddingBatch: one identity label per row");
  require(camera_.empty() ||
              static_cast<Index>(camera_.size()) == features_.rows(),
          "EmbeddingBatch: camera labels must be absent or one per row");
  for (Index i = 0; i < features_.rows(); ++i) {
    const double norm = features_.row(i).norm();
    require(std::abs(norm - 1.0) <= kRowNormTolerance,
            "EmbeddingBatch: row " + std::to_string(i) +
                " is not unit-norm (norm=" + std::to_string(norm) + ")");
  }
}

RankingBatch::RankingBatch(int anchor, std::vector<int> positives,
                           std::vector<int> negatives)
    : anchor_(anchor),
      positives_(std::move(positives)),
      negatives_(std::move(negatives)) {
  require(anchor_ >= 0, "RankingBatch: anchor must be non-negative");
  std::sort(positives_.begin(), positives_.end());
  std::sort(negatives_.begin(), negatives_.end());
  require(std::adjacent_find(positives_.begin(), positives_.end()) ==
              positives_.end(),
          "RankingBatch: duplicate positive index");
  require(std::adjacent_find(negatives_.begin(), negatives_.end()) ==
              negatives_.end(),
          "RankingBatch: duplicate negative index");
  require(!std::binary_search(positives_.begin(), positives_.end(), anchor_),
          "RankingBatch: anchor must not appear among positives");
  require(!std::binary_search(negatives_.begin(), negatives_.end(), anchor_),
          "RankingBatch: anchor must not appear among negatives");
  std::vector<int> overlap;
  std::set_intersection(positives_.begin(), positives_.end(),
                        negatives_.begin(), negatives_.end(),
                        std::back_inserter(overlap));
  require(overlap.empty(),
          "RankingBatch: positive and negative sets must be disjoint");
}

void RankingBatch::validate_against(const EmbeddingBatch& batch) const {
  const int n = static_cast<int>(batch.size());
  require(anchor_ < n, "RankingBatch: anchor out of range");
  const int anchor_id = batch.identity()[anchor_];
  for (int p : positives_) {
    require(p >= 0 && p < n, "RankingBatch: positive index out of range");
    require(batch.identity()[p] == anchor_id,
            "RankingBatch: positive row has a different identity");
  }
  for (int g : negatives_) {
    require(g >= 0 && g < n, "RankingBatch: negative index out of range");
    require(batch.identity()[g] != anchor_id,
            "RankingBatch: negative row shares the anchor identity");
  }
}

RankingBatch ranking_batch_for_anchor(const EmbeddingBatch& batch,
                                      int anchor) {
  const int n = static_cast<int>(batch.size());
  require(anchor >= 0 && anchor < n,
          "ranking_batch_for_anchor: anchor out of range");
  std::vector<int> positives;
  std::vector<int> negatives;
  const int anchor_id = batch.identity()[anchor];
  for (int i = 0; i < n; ++i) {
    if (i == anchor) continue;
    if (batch.identity()[i] == anchor_id)
      positives.push_back(i);
    else
      negatives.push_back(i);
  }
  return RankingBatch(anchor, std::move(positives), std::move(negatives));
}

LossParams::LossParams(double alpha_in, double lambda_in)
    : alpha(alpha_in), lambda(lambda_in) {
  require(alpha >= 0.0 && alpha <= 2.0,
          "LossParams: alpha must lie in [0, 2] (unit-vector similarities "
          "span [-1, 1])");
  require(lambda >= 0.0, "LossParams: lambda must be non-negative");
}

}  // namespace maskrank::losses
