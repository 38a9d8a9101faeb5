#pragma once

#include <vector>

#include "maskrank/types.hpp"

namespace maskrank::losses {

// A batch of unit-norm embeddings with identity (and optionally camera)
// labels, one feature per row. The universe every loss and retrieval
// metric operates over.
class EmbeddingBatch {
 public:
  /// Validates: at least two rows, every row unit-norm within 1e-8,
  /// one identity label per row (and one camera label per row if given).
  EmbeddingBatch(Matrix features, std::vector<int> identity,
                 std::vector<int> camera = {});

  const Matrix& features() const { return features_; }
  const std::vector<int>& identity() const { return identity_; }
  const std::vector<int>& camera() const { return camera_; }
  Index size() const { return features_.rows(); }
  Index dim() const { return features_.cols(); }
  Vector row(int i) const { return features_.row(i).transpose(); }

  static constexpr double kRowNormTolerance = 1e-8;

 private:
  Matrix features_;
  std::vector<int> identity_;
  std::vector<int> camera_;
};

// Index structure splitting a batch around one anchor row: the positive
// set (same identity, anchor excluded) and the negative set (other
// identities). Both sets are normalized to ascending row order on
// construction, so losses sum in a fixed pairwise-reduction order no
// matter how the caller listed the indices.
class RankingBatch {
 public:
  RankingBatch(int anchor, std::vector<int> positives,
               std::vector<int> negatives);

  int anchor() const { return anchor_; }
  const std::vector<int>& positives() const { return positives_; }
  const std::vector<int>& negatives() const { return negatives_; }

  /// Checks this index structure against a concrete batch: indices in
  /// range, positives share the anchor's identity, negatives do not.
  void validate_against(const EmbeddingBatch& batch) const;

 private:
  int anchor_;
  std::vector<int> positives_;
  std::vector<int> negatives_;
};

/// Derives the ranking structure for one anchor row from the batch labels:
/// positives are all other rows with the anchor's identity, negatives all
/// remaining rows, both ascending.
RankingBatch ranking_batch_for_anchor(const EmbeddingBatch& batch, int anchor);

/// Margin and balance weight of the practical ranking loss.
struct LossParams {
  double alpha = 0.2;
  double lambda = 1.0;

  LossParams() = default;
  LossParams(double alpha_in, double lambda_in);
};

/// A loss evaluation: the non-negative scalar and its gradients w.r.t.
/// the inputs the standalone operation was given (the full feature matrix
/// for batch losses, the logit vector for softmax cross-entropy).
struct LossValue {
  double value = 0.0;
  Matrix grads;
};

}  // namespace maskrank::losses
