#pragma once

#include <map>
#include <vector>

#include "maskrank/losses/batch.hpp"
#include "maskrank/rng.hpp"
#include "maskrank/types.hpp"

namespace maskrank::sampling {

// Lookup structure over a training split: which image records belong to
// which identity. Records are appended in dataset order, so the per-identity
// image lists ascend and the whole structure is deterministic.
class DatasetIndex {
 public:
  DatasetIndex() = default;

  /// Appends the next record (record indices run 0, 1, 2, ... in call order).
  void add(int identity, int camera);

  int size() const { return static_cast<int>(identity_.size()); }
  int identity_of(int record) const { return identity_.at(record); }
  int camera_of(int record) const { return camera_.at(record); }

  /// Image record indices of one identity, ascending. Empty if unknown.
  const std::vector<int>& images_of(int identity) const;

  /// All identities present, ascending.
  std::vector<int> identities() const;

 private:
  std::vector<int> identity_;
  std::vector<int> camera_;
  std::map<int, std::vector<int>> by_identity_;
};

// Batch shape: one anchor identity contributes `positives` rows, the rest
// of the batch is one image each from `negatives` distinct other identities.
struct BatchSpec {
  int positives = 10;
  int negatives = 54;

  BatchSpec() = default;
  BatchSpec(int positives_in, int negatives_in);

  int batch_size() const { return positives + negatives; }
};

// One sampled batch. Rows 0..p-1 hold the anchor identity's images (row 0
// is the anchor), rows p.. hold the negatives; `structure` indexes into
// that layout and `records` maps each row back to its dataset record.
struct SampledBatch {
  losses::RankingBatch structure;
  std::vector<int> records;
  std::vector<int> identity;
  std::vector<int> camera;
};

/// Identities usable as the anchor identity: those with at least two
/// images (a single image cannot form a positive pair). Ascending order.
std::vector<int> eligible_identities(const DatasetIndex& index);

/// Draws one batch: a uniformly chosen eligible identity supplies
/// min(spec.positives, k) images without replacement; the remaining rows
/// come from that many distinct other identities, one uniformly chosen
/// image each. Throws InsufficientDataError when the index cannot supply
/// the negatives (or has no eligible identity).
SampledBatch sample_batch(const DatasetIndex& index, const BatchSpec& spec,
                          Rng& rng);

}  // namespace maskrank::sampling
