#pragma once

#include <string>
#include <vector>

#include "maskrank/eval/feature_set.hpp"

namespace maskrank::eval {

struct EvalReport {
  // cmc[r] = fraction of evaluated queries whose first correct match sits
  // at rank <= r+1. Length equals the gallery size; the curve saturates
  // once every query has matched.
  std::vector<double> cmc;
  double map = 0.0;
  std::vector<double> per_query;  // average precision, query order
  int skipped = 0;                // queries with no valid match left

  double rank_k(int k) const;  // cmc at rank k (1-based), saturating
};

/// Gallery indices sorted by descending dot-product similarity to the
/// query; ties broken by ascending gallery index.
std::vector<int> rank_gallery(const Vector& query, const FeatureSet& gallery);

/// Standard protocol: per query, gallery entries sharing both identity and
/// camera are excluded; queries with no remaining correct match are skipped
/// and counted. Throws InsufficientDataError when nothing is evaluable.
/// Honors MASKRANK_THREADS (default 1); results are thread-count invariant.
EvalReport evaluate_single_query(const FeatureSet& queries,
                                 const FeatureSet& gallery);

enum class PoolMode { kMean, kMax };

/// Pools one identity-camera group of unit vectors into a single unit
/// vector: element-wise mean (or max, behind the flag), then normalized.
Vector multi_query_pool(const std::vector<Vector>& group,
                        PoolMode mode = PoolMode::kMean);

/// Groups queries by (identity, camera) in first-appearance order, pools
/// each group, then evaluates the pooled queries as above.
EvalReport evaluate_multi_query(const FeatureSet& queries,
                                const FeatureSet& gallery,
                                PoolMode mode = PoolMode::kMean);

/// {"rank1": ..., "rank5": ..., "rank10": ..., "map": ..., "cmc": [...],
///  "skipped": ...} rendered as a JSON object string.
std::string report_to_json(const EvalReport& report);

}  // namespace maskrank::eval
