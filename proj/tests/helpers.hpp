#pragma once

// Shared constructors for test inputs. The embedding constructions give
// exact prescribed anchor similarities: the anchor is e0 and row i lives in
// the span of e0 and its own private axis, so the dot product with the
// anchor reproduces the requested value to the last bit.

#include <cmath>
#include <vector>

#include "maskrank/losses/batch.hpp"
#include "maskrank/rng.hpp"
#include "maskrank/types.hpp"

namespace helpers {

struct AnchoredBatch {
  maskrank::losses::EmbeddingBatch batch;
  maskrank::losses::RankingBatch rb;
};

// Rows: anchor (identity 0), then positives (identity 0) with the given
// anchor similarities, then negatives (identities 1, 2, ...) likewise.
inline AnchoredBatch anchored_batch(const std::vector<double>& pos_sims,
                                    const std::vector<double>& neg_sims) {
  const int n = 1 + static_cast<int>(pos_sims.size() + neg_sims.size());
  maskrank::Matrix rows = maskrank::Matrix::Zero(n, n);
  rows(0, 0) = 1.0;
  std::vector<int> identity(static_cast<std::size_t>(n), 0);
  std::vector<int> pos, neg;
  int row = 1;
  for (double s : pos_sims) {
    rows(row, 0) = s;
    rows(row, row) = std::sqrt(1.0 - s * s);
    pos.push_back(row);
    ++row;
  }
  for (double s : neg_sims) {
    rows(row, 0) = s;
    rows(row, row) = std::sqrt(1.0 - s * s);
    identity[static_cast<std::size_t>(row)] = row;  // distinct identities
    neg.push_back(row);
    ++row;
  }
  return AnchoredBatch{
      maskrank::losses::EmbeddingBatch(std::move(rows), std::move(identity)),
      maskrank::losses::RankingBatch(0, std::move(pos), std::move(neg))};
}

inline maskrank::Matrix random_unit_rows(int n, int d, maskrank::Rng& rng) {
  maskrank::Matrix m(n, d);
  for (int i = 0; i < n; ++i) {
    double norm2 = 0.0;
    do {
      for (int j = 0; j < d; ++j) m(i, j) = rng.gaussian();
      norm2 = m.row(i).squaredNorm();
    } while (norm2 < 1e-12);
    m.row(i) /= std::sqrt(norm2);
  }
  return m;
}

}  // namespace helpers
