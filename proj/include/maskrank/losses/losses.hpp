#pragma once

#include <span>

#include "maskrank/diff/tape.hpp"
#include "maskrank/losses/batch.hpp"

namespace maskrank::losses {

/// Dot-product similarity of two unit vectors. Rejects inputs whose norm
/// deviates from 1 by more than 1e-6.
double similarity(const Vector& a, const Vector& b);

// ---------------------------------------------------------------------------
// Tape builders. `rows` holds one unit-norm embedding node per batch row
// (either parameter leaves or the outputs of an encoder on the same tape);
// the returned node is the scalar loss. Summations run in ascending row
// order with plain sequential accumulation, so values are bit-reproducible.
// ---------------------------------------------------------------------------

diff::NodeId append_npair_loss(diff::Tape& tape,
                               std::span<const diff::NodeId> rows,
                               const RankingBatch& rb);

/// The exact double loop over positive x negative pairs. Reference form,
/// O(|positives| * |negatives|) by construction.
diff::NodeId append_ranking_loss_full(diff::Tape& tape,
                                      std::span<const diff::NodeId> rows,
                                      const RankingBatch& rb);

/// Practical ranking loss: the most dissimilar positive is the reference
/// (argmin by value, lowest index on ties, subgradient routed through the
/// selected row), negatives pass through the strict t > 1 gate, and the
/// regularizer pulls every positive similarity toward 1.
diff::NodeId append_ranking_loss(diff::Tape& tape,
                                 std::span<const diff::NodeId> rows,
                                 const RankingBatch& rb,
                                 const LossParams& params);

/// Batch-hard triplet in similarity form: per anchor, the most similar
/// negative and least similar positive form the triplet. Anchors whose
/// identity has no positive (or no negative) are skipped; all skipped is
/// an error. Mean over the surviving anchors.
diff::NodeId append_triplet_loss_hard(diff::Tape& tape,
                                      std::span<const diff::NodeId> rows,
                                      std::span<const int> identity,
                                      double margin);

diff::NodeId append_softmax_ce(diff::Tape& tape, diff::NodeId logits,
                               int label);

/// Mean of the practical ranking loss over every row whose identity has
/// at least one other row in the batch, each serving as anchor once with
/// its remaining same-identity rows as positives and all other rows as
/// negatives.
diff::NodeId append_batch_ranking_loss(diff::Tape& tape,
                                       std::span<const diff::NodeId> rows,
                                       std::span<const int> identity,
                                       const LossParams& params);

/// N-pair training reduction over a batch: each multi-image-identity row
/// anchors once, paired with the cyclically next row of its identity as
/// the single positive; all other identities are the negatives. Mean over
/// anchors.
diff::NodeId append_batch_npair_loss(diff::Tape& tape,
                                     std::span<const diff::NodeId> rows,
                                     std::span<const int> identity);

// ---------------------------------------------------------------------------
// Standalone operations: validate, evaluate, differentiate. Gradients in
// the result are w.r.t. the batch feature matrix (same shape), rows not
// participating hold zero; softmax_ce gradients are w.r.t. the logits.
// ---------------------------------------------------------------------------

LossValue npair_loss(const EmbeddingBatch& batch, const RankingBatch& rb);
LossValue ranking_loss_full(const EmbeddingBatch& batch,
                            const RankingBatch& rb);
LossValue ranking_loss(const EmbeddingBatch& batch, const RankingBatch& rb,
                       const LossParams& params);
LossValue triplet_loss_hard(const EmbeddingBatch& batch, double margin);
LossValue softmax_ce(const Vector& logits, int label);
LossValue batch_ranking_loss(const EmbeddingBatch& batch,
                             const LossParams& params);

}  // namespace maskrank::losses
