#include "maskrank/losses/losses.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace maskrank::losses {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

// One similarity node per needed pair, created lazily so repeated requests
// for the same pair share a node.
class SimCache {
 public:
  SimCache(diff::Tape& tape, std::span<const diff::NodeId> rows)
      : tape_(tape), rows_(rows), ids_(rows.size() * rows.size(), -1) {}

  diff::NodeId get(int a, int b) {
    const std::size_t k =
        static_cast<std::size_t>(a) * rows_.size() + static_cast<std::size_t>(b);
    if (ids_[k] < 0) ids_[k] = tape_.dot(rows_[a], rows_[b]);
    return ids_[k];
  }

  double value(int a, int b) { return tape_.value_scalar(get(a, b)); }

 private:
  diff::Tape& tape_;
  std::span<const diff::NodeId> rows_;
  std::vector<diff::NodeId> ids_;
};

}  // namespace

double similarity(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "similarity: dimension mismatch");
  require(std::abs(a.norm() - 1.0) <= 1e-6,
          "similarity: first argument is not unit-norm");
  require(std::abs(b.norm() - 1.0) <= 1e-6,
          "similarity: second argument is not unit-norm");
  return a.dot(b);
}

diff::NodeId append_npair_loss(diff::Tape& tape,
                               std::span<const diff::NodeId> rows,
                               const RankingBatch& rb) {
  require(rb.positives().size() == 1,
          "npair_loss: exactly one positive required");
  require(!rb.negatives().empty(), "npair_loss: at least one negative");
  SimCache sims(tape, rows);
  const diff::NodeId s_pos = sims.get(rb.anchor(), rb.positives()[0]);
  std::vector<diff::NodeId> terms;
  terms.reserve(rb.negatives().size());
  for (int j : rb.negatives())
    terms.push_back(tape.exp(tape.sub(sims.get(rb.anchor(), j), s_pos)));
  return tape.log(tape.add_const(tape.add_n(terms), 1.0));
}

diff::NodeId append_ranking_loss_full(diff::Tape& tape,
                                      std::span<const diff::NodeId> rows,
                                      const RankingBatch& rb) {
  require(!rb.positives().empty(), "ranking_loss_full: at least one positive");
  require(!rb.negatives().empty(), "ranking_loss_full: at least one negative");
  SimCache sims(tape, rows);
  std::vector<diff::NodeId> terms;
  terms.reserve(rb.positives().size() * rb.negatives().size());
  for (int i : rb.positives()) {
    const diff::NodeId s_i = sims.get(rb.anchor(), i);
    for (int j : rb.negatives())
      terms.push_back(tape.exp(tape.sub(sims.get(rb.anchor(), j), s_i)));
  }
  return tape.log(tape.add_const(tape.add_n(terms), 1.0));
}

diff::NodeId append_ranking_loss(diff::Tape& tape,
                                 std::span<const diff::NodeId> rows,
                                 const RankingBatch& rb,
                                 const LossParams& params) {
  require(!rb.positives().empty(), "ranking_loss: at least one positive");
  require(!rb.negatives().empty(), "ranking_loss: at least one negative");
  SimCache sims(tape, rows);

  // Reference positive: the least similar one. Selection happens outside
  // the tape (strict < keeps the lowest index on ties) and the subgradient
  // flows through the selected row only.
  const auto& pos = rb.positives();
  int ref = pos[0];
  double ref_value = sims.value(rb.anchor(), pos[0]);
  for (std::size_t k = 1; k < pos.size(); ++k) {
    const double v = sims.value(rb.anchor(), pos[k]);
    if (v < ref_value) {
      ref_value = v;
      ref = pos[k];
    }
  }
  const diff::NodeId s_ref = sims.get(rb.anchor(), ref);

  std::vector<diff::NodeId> gated;
  gated.reserve(rb.negatives().size());
  for (int j : rb.negatives()) {
    const diff::NodeId arg = tape.add_const(
        tape.sub(sims.get(rb.anchor(), j), s_ref), params.alpha);
    gated.push_back(tape.clip_gate(tape.exp(arg)));
  }
  const diff::NodeId hinge =
      tape.log(tape.add_const(tape.add_n(gated), 1.0));

  std::vector<diff::NodeId> squares;
  squares.reserve(pos.size());
  for (int i : pos) {
    const diff::NodeId d = tape.add_const(sims.get(rb.anchor(), i), -1.0);
    squares.push_back(tape.mul(d, d));
  }
  const diff::NodeId reg =
      tape.scale(tape.add_n(squares),
                 params.lambda / (2.0 * static_cast<double>(pos.size())));
  return tape.add(hinge, reg);
}

diff::NodeId append_triplet_loss_hard(diff::Tape& tape,
                                      std::span<const diff::NodeId> rows,
                                      std::span<const int> identity,
                                      double margin) {
  require(rows.size() == identity.size(),
          "triplet_loss_hard: one identity per row");
  require(margin >= 0.0, "triplet_loss_hard: margin must be non-negative");
  const int n = static_cast<int>(rows.size());
  SimCache sims(tape, rows);
  std::vector<diff::NodeId> terms;
  for (int a = 0; a < n; ++a) {
    // Hardest positive: least similar same-identity row. Hardest negative:
    // most similar other-identity row. Ties keep the lowest index.
    int hard_pos = -1, hard_neg = -1;
    double pos_value = 0.0, neg_value = 0.0;
    for (int i = 0; i < n; ++i) {
      if (i == a) continue;
      const double v = sims.value(a, i);
      if (identity[i] == identity[a]) {
        if (hard_pos < 0 || v < pos_value) {
          pos_value = v;
          hard_pos = i;
        }
      } else {
        if (hard_neg < 0 || v > neg_value) {
          neg_value = v;
          hard_neg = i;
        }
      }
    }
    if (hard_pos < 0 || hard_neg < 0) continue;
    terms.push_back(tape.relu(tape.add_const(
        tape.sub(sims.get(a, hard_neg), sims.get(a, hard_pos)), margin)));
  }
  require(!terms.empty(),
          "triplet_loss_hard: no anchor has both a positive and a negative");
  return tape.scale(tape.add_n(terms),
                    1.0 / static_cast<double>(terms.size()));
}

diff::NodeId append_softmax_ce(diff::Tape& tape, diff::NodeId logits,
                               int label) {
  const Matrix& lv = tape.value(logits);
  require(lv.cols() == 1 && lv.rows() >= 2,
          "softmax_ce: logits must be a column vector of length >= 2");
  require(label >= 0 && label < lv.rows(), "softmax_ce: label out of range");
  // The shift is detached on purpose: its gradient terms cancel exactly, so
  // subtracting the max by value changes nothing but the dynamic range.
  const double shift = lv.maxCoeff();
  const diff::NodeId expd = tape.exp(tape.add_const(logits, -shift));
  const diff::NodeId ones = tape.constant(Matrix::Ones(lv.rows(), 1));
  const diff::NodeId log_sum = tape.log(tape.dot(expd, ones));
  return tape.sub(tape.add_const(log_sum, shift), tape.pick(logits, label));
}

namespace {

// Anchor reduction shared by the batch-level losses: every row acts as an
// anchor when the batch gives it what the per-anchor loss needs.
diff::NodeId mean_over_anchors(diff::Tape& tape,
                               std::vector<diff::NodeId> terms,
                               const char* who) {
  if (terms.empty())
    throw ContractError(std::string(who) +
                        ": no row has both a same-identity peer and another "
                        "identity in the batch");
  return tape.scale(tape.add_n(terms),
                    1.0 / static_cast<double>(terms.size()));
}

}  // namespace

diff::NodeId append_batch_ranking_loss(diff::Tape& tape,
                                       std::span<const diff::NodeId> rows,
                                       std::span<const int> identity,
                                       const LossParams& params) {
  require(rows.size() == identity.size(),
          "batch_ranking_loss: one identity per row");
  const int n = static_cast<int>(rows.size());
  std::vector<diff::NodeId> terms;
  for (int a = 0; a < n; ++a) {
    std::vector<int> positives, negatives;
    for (int i = 0; i < n; ++i) {
      if (i == a) continue;
      (identity[i] == identity[a] ? positives : negatives).push_back(i);
    }
    if (positives.empty() || negatives.empty()) continue;
    terms.push_back(append_ranking_loss(
        tape, rows,
        RankingBatch(a, std::move(positives), std::move(negatives)), params));
  }
  return mean_over_anchors(tape, std::move(terms), "batch_ranking_loss");
}

diff::NodeId append_batch_npair_loss(diff::Tape& tape,
                                     std::span<const diff::NodeId> rows,
                                     std::span<const int> identity) {
  require(rows.size() == identity.size(),
          "batch_npair_loss: one identity per row");
  const int n = static_cast<int>(rows.size());
  std::vector<diff::NodeId> terms;
  for (int a = 0; a < n; ++a) {
    // The positive is the cyclically next row of the anchor's identity.
    int positive = -1;
    for (int step = 1; step < n; ++step) {
      const int i = (a + step) % n;
      if (identity[i] == identity[a]) {
        positive = i;
        break;
      }
    }
    std::vector<int> negatives;
    for (int i = 0; i < n; ++i)
      if (identity[i] != identity[a]) negatives.push_back(i);
    if (positive < 0 || negatives.empty()) continue;
    terms.push_back(
        append_npair_loss(tape, rows, RankingBatch(a, {positive}, std::move(negatives))));
  }
  return mean_over_anchors(tape, std::move(terms), "batch_npair_loss");
}

namespace {

// Standalone entry point scaffold: one parameter leaf per batch row, build,
// differentiate, pack row gradients back into the feature shape.
template <typename Build>
LossValue run_on_batch(const EmbeddingBatch& batch, Build&& build) {
  diff::Tape tape;
  std::vector<diff::NodeId> rows;
  rows.reserve(static_cast<std::size_t>(batch.size()));
  for (int i = 0; i < static_cast<int>(batch.size()); ++i)
    rows.push_back(tape.param(batch.row(i)));
  const diff::NodeId loss = build(tape, std::span<const diff::NodeId>(rows));
  tape.set_terminal(loss);
  const diff::GradientSet grads = backward(tape);
  Matrix packed(batch.size(), batch.dim());
  for (int i = 0; i < static_cast<int>(batch.size()); ++i)
    packed.row(i) = grads.at(rows[i]).transpose();
  return LossValue{tape.value_scalar(loss), std::move(packed)};
}

}  // namespace

LossValue npair_loss(const EmbeddingBatch& batch, const RankingBatch& rb) {
  rb.validate_against(batch);
  return run_on_batch(batch, [&](diff::Tape& t, auto rows) {
    return append_npair_loss(t, rows, rb);
  });
}

LossValue ranking_loss_full(const EmbeddingBatch& batch,
                            const RankingBatch& rb) {
  rb.validate_against(batch);
  return run_on_batch(batch, [&](diff::Tape& t, auto rows) {
    return append_ranking_loss_full(t, rows, rb);
  });
}

LossValue ranking_loss(const EmbeddingBatch& batch, const RankingBatch& rb,
                       const LossParams& params) {
  rb.validate_against(batch);
  return run_on_batch(batch, [&](diff::Tape& t, auto rows) {
    return append_ranking_loss(t, rows, rb, params);
  });
}

LossValue triplet_loss_hard(const EmbeddingBatch& batch, double margin) {
  return run_on_batch(batch, [&](diff::Tape& t, auto rows) {
    return append_triplet_loss_hard(t, rows, batch.identity(), margin);
  });
}

LossValue softmax_ce(const Vector& logits, int label) {
  diff::Tape tape;
  const diff::NodeId in = tape.param(logits);
  tape.set_terminal(append_softmax_ce(tape, in, label));
  const diff::GradientSet grads = backward(tape);
  return LossValue{tape.value_scalar(tape.terminal()), grads.at(in)};
}

LossValue batch_ranking_loss(const EmbeddingBatch& batch,
                             const LossParams& params) {
  return run_on_batch(batch, [&](diff::Tape& t, auto rows) {
    return append_batch_ranking_loss(t, rows, batch.identity(), params);
  });
}

}  // namespace maskrank::losses
