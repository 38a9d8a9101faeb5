#include "maskrank/verify/grad_check.hpp"

#include <cmath>
#include <functional>
#include <vector>

#include "maskrank/diff/finite_diff.hpp"
#include "maskrank/diff/tape.hpp"
#include "maskrank/encoder/encoder.hpp"
#include "maskrank/losses/losses.hpp"
#include "maskrank/rng.hpp"

namespace maskrank::verify {

double relative_error(const Matrix& analytic, const Matrix& fd) {
  if (analytic.rows() != fd.rows() || analytic.cols() != fd.cols())
    throw ContractError("relative_error: shape mismatch");
  double worst = 0.0;
  for (Index i = 0; i < analytic.rows(); ++i) {
    for (Index j = 0; j < analytic.cols(); ++j) {
      const double a = analytic(i, j), f = fd(i, j);
      const double denom = std::max({std::abs(a), std::abs(f), 1e-6});
      worst = std::max(worst, std::abs(a - f) / denom);
    }
  }
  return worst;
}

namespace {

constexpr double kBoundaryMargin = 1e-4;
constexpr double kTieMargin = 1e-3;
constexpr int kMaxResamples = 200;

using AppendFn =
    std::function<diff::NodeId(diff::Tape&, std::span<const diff::NodeId>)>;

Matrix random_rows(Rng& rng, int n, int d) {
  Matrix v(n, d);
  for (Index i = 0; i < v.rows(); ++i)
    for (Index j = 0; j < v.cols(); ++j) v(i, j) = rng.gaussian();
  return v;
}

// Appends the composition normalize-then-loss; returns the loss node and
// the raw (pre-normalization) parameter nodes the oracle differentiates.
std::pair<diff::NodeId, std::vector<diff::NodeId>> build_normalized(
    diff::Tape& tape, const Matrix& v, const AppendFn& append) {
  std::vector<diff::NodeId> raw, unit;
  raw.reserve(static_cast<std::size_t>(v.rows()));
  unit.reserve(static_cast<std::size_t>(v.rows()));
  for (Index i = 0; i < v.rows(); ++i) {
    raw.push_back(tape.param(v.row(i).transpose()));
    unit.push_back(tape.l2_normalize(raw.back()));
  }
  return {append(tape, unit), std::move(raw)};
}

// A configuration is unusable for finite differences when any relu or clip
// gate sits at its kink or any normalization input is nearly degenerate;
// the h-sized probes would straddle the non-differentiable point.
bool tape_near_boundary(const diff::Tape& tape) {
  for (diff::NodeId id = 0; id < static_cast<diff::NodeId>(tape.size());
       ++id) {
    const diff::Node& n = tape.node(id);
    if (n.op == diff::Op::kRelu) {
      if (tape.value(n.in[0]).array().abs().minCoeff() < kBoundaryMargin)
        return true;
    } else if (n.op == diff::Op::kClipGate) {
      if ((tape.value(n.in[0]).array() - 1.0).abs().minCoeff() <
          kBoundaryMargin)
        return true;
    } else if (n.op == diff::Op::kL2Normalize) {
      if (tape.value(n.in[0]).norm() < kTieMargin) return true;
    }
  }
  return false;
}

Matrix normalized_rows(const Matrix& v) {
  Matrix u = v;
  for (Index i = 0; i < u.rows(); ++i) u.row(i) /= u.row(i).norm();
  return u;
}

// Any two candidates of one argmin/argmax within the margin makes the
// selection unstable under perturbation.
bool group_has_tie(const std::vector<double>& sims) {
  for (std::size_t a = 0; a < sims.size(); ++a)
    for (std::size_t b = a + 1; b < sims.size(); ++b)
      if (std::abs(sims[a] - sims[b]) < kTieMargin) return true;
  return false;
}

bool ranking_selection_tied(const Matrix& u, const losses::RankingBatch& rb) {
  std::vector<double> sims;
  for (int i : rb.positives())
    sims.push_back(u.row(rb.anchor()).dot(u.row(i)));
  return group_has_tie(sims);
}

bool triplet_selection_tied(const Matrix& u, const std::vector<int>& ids) {
  const int n = static_cast<int>(u.rows());
  for (int a = 0; a < n; ++a) {
    std::vector<double> pos, neg;
    for (int i = 0; i < n; ++i) {
      if (i == a) continue;
      (ids[i] == ids[a] ? pos : neg).push_back(u.row(a).dot(u.row(i)));
    }
    if (group_has_tie(pos) || group_has_tie(neg)) return true;
  }
  return false;
}

struct LossCase {
  int rows;
  int dim;
  std::vector<int> identity;
  AppendFn append;
  std::function<bool(const Matrix&)> selection_tied;  // may be empty
};

LossCase make_loss_case(const std::string& target, int trial) {
  if (target == "npair") {
    const losses::RankingBatch rb(0, {1}, {2, 3, 4});
    return {5,
            6,
            {0, 0, 1, 2, 3},
            [rb](diff::Tape& t, std::span<const diff::NodeId> rows) {
              return losses::append_npair_loss(t, rows, rb);
            },
            {}};
  }
  if (target == "ranking" || target == "ranking_full") {
    const losses::RankingBatch rb(0, {1, 2, 3}, {4, 5, 6, 7});
    LossCase c{8, 6, {0, 0, 0, 0, 1, 2, 3, 4}, {}, {}};
    if (target == "ranking_full") {
      c.append = [rb](diff::Tape& t, std::span<const diff::NodeId> rows) {
        return losses::append_ranking_loss_full(t, rows, rb);
      };
    } else {
      // Alternate the regularizer weight so both branches get exercised.
      const losses::LossParams params(0.2, trial % 2 == 0 ? 1.0 : 0.0);
      c.append = [rb, params](diff::Tape& t,
                              std::span<const diff::NodeId> rows) {
        return losses::append_ranking_loss(t, rows, rb, params);
      };
      c.selection_tied = [rb](const Matrix& u) {
        return ranking_selection_tied(u, rb);
      };
    }
    return c;
  }
  if (target == "triplet") {
    const std::vector<int> ids{0, 0, 1, 1, 2, 2, 3, 3};
    return {8,
            6,
            ids,
            [ids](diff::Tape& t, std::span<const diff::NodeId> rows) {
              return losses::append_triplet_loss_hard(t, rows, ids, 0.2);
            },
            [ids](const Matrix& u) { return triplet_selection_tied(u, ids); }};
  }
  throw ConfigError("grad_check: unknown target '" + target + "'");
}

double loss_trial(const LossCase& c, Rng& rng) {
  Matrix v;
  int attempts = 0;
  for (;;) {
    v = random_rows(rng, c.rows, c.dim);
    diff::Tape tape;
    auto [loss, raw] = build_normalized(tape, v, c.append);
    const bool tied =
        c.selection_tied && c.selection_tied(normalized_rows(v));
    if (!tied && !tape_near_boundary(tape)) {
      tape.set_terminal(loss);
      const diff::GradientSet grads = diff::backward(tape);
      Matrix analytic(v.rows(), v.cols());
      for (Index i = 0; i < v.rows(); ++i)
        analytic.row(i) = grads.at(raw[static_cast<std::size_t>(i)])
                              .transpose();
      const Matrix fd = diff::finite_diff_grad(
          [&](const Matrix& x) {
            diff::Tape probe;
            return probe.value_scalar(build_normalized(probe, x, c.append).first);
          },
          v);
      return relative_error(analytic, fd);
    }
    if (++attempts > kMaxResamples)
      throw OracleError("grad_check: could not find a boundary-free sample");
  }
}

double softmax_trial(Rng& rng, int trial) {
  const int classes = 7;
  Matrix logits(classes, 1);
  for (Index i = 0; i < classes; ++i) logits(i, 0) = 2.0 * rng.gaussian();
  const int label = trial % classes;
  const losses::LossValue out =
      losses::softmax_ce(Vector(logits.col(0)), label);
  const Matrix fd = diff::finite_diff_grad(
      [&](const Matrix& x) {
        return losses::softmax_ce(Vector(x.col(0)), label).value;
      },
      logits);
  return relative_error(out.grads, fd);
}

encoder::EncoderConfig micro_encoder_config() {
  encoder::EncoderConfig config;
  config.height = 8;
  config.width = 4;
  config.channels = 1;
  config.stream_width = 8;
  config.level_widths = {12, 8, 4};
  config.pool_window = 2;
  config.output_dim = 8;
  return config;
}

std::vector<encoder::ImagePair> random_pairs(Rng& rng,
                                             const encoder::EncoderConfig& c,
                                             int count) {
  io::Raster mask(c.height, c.width, 1);
  for (int y = c.height / 4; y < c.height - c.height / 4; ++y)
    for (int x = c.width / 4; x < c.width - c.width / 4; ++x)
      mask.at(y, x, 0) = 1.0;
  std::vector<encoder::ImagePair> pairs;
  for (int i = 0; i < count; ++i) {
    io::Raster image(c.height, c.width, c.channels);
    for (double& v : image.data) v = rng.uniform01();
    pairs.push_back({image, io::apply_mask(image, mask)});
  }
  return pairs;
}

double encoder_trial(Rng& rng) {
  const encoder::EncoderConfig config = micro_encoder_config();
  const std::vector<int> ids{0, 0, 1, 1};
  const losses::LossParams loss_params(0.2, 1.0);

  const auto build = [&](const encoder::EncoderParams& params,
                         const std::vector<encoder::ImagePair>& pairs,
                         diff::Tape& tape) {
    const encoder::TapedEncoder enc(tape, config, params);
    std::vector<diff::NodeId> rows;
    for (const encoder::ImagePair& p : pairs) rows.push_back(enc.encode(p));
    return std::make_pair(
        losses::append_batch_ranking_loss(tape, rows, ids, loss_params), enc);
  };

  int attempts = 0;
  for (;;) {
    encoder::EncoderParams params = encoder::init_params(config, rng);
    const std::vector<encoder::ImagePair> pairs = random_pairs(rng, config, 4);
    diff::Tape tape;
    auto [loss, enc] = build(params, pairs, tape);
    // 2 identities x 2 images: every anchor has exactly one positive, so
    // no min-selection can tie; relu/gate kinks are all that can go wrong.
    if (!tape_near_boundary(tape)) {
      tape.set_terminal(loss);
      const encoder::EncoderParams analytic =
          enc.gradients(diff::backward(tape));

      std::vector<Matrix*> layers;
      encoder::for_each_param(params,
                              [&](const char*, Matrix& m) { layers.push_back(&m); });
      std::vector<const Matrix*> analytic_layers;
      encoder::for_each_param(analytic, [&](const char*, const Matrix& m) {
        analytic_layers.push_back(&m);
      });

      double worst = 0.0;
      for (std::size_t layer = 0; layer < layers.size(); ++layer) {
        const Matrix saved = *layers[layer];
        const Matrix fd = diff::finite_diff_grad(
            [&](const Matrix& x) {
              *layers[layer] = x;
              diff::Tape probe;
              const double value =
                  probe.value_scalar(build(params, pairs, probe).first);
              *layers[layer] = saved;
              return value;
            },
            saved);
        worst = std::max(worst, relative_error(*analytic_layers[layer], fd));
      }
      return worst;
    }
    if (++attempts > kMaxResamples)
      throw OracleError("grad_check: could not find a boundary-free sample");
  }
}

}  // namespace

GradCheckReport grad_check(const std::string& target, int trials,
                           double tolerance, std::uint64_t seed) {
  if (trials < 1) throw ConfigError("grad_check: trials must be >= 1");
  if (tolerance < 0.0)
    throw ConfigError("grad_check: tolerance must be >= 0");
  GradCheckReport report{target, trials, tolerance, 0.0, false};
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(seed + static_cast<std::uint64_t>(trial) * 0x9e3779b97f4a7c15ull);
    double err = 0.0;
    if (target == "softmax")
      err = softmax_trial(rng, trial);
    else if (target == "encoder")
      err = encoder_trial(rng);
    else
      err = loss_trial(make_loss_case(target, trial), rng);
    report.max_rel_err = std::max(report.max_rel_err, err);
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace maskrank::verify
