#include "maskrank/cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"
#include "maskrank/diff/tape.hpp"
#include "maskrank/encoder/checkpoint.hpp"
#include "maskrank/eval/metrics.hpp"
#include "maskrank/io/manifest.hpp"
#include "maskrank/losses/losses.hpp"
#include "maskrank/verify/grad_check.hpp"

namespace maskrank::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmtg(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << content;
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace

void ExperimentConfig::validate(bool needs_out_dir) const {
  static const std::set<std::string> kLosses{"softmax", "triplet", "npair",
                                             "ranking"};
  if (kLosses.find(loss) == kLosses.end())
    throw ConfigError("config: unknown loss '" + loss +
                      "' (expected softmax, triplet, npair or ranking)");
  if (steps < 1) throw ConfigError("config: steps must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (manifest.empty()) throw ConfigError("config: manifest path required");
  if (!fs::exists(manifest))
    throw ConfigError("config: manifest does not exist: " + manifest);
  if (needs_out_dir && out_dir.empty())
    throw ConfigError("config: out_dir required");
  enc.validate();
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.loss = j.value("loss", cfg.loss);
    cfg.loss_params = losses::LossParams(
        j.value("alpha", cfg.loss_params.alpha),
        j.value("lambda", cfg.loss_params.lambda));
    cfg.batch = sampling::BatchSpec(j.value("positives", cfg.batch.positives),
                                    j.value("negatives", cfg.batch.negatives));
    cfg.steps = j.value("steps", cfg.steps);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.manifest = j.value("manifest", cfg.manifest);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("encoder")) {
      const nlohmann::json& e = j.at("encoder");
      cfg.enc.height = e.value("height", cfg.enc.height);
      cfg.enc.width = e.value("width", cfg.enc.width);
      cfg.enc.channels = e.value("channels", cfg.enc.channels);
      cfg.enc.stream_width = e.value("stream_width", cfg.enc.stream_width);
      cfg.enc.pool_window = e.value("pool_window", cfg.enc.pool_window);
      cfg.enc.output_dim = e.value("output_dim", cfg.enc.output_dim);
      if (e.contains("level_widths")) {
        const auto widths = e.at("level_widths");
        if (!widths.is_array() || widths.size() != 3)
          throw ConfigError("config: level_widths must be a 3-element array");
        for (std::size_t i = 0; i < 3; ++i)
          cfg.enc.level_widths[i] = widths.at(i).get<int>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  } catch (const ContractError& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return cfg;
}

std::string experiment_config_json(const ExperimentConfig& config) {
  nlohmann::json j;
  j["loss"] = config.loss;
  j["alpha"] = config.loss_params.alpha;
  j["lambda"] = config.loss_params.lambda;
  j["positives"] = config.batch.positives;
  j["negatives"] = config.batch.negatives;
  j["steps"] = config.steps;
  j["lr"] = config.lr;
  j["seed"] = config.seed;
  j["manifest"] = config.manifest;
  j["out_dir"] = config.out_dir;
  j["encoder"] = {{"height", config.enc.height},
                  {"width", config.enc.width},
                  {"channels", config.enc.channels},
                  {"stream_width", config.enc.stream_width},
                  {"level_widths", config.enc.level_widths},
                  {"pool_window", config.enc.pool_window},
                  {"output_dim", config.enc.output_dim}};
  return j.dump(2) + "\n";
}

void SweepGrid::validate() const {
  if (alphas.empty() || lambdas.empty())
    throw ConfigError("sweep: alpha and lambda lists must be non-empty");
}

namespace {

std::vector<io::ManifestRecord> split_records(
    const std::vector<io::ManifestRecord>& all, const std::string& split) {
  std::vector<io::ManifestRecord> out;
  for (const io::ManifestRecord& rec : all)
    if (rec.split == split) out.push_back(rec);
  return out;
}

// A record without a mask feeds an all-zero masked stream, keeping the
// dual-stream layout intact; that makes the mask ablation purely a data
// switch.
encoder::ImagePair load_pair(const fs::path& base,
                             const io::ManifestRecord& rec,
                             const encoder::EncoderConfig& enc) {
  const fs::path image_path = base / rec.image;
  io::Raster image = io::read_pnm(image_path);
  if (image.height != enc.height || image.width != enc.width ||
      image.channels != enc.channels)
    throw FormatError(image_path.string() + ": shape " +
                      std::to_string(image.height) + "x" +
                      std::to_string(image.width) + "x" +
                      std::to_string(image.channels) +
                      " does not match the encoder input " +
                      std::to_string(enc.height) + "x" +
                      std::to_string(enc.width) + "x" +
                      std::to_string(enc.channels));
  io::Raster masked;
  if (rec.mask.empty())
    masked = io::Raster(image.height, image.width, image.channels, 0.0);
  else
    masked = io::apply_mask(image, io::read_pnm(base / rec.mask));
  return {std::move(image), std::move(masked)};
}

}  // namespace

TrainResult cmd_train(const ExperimentConfig& config) {
  config.validate(true);
  const fs::path manifest_path(config.manifest);
  const fs::path base = manifest_path.parent_path();
  const std::vector<io::ManifestRecord> train =
      split_records(io::read_manifest(manifest_path), "train");
  if (train.empty())
    throw InsufficientDataError("train: manifest has no train records");

  // String labels map to dense ints in sorted order, independent of the
  // manifest's row order.
  std::map<std::string, int> id_map, cam_map;
  for (const io::ManifestRecord& rec : train) {
    id_map.emplace(rec.id, 0);
    cam_map.emplace(rec.cam, 0);
  }
  int next = 0;
  for (auto& [label, value] : id_map) value = next++;
  next = 0;
  for (auto& [label, value] : cam_map) value = next++;

  encoder::EncoderConfig enc_config = config.enc;
  enc_config.seed = config.seed;

  sampling::DatasetIndex index;
  std::vector<encoder::ImagePair> pairs;
  pairs.reserve(train.size());
  for (const io::ManifestRecord& rec : train) {
    index.add(id_map.at(rec.id), cam_map.at(rec.cam));
    pairs.push_back(load_pair(base, rec, enc_config));
  }

  // Fail at startup, not mid-run: even the smallest eligible anchor
  // identity must leave enough other identities for its negatives.
  const std::vector<int> eligible = sampling::eligible_identities(index);
  if (eligible.empty())
    throw InsufficientDataError(
        "train: no identity has two or more train images");
  int min_k = std::numeric_limits<int>::max();
  for (int id : eligible)
    min_k = std::min(min_k, static_cast<int>(index.images_of(id).size()));
  const int worst_negatives =
      config.batch.batch_size() - std::min(config.batch.positives, min_k);
  const int others = static_cast<int>(index.identities().size()) - 1;
  if (others < worst_negatives)
    throw InsufficientDataError(
        "train: a batch can need " + std::to_string(worst_negatives) +
        " distinct negative identities but the manifest provides only " +
        std::to_string(others));

  Rng rng(config.seed);
  encoder::EncoderParams params = encoder::init_params(enc_config, rng);

  // The classifier head exists only under the softmax loss; it trains
  // alongside the encoder but is not part of the checkpoint.
  const int classes = static_cast<int>(id_map.size());
  Matrix head_w, head_b;
  if (config.loss == "softmax") {
    head_w = Matrix::Zero(classes, enc_config.output_dim);
    const double s =
        std::sqrt(6.0 / static_cast<double>(classes + enc_config.output_dim));
    for (Index i = 0; i < head_w.rows(); ++i)
      for (Index j = 0; j < head_w.cols(); ++j)
        head_w(i, j) = rng.uniform(-s, s);
    head_b = Matrix::Zero(classes, 1);
  }

  fs::create_directories(config.out_dir);
  std::string csv = "step,loss\n";
  TrainResult result;

  for (int step = 0; step < config.steps; ++step) {
    const sampling::SampledBatch batch =
        sampling::sample_batch(index, config.batch, rng);
    diff::Tape tape;
    const encoder::TapedEncoder enc(tape, enc_config, params);
    std::vector<diff::NodeId> rows;
    rows.reserve(batch.records.size());
    for (int record : batch.records)
      rows.push_back(enc.encode(pairs[static_cast<std::size_t>(record)]));

    diff::NodeId loss_node = -1;
    diff::NodeId head_w_node = -1, head_b_node = -1;
    if (config.loss == "ranking") {
      loss_node = losses::append_batch_ranking_loss(tape, rows, batch.identity,
                                                    config.loss_params);
    } else if (config.loss == "npair") {
      loss_node = losses::append_batch_npair_loss(tape, rows, batch.identity);
    } else if (config.loss == "triplet") {
      loss_node = losses::append_triplet_loss_hard(
          tape, rows, batch.identity, config.loss_params.alpha);
    } else {
      head_w_node = tape.param(head_w);
      head_b_node = tape.param(head_b);
      std::vector<diff::NodeId> terms;
      terms.reserve(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i)
        terms.push_back(losses::append_softmax_ce(
            tape, tape.affine(head_w_node, head_b_node, rows[i]),
            batch.identity[i]));
      loss_node = tape.scale(tape.add_n(terms),
                             1.0 / static_cast<double>(terms.size()));
    }
    tape.set_terminal(loss_node);
    const double loss_value = tape.value_scalar(loss_node);
    const diff::GradientSet grads = diff::backward(tape);
    encoder::sgd_step(params, enc.gradients(grads), config.lr);
    if (head_w_node >= 0) {
      head_w -= config.lr * grads.at(head_w_node);
      head_b -= config.lr * grads.at(head_b_node);
    }

    csv += std::to_string(step) + "," + fmt17(loss_value) + "\n";
    if (step == 0) result.first_loss = loss_value;
    result.final_loss = loss_value;
  }

  result.checkpoint = fs::path(config.out_dir) / "checkpoint.bin";
  result.log_csv = fs::path(config.out_dir) / "train_log.csv";
  result.config_echo = fs::path(config.out_dir) / "config.json";
  encoder::save_checkpoint(result.checkpoint, enc_config, params);
  write_text(result.log_csv, csv);
  write_text(result.config_echo, experiment_config_json(config));
  return result;
}

EvalResult cmd_eval(const fs::path& checkpoint, const fs::path& manifest,
                    const std::string& protocol, const fs::path& out_path) {
  if (protocol != "single" && protocol != "multi")
    throw ConfigError("eval: protocol must be 'single' or 'multi', got '" +
                      protocol + "'");
  const auto [enc_config, params] = encoder::load_checkpoint(checkpoint);
  const std::vector<io::ManifestRecord> all = io::read_manifest(manifest);
  const fs::path base = manifest.parent_path();

  const auto build_set = [&](const std::string& split) {
    const std::vector<io::ManifestRecord> recs = split_records(all, split);
    if (recs.empty())
      throw InsufficientDataError("eval: manifest has no " + split +
                                  " records");
    Matrix features(static_cast<Index>(recs.size()), enc_config.output_dim);
    std::vector<std::string> ids, cams;
    ids.reserve(recs.size());
    cams.reserve(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const encoder::ImagePair pair = load_pair(base, recs[i], enc_config);
      features.row(static_cast<Index>(i)) =
          encoder::encode(enc_config, params, pair).transpose();
      ids.push_back(recs[i].id);
      cams.push_back(recs[i].cam);
    }
    return eval::FeatureSet(std::move(features), std::move(ids),
                            std::move(cams));
  };

  const eval::FeatureSet queries = build_set("query");
  const eval::FeatureSet gallery = build_set("gallery");
  const eval::EvalReport report =
      protocol == "multi" ? eval::evaluate_multi_query(queries, gallery)
                          : eval::evaluate_single_query(queries, gallery);
  EvalResult result{eval::report_to_json(report), report.rank_k(1),
                    report.map};
  if (!out_path.empty()) write_text(out_path, result.report_json + "\n");
  return result;
}

namespace {

// Re-throws cell failures with the cell named, keeping the error type (and
// with it the exit code) intact.
template <typename Fn>
auto run_cell(const std::string& label, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(label + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(label + ": " + e.what());
  } catch (const InsufficientDataError& e) {
    throw InsufficientDataError(label + ": " + e.what());
  } catch (const Error& e) {
    throw Error(label + ": " + e.what());
  }
}

struct CellMetrics {
  double rank1;
  double map;
};

CellMetrics train_and_eval(const ExperimentConfig& cell) {
  const TrainResult trained = cmd_train(cell);
  const EvalResult evaluated =
      cmd_eval(trained.checkpoint, cell.manifest, "single",
               fs::path(cell.out_dir) / "eval_single.json");
  return {evaluated.rank1, evaluated.map};
}

}  // namespace

fs::path cmd_sweep(const ExperimentConfig& config, const SweepGrid& grid) {
  grid.validate();
  config.validate(true);
  std::string csv = "alpha,lambda,rank1,map\n";
  for (double alpha : grid.alphas) {
    for (double lambda : grid.lambdas) {
      const std::string label =
          "sweep cell alpha=" + fmtg(alpha) + " lambda=" + fmtg(lambda);
      std::fprintf(stderr, "%s\n", label.c_str());
      const CellMetrics metrics = run_cell(label, [&] {
        ExperimentConfig cell = config;
        cell.loss_params = losses::LossParams(alpha, lambda);
        cell.out_dir = (fs::path(config.out_dir) /
                        ("cell_a" + fmtg(alpha) + "_l" + fmtg(lambda)))
                           .string();
        return train_and_eval(cell);
      });
      csv += fmtg(alpha) + "," + fmtg(lambda) + "," + fmt17(metrics.rank1) +
             "," + fmt17(metrics.map) + "\n";
    }
  }
  const fs::path out = fs::path(config.out_dir) / "sweep.csv";
  write_text(out, csv);
  return out;
}

fs::path cmd_sweep_losses(const ExperimentConfig& config) {
  config.validate(true);
  std::string csv = "loss,rank1,map\n";
  for (const char* loss : {"softmax", "triplet", "npair", "ranking"}) {
    const std::string label = std::string("sweep cell loss=") + loss;
    std::fprintf(stderr, "%s\n", label.c_str());
    const CellMetrics metrics = run_cell(label, [&] {
      ExperimentConfig cell = config;
      cell.loss = loss;
      cell.out_dir =
          (fs::path(config.out_dir) / (std::string("cell_") + loss)).string();
      return train_and_eval(cell);
    });
    csv += std::string(loss) + "," + fmt17(metrics.rank1) + "," +
           fmt17(metrics.map) + "\n";
  }
  const fs::path out = fs::path(config.out_dir) / "loss_compare.csv";
  write_text(out, csv);
  return out;
}

int cmd_grad_check(const std::string& target, int trials, double tolerance,
                   std::uint64_t seed) {
  const verify::GradCheckReport report =
      verify::grad_check(target, trials, tolerance, seed);
  std::printf("grad-check %s: trials=%d max_rel_err=%s tolerance=%s -> %s\n",
              report.target.c_str(), report.trials,
              fmt17(report.max_rel_err).c_str(), fmtg(report.tolerance).c_str(),
              report.pass ? "pass" : "FAIL");
  return report.pass ? 0 : 4;
}

void cmd_mask_apply(const fs::path& image, const fs::path& mask,
                    const fs::path& out) {
  io::write_pnm(out, io::apply_mask(io::read_pnm(image), io::read_pnm(mask)));
}

}  // namespace maskrank::cli
