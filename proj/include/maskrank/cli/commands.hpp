#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "maskrank/encoder/encoder.hpp"
#include "maskrank/losses/batch.hpp"
#include "maskrank/sampling/sampler.hpp"

namespace maskrank::cli {

// Everything one training run needs; loadable from a JSON file and
// overridable by command-line flags. The echo written next to the
// checkpoint holds the effective values.
struct ExperimentConfig {
  std::string loss = "ranking";  // softmax | triplet | npair | ranking
  losses::LossParams loss_params{0.2, 1.0};
  sampling::BatchSpec batch{10, 54};
  encoder::EncoderConfig enc;
  int steps = 300;
  double lr = 0.05;
  std::uint64_t seed = 1;
  std::string manifest;
  std::string out_dir;

  void validate(bool needs_out_dir = true) const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_json(const ExperimentConfig& config);

struct SweepGrid {
  std::vector<double> alphas{0.1, 0.15, 0.2, 0.5, 1.0};
  std::vector<double> lambdas{0.0, 1.0, 2.0, 5.0, 10.0};

  void validate() const;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path log_csv;
  std::filesystem::path config_echo;
  double first_loss = 0.0;
  double final_loss = 0.0;
};

/// sampler -> encoder -> loss -> sgd for config.steps; writes
/// checkpoint.bin, train_log.csv ("step,loss") and config.json under
/// config.out_dir.
TrainResult cmd_train(const ExperimentConfig& config);

struct EvalResult {
  std::string report_json;
  double rank1 = 0.0;
  double map = 0.0;
};

/// Encodes the manifest's query and gallery splits with the checkpointed
/// encoder (records without a mask feed an all-zero masked stream) and
/// evaluates. protocol: "single" or "multi". Writes the report JSON to
/// out_path when given.
EvalResult cmd_eval(const std::filesystem::path& checkpoint,
                    const std::filesystem::path& manifest,
                    const std::string& protocol,
                    const std::filesystem::path& out_path = {});

/// Trains and evaluates one cell per (alpha, lambda); writes
/// sweep.csv ("alpha,lambda,rank1,map") under config.out_dir. Cell runs
/// land in per-cell subdirectories.
std::filesystem::path cmd_sweep(const ExperimentConfig& config,
                                const SweepGrid& grid);

/// Same loop over the four loss names with fixed loss params; writes
/// loss_compare.csv ("loss,rank1,map").
std::filesystem::path cmd_sweep_losses(const ExperimentConfig& config);

/// Returns the process exit code: 0 on pass, 4 on verification failure.
int cmd_grad_check(const std::string& target, int trials, double tolerance,
                   std::uint64_t seed);

void cmd_mask_apply(const std::filesystem::path& image,
                    const std::filesystem::path& mask,
                    const std::filesystem::path& out);

}  // namespace maskrank::cli
