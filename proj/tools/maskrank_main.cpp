// maskrank: training, evaluation and verification entry points.
//
// Exit codes: 0 success, 2 configuration error, 3 data/format error,
// 4 verification failure, 1 internal error.

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "maskrank/cli/commands.hpp"
#include "maskrank/io/synthetic.hpp"

namespace {

using maskrank::cli::ExperimentConfig;

// --config plus flag overrides shared by train and sweep.
struct ConfigFlags {
  std::string config_path;
  std::string out_dir;
  std::string loss;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  double lambda = 0.0;
  bool has_seed = false, has_alpha = false, has_lambda = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON")
        ->required();
    cmd->add_option("--out-dir", out_dir, "output directory override");
    cmd->add_option("--loss", loss,
                    "loss override: softmax|triplet|npair|ranking");
    cmd->add_option("--seed", seed, "seed override")
        ->each([this](const std::string&) { has_seed = true; });
    cmd->add_option("--alpha", alpha, "ranking margin override")
        ->each([this](const std::string&) { has_alpha = true; });
    cmd->add_option("--lambda", lambda, "regularizer weight override")
        ->each([this](const std::string&) { has_lambda = true; });
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg = maskrank::cli::load_experiment_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!loss.empty()) cfg.loss = loss;
    if (has_seed) cfg.seed = seed;
    if (has_alpha || has_lambda) {
      try {
        cfg.loss_params = maskrank::losses::LossParams(
            has_alpha ? alpha : cfg.loss_params.alpha,
            has_lambda ? lambda : cfg.loss_params.lambda);
      } catch (const maskrank::ContractError& e) {
        throw maskrank::ConfigError(e.what());
      }
    }
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mask-guided dual-stream ranking experiments"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "train an encoder");
  train_flags.attach(train);

  std::string eval_checkpoint, eval_manifest, eval_out;
  std::string eval_protocol = "single";
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")
      ->required();
  eval->add_option("--manifest", eval_manifest, "dataset manifest")
      ->required();
  eval->add_option("--protocol", eval_protocol, "single|multi");
  eval->add_option("--out", eval_out, "report JSON output path");

  ConfigFlags sweep_flags;
  std::vector<double> sweep_alphas, sweep_lambdas;
  bool compare_losses = false;
  CLI::App* sweep = app.add_subcommand("sweep", "grid of train+eval runs");
  sweep_flags.attach(sweep);
  sweep->add_option("--alphas", sweep_alphas, "alpha grid values");
  sweep->add_option("--lambdas", sweep_lambdas, "lambda grid values");
  sweep->add_flag("--compare-losses", compare_losses,
                  "iterate the four losses instead of the parameter grid");

  std::string gc_target = "ranking";
  int gc_trials = 100;
  double gc_tol = 1e-5;
  std::uint64_t gc_seed = 7;
  CLI::App* gc = app.add_subcommand(
      "grad-check", "compare gradients against finite differences");
  gc->add_option("--loss", gc_target,
                 "target: npair|ranking|ranking_full|triplet|softmax|encoder");
  gc->add_option("--trials", gc_trials, "number of random trials");
  gc->add_option("--tol", gc_tol, "max relative error allowed");
  gc->add_option("--seed", gc_seed, "oracle seed");

  std::string ma_image, ma_mask, ma_out;
  CLI::App* mask_apply =
      app.add_subcommand("mask-apply", "apply a mask to an image");
  mask_apply->add_option("--image", ma_image, "input image")->required();
  mask_apply->add_option("--mask", ma_mask, "single-channel mask")->required();
  mask_apply->add_option("--out", ma_out, "output image")->required();

  maskrank::io::SyntheticSpec synth;
  std::string synth_out;
  CLI::App* gen = app.add_subcommand("gen-synth", "write a synthetic corpus");
  gen->add_option("--out-dir", synth_out, "corpus directory")->required();
  gen->add_option("--identities", synth.identities, "identity count");
  gen->add_option("--images-per-id", synth.images_per_identity,
                  "images per identity");
  gen->add_option("--sigma", synth.sigma, "within-class noise level");
  gen->add_option("--seed", synth.seed, "generator seed");
  gen->add_option("--height", synth.height, "image height");
  gen->add_option("--width", synth.width, "image width");
  gen->add_option("--channels", synth.channels, "1 or 3");
  gen->add_option("--center-dim", synth.center_dim,
                  "latent center dimension");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const maskrank::cli::TrainResult result =
          maskrank::cli::cmd_train(train_flags.resolve());
      std::printf("train: checkpoint=%s final_loss=%.17g\n",
                  result.checkpoint.string().c_str(), result.final_loss);
    } else if (eval->parsed()) {
      const maskrank::cli::EvalResult result = maskrank::cli::cmd_eval(
          eval_checkpoint, eval_manifest, eval_protocol, eval_out);
      std::printf("%s\n", result.report_json.c_str());
    } else if (sweep->parsed()) {
      const ExperimentConfig cfg = sweep_flags.resolve();
      std::filesystem::path out;
      if (compare_losses) {
        out = maskrank::cli::cmd_sweep_losses(cfg);
      } else {
        maskrank::cli::SweepGrid grid;
        if (!sweep_alphas.empty()) grid.alphas = sweep_alphas;
        if (!sweep_lambdas.empty()) grid.lambdas = sweep_lambdas;
        out = maskrank::cli::cmd_sweep(cfg, grid);
      }
      std::printf("sweep: %s\n", out.string().c_str());
    } else if (gc->parsed()) {
      return maskrank::cli::cmd_grad_check(gc_target, gc_trials, gc_tol,
                                           gc_seed);
    } else if (mask_apply->parsed()) {
      maskrank::cli::cmd_mask_apply(ma_image, ma_mask, ma_out);
      std::printf("mask-apply: %s\n", ma_out.c_str());
    } else if (gen->parsed()) {
      const auto records =
          maskrank::io::write_synthetic_dataset(synth, synth_out);
      std::printf("gen-synth: %zu records under %s\n", records.size(),
                  synth_out.c_str());
    }
  } catch (const maskrank::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const maskrank::FormatError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const maskrank::InsufficientDataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
