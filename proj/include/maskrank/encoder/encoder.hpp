#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "maskrank/diff/tape.hpp"
#include "maskrank/io/raster.hpp"
#include "maskrank/rng.hpp"

namespace maskrank::encoder {

// The two views the network consumes: the image as captured and the same
// image with its background zeroed out.
struct ImagePair {
  io::Raster original;
  io::Raster masked;

  void validate() const;
};

struct EncoderConfig {
  int height = 12;
  int width = 6;
  int channels = 1;
  int stream_width = 24;  // one affine+relu block per input stream
  std::array<int, 3> level_widths = {32, 24, 16};
  int pool_window = 2;  // mean pooling after each trunk level
  int output_dim = 256;
  std::uint64_t seed = 1;

  void validate() const;
  int input_dim() const { return height * width * channels; }
  int fused_dim() const {
    return (level_widths[0] + level_widths[1] + level_widths[2]) /
           pool_window;
  }
};

// Every affine layer of the network. Weight matrices are (out x in),
// biases are column vectors. Checkpoints and SGD walk these in
// declaration order via for_each_param.
struct EncoderParams {
  Matrix stream_orig_w, stream_orig_b;
  Matrix stream_mask_w, stream_mask_b;
  Matrix level1_w, level1_b;
  Matrix level2_w, level2_b;
  Matrix level3_w, level3_b;
  Matrix fuse_w, fuse_b;
};

template <typename Params, typename Fn>
void for_each_param(Params& params, Fn&& fn) {
  fn("stream_orig_w", params.stream_orig_w);
  fn("stream_orig_b", params.stream_orig_b);
  fn("stream_mask_w", params.stream_mask_w);
  fn("stream_mask_b", params.stream_mask_b);
  fn("level1_w", params.level1_w);
  fn("level1_b", params.level1_b);
  fn("level2_w", params.level2_w);
  fn("level2_b", params.level2_b);
  fn("level3_w", params.level3_w);
  fn("level3_b", params.level3_b);
  fn("fuse_w", params.fuse_w);
  fn("fuse_b", params.fuse_b);
}

/// Fan-based uniform weights, zero biases, deterministic under rng's seed.
/// Each weight comes from uniform(-s, s), s = sqrt(6 / (fan_in + fan_out)),
/// drawn row-major in declaration order.
EncoderParams init_params(const EncoderConfig& config, Rng& rng);

/// Skipped fusion: plain concatenation of the three pooled level outputs.
diff::NodeId fuse_levels(diff::Tape& tape, diff::NodeId low, diff::NodeId mid,
                         diff::NodeId high);
Vector fuse_levels(const Vector& low, const Vector& mid, const Vector& high);

// Binds one parameter set onto a tape and encodes image pairs against it.
// All pairs encoded through one instance share the parameter leaves, so a
// single backward pass yields gradients for a whole batch loss.
class TapedEncoder {
 public:
  TapedEncoder(diff::Tape& tape, const EncoderConfig& config,
               const EncoderParams& params);

  /// Appends the forward pass, returns the unit-norm feature node.
  diff::NodeId encode(const ImagePair& pair) const;

  /// Collects this encoder's parameter gradients out of a backward result.
  EncoderParams gradients(const diff::GradientSet& grads) const;

 private:
  diff::Tape& tape_;
  EncoderConfig config_;
  std::vector<diff::NodeId> param_nodes_;  // declaration order
};

/// Tape-free forward pass for feature extraction; bit-identical to the
/// taped path. Throws DegenerateVectorError if the projection collapses.
Vector encode(const EncoderConfig& config, const EncoderParams& params,
              const ImagePair& pair);

/// In-place params -= lr * grads over every layer; shapes must agree.
void sgd_step(EncoderParams& params, const EncoderParams& grads, double lr);

}  // namespace maskrank::encoder
