#include "maskrank/encoder/encoder.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace maskrank::encoder {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace

void ImagePair::validate() const {
  require(original.height == masked.height &&
              original.width == masked.width &&
              original.channels == masked.channels,
          "ImagePair: original and masked shapes differ");
}

void EncoderConfig::validate() const {
  require(height >= 1 && width >= 1 && (channels == 1 || channels == 3),
          "EncoderConfig: bad input shape");
  require(stream_width >= 1, "EncoderConfig: stream width must be >= 1");
  require(pool_window >= 1, "EncoderConfig: pool window must be >= 1");
  for (int w : level_widths) {
    require(w >= 1, "EncoderConfig: level widths must be >= 1");
    require(w % pool_window == 0,
            "EncoderConfig: level widths must be multiples of the pool "
            "window");
  }
  require(output_dim >= 8, "EncoderConfig: output dimension must be >= 8");
}

namespace {

// Layer shapes in declaration order. The trunk consumes the concatenated
// streams; each later level consumes the previous level's pooled output.
std::vector<std::pair<Index, Index>> weight_shapes(
    const EncoderConfig& config) {
  const Index in = config.input_dim();
  const Index sw = config.stream_width;
  const Index l1 = config.level_widths[0];
  const Index l2 = config.level_widths[1];
  const Index l3 = config.level_widths[2];
  const Index pw = config.pool_window;
  return {
      {sw, in}, {sw, 1},           // stream over the original image
      {sw, in}, {sw, 1},           // stream over the masked image
      {l1, 2 * sw}, {l1, 1},       // level 1
      {l2, l1 / pw}, {l2, 1},      // level 2
      {l3, l2 / pw}, {l3, 1},      // level 3
      {config.output_dim, config.fused_dim()}, {config.output_dim, 1},
  };
}

}  // namespace

EncoderParams init_params(const EncoderConfig& config, Rng& rng) {
  config.validate();
  const auto shapes = weight_shapes(config);
  EncoderParams params;
  std::size_t slot = 0;
  for_each_param(params, [&](const char*, Matrix& m) {
    const auto [rows, cols] = shapes[slot++];
    m = Matrix::Zero(rows, cols);
    if (cols == 1) return;  // biases start at zero
    const double s =
        std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-s, s);
  });
  return params;
}

diff::NodeId fuse_levels(diff::Tape& tape, diff::NodeId low, diff::NodeId mid,
                         diff::NodeId high) {
  const diff::NodeId parts[] = {low, mid, high};
  return tape.concat(parts);
}

Vector fuse_levels(const Vector& low, const Vector& mid, const Vector& high) {
  Vector out(low.size() + mid.size() + high.size());
  out << low, mid, high;
  return out;
}

TapedEncoder::TapedEncoder(diff::Tape& tape, const EncoderConfig& config,
                           const EncoderParams& params)
    : tape_(tape), config_(config) {
  config_.validate();
  const auto shapes = weight_shapes(config_);
  std::size_t slot = 0;
  for_each_param(params, [&](const char* name, const Matrix& m) {
    const auto [rows, cols] = shapes[slot++];
    require(m.rows() == rows && m.cols() == cols,
            std::string("TapedEncoder: ") + name + " has shape " +
                std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                ", config wants " + std::to_string(rows) + "x" +
                std::to_string(cols));
    param_nodes_.push_back(tape_.param(m));
  });
}

diff::NodeId TapedEncoder::encode(const ImagePair& pair) const {
  pair.validate();
  require(pair.original.height == config_.height &&
              pair.original.width == config_.width &&
              pair.original.channels == config_.channels,
          "TapedEncoder: pair shape does not match config");
  const auto& p = param_nodes_;
  const diff::NodeId x_orig = tape_.constant(Matrix(pair.original.flatten()));
  const diff::NodeId x_mask = tape_.constant(Matrix(pair.masked.flatten()));
  const diff::NodeId s_orig = tape_.relu(tape_.affine(p[0], p[1], x_orig));
  const diff::NodeId s_mask = tape_.relu(tape_.affine(p[2], p[3], x_mask));
  const diff::NodeId joined = tape_.concat(std::array{s_orig, s_mask});
  const diff::NodeId l1 = tape_.mean_pool(
      tape_.relu(tape_.affine(p[4], p[5], joined)), config_.pool_window);
  const diff::NodeId l2 = tape_.mean_pool(
      tape_.relu(tape_.affine(p[6], p[7], l1)), config_.pool_window);
  const diff::NodeId l3 = tape_.mean_pool(
      tape_.relu(tape_.affine(p[8], p[9], l2)), config_.pool_window);
  const diff::NodeId fused = fuse_levels(tape_, l1, l2, l3);
  return tape_.l2_normalize(tape_.affine(p[10], p[11], fused));
}

EncoderParams TapedEncoder::gradients(const diff::GradientSet& grads) const {
  EncoderParams out;
  std::size_t slot = 0;
  for_each_param(out, [&](const char*, Matrix& m) {
    m = grads.at(param_nodes_[slot++]);
  });
  return out;
}

namespace {

// The tape path computes on n x 1 matrices; doing the same here keeps the
// two forward passes on identical Eigen kernels, hence bit-identical.
Matrix affine_relu(const Matrix& w, const Matrix& b, const Matrix& x) {
  return (w * x + b).cwiseMax(0.0);
}

Matrix pool(const Matrix& x, int window) {
  const Index out_len = x.rows() / window;
  Matrix out(out_len, 1);
  for (Index i = 0; i < out_len; ++i)
    out(i, 0) = x.block(i * window, 0, window, 1).mean();
  return out;
}

}  // namespace

Vector encode(const EncoderConfig& config, const EncoderParams& params,
              const ImagePair& pair) {
  config.validate();
  pair.validate();
  require(pair.original.height == config.height &&
              pair.original.width == config.width &&
              pair.original.channels == config.channels,
          "encode: pair shape does not match config");
  const Matrix s_orig = affine_relu(params.stream_orig_w,
                                    params.stream_orig_b,
                                    Matrix(pair.original.flatten()));
  const Matrix s_mask = affine_relu(params.stream_mask_w,
                                    params.stream_mask_b,
                                    Matrix(pair.masked.flatten()));
  Matrix joined(s_orig.rows() + s_mask.rows(), 1);
  joined << s_orig, s_mask;
  const Matrix l1 =
      pool(affine_relu(params.level1_w, params.level1_b, joined),
           config.pool_window);
  const Matrix l2 = pool(affine_relu(params.level2_w, params.level2_b, l1),
                         config.pool_window);
  const Matrix l3 = pool(affine_relu(params.level3_w, params.level3_b, l2),
                         config.pool_window);
  const Vector fused =
      fuse_levels(Vector(l1.col(0)), Vector(l2.col(0)), Vector(l3.col(0)));
  const Matrix projected = params.fuse_w * Matrix(fused) + params.fuse_b;
  const double norm = projected.norm();
  if (norm <= diff::kNormEpsilon)
    throw DegenerateVectorError("encode: projected feature collapsed to zero");
  return Vector((projected / norm).col(0));
}

void sgd_step(EncoderParams& params, const EncoderParams& grads, double lr) {
  std::size_t slot = 0;
  std::vector<const Matrix*> g;
  for_each_param(grads, [&](const char*, const Matrix& m) { g.push_back(&m); });
  for_each_param(params, [&](const char* name, Matrix& m) {
    const Matrix& gm = *g[slot++];
    require(gm.rows() == m.rows() && gm.cols() == m.cols(),
            std::string("sgd_step: gradient shape mismatch for ") + name);
    m -= lr * gm;
  });
}

}  // namespace maskrank::encoder
