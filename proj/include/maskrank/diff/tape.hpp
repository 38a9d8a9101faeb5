#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "maskrank/types.hpp"

namespace maskrank::diff {

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
  kLeaf,
  kAffine,       // W x + b
  kRelu,
  kConcat,       // vertical stack of column vectors
  kMeanPool,     // non-overlapping windows over a column vector
  kL2Normalize,
  kDot,          // Frobenius inner product of two same-shaped nodes
  kExp,
  kLog,
  kClipGate,     // t > 1 ? t : 0, elementwise
  kAdd,
  kSub,
  kMul,
  kScale,        // aux * x
  kAddConst,     // x + aux
  kAddN,         // sequential sum of same-shaped nodes, in input order
  kPick,         // scalar x(aux) of a column vector
};

struct Node {
  Op op = Op::kLeaf;
  std::vector<NodeId> in;
  Matrix value;
  double aux = 0.0;  // window for kMeanPool, factor for kScale/kAddConst, index for kPick
  bool param = false;
};

/// Gradients of the terminal scalar w.r.t. every parameter leaf,
/// ascending by node id. Shapes match the parameters exactly.
class GradientSet {
 public:
  using Item = std::pair<NodeId, Matrix>;

  explicit GradientSet(std::vector<Item> items) : items_(std::move(items)) {}
  GradientSet() = default;

  const Matrix& at(NodeId id) const;
  bool contains(NodeId id) const;
  const std::vector<Item>& items() const { return items_; }

 private:
  std::vector<Item> items_;  // sorted by NodeId
};

// Record of forward primitives, evaluated eagerly as nodes are appended.
// Construction order is the topological order; a single scalar terminal
// must be designated before calling backward(). Tapes are single-owner
// and single-threaded; distinct tapes are independent.
class Tape {
 public:
  NodeId constant(Matrix v) { return push(Op::kLeaf, {}, std::move(v)); }
  NodeId constant(double v) { return constant(scalar(v)); }
  NodeId param(Matrix v);

  NodeId affine(NodeId weight, NodeId bias, NodeId x);
  NodeId relu(NodeId x);
  NodeId concat(std::span<const NodeId> xs);
  NodeId mean_pool(NodeId x, int window);
  NodeId l2_normalize(NodeId x);
  NodeId dot(NodeId x, NodeId y);
  NodeId exp(NodeId x);
  NodeId log(NodeId x);
  NodeId clip_gate(NodeId x);
  NodeId add(NodeId x, NodeId y);
  NodeId sub(NodeId x, NodeId y);
  NodeId mul(NodeId x, NodeId y);
  NodeId scale(NodeId x, double factor);
  NodeId add_const(NodeId x, double c);
  NodeId add_n(std::span<const NodeId> xs);
  NodeId pick(NodeId x, Index i);

  void set_terminal(NodeId id);
  NodeId terminal() const;
  bool has_terminal() const { return terminal_ >= 0; }

  const Node& node(NodeId id) const { return nodes_[check_id(id)]; }
  const Matrix& value(NodeId id) const { return node(id).value; }
  double value_scalar(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeId>& params() const { return params_; }

 private:
  friend GradientSet backward(const Tape& tape, double seed);

  static Matrix scalar(double v);
  NodeId push(Op op, std::vector<NodeId> in, Matrix value, double aux = 0.0);
  std::size_t check_id(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<NodeId> params_;
  NodeId terminal_ = -1;
};

/// Reverse-mode gradients of the tape's scalar terminal, scaled by `seed`,
/// w.r.t. every parameter leaf. Deterministic: identical tapes give
/// bit-identical gradients.
GradientSet backward(const Tape& tape, double seed = 1.0);

/// Plain (untaped) l2 normalization with the same epsilon contract as the
/// tape op: throws DegenerateVectorError when the norm is at or below 1e-12.
Vector l2_normalized(const Vector& v);

inline constexpr double kNormEpsilon = 1e-12;

}  // namespace maskrank::diff
