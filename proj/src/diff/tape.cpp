#include "maskrank/diff/tape.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <string>

namespace maskrank::diff {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw ContractError(what);
}

bool same_shape(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

bool column(const Matrix& m) { return m.cols() == 1; }

}  // namespace

const Matrix& GradientSet::at(NodeId id) const {
  auto it = std::lower_bound(
      items_.begin(), items_.end(), id,
      [](const Item& item, NodeId key) { return item.first < key; });
  if (it == items_.end() || it->first != id)
    throw ContractError("GradientSet: no gradient recorded for node " +
                        std::to_string(id));
  return it->second;
}

bool GradientSet::contains(NodeId id) const {
  auto it = std::lower_bound(
      items_.begin(), items_.end(), id,
      [](const Item& item, NodeId key) { return item.first < key; });
  return it != items_.end() && it->first == id;
}

Matrix Tape::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

std::size_t Tape::check_id(NodeId id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < nodes_.size(),
          "Tape: node id out of range");
  return static_cast<std::size_t>(id);
}

NodeId Tape::push(Op op, std::vector<NodeId> in, Matrix value, double aux) {
  assert(value.allFinite());
  Node n;
  n.op = op;
  n.in = std::move(in);
  n.value = std::move(value);
  n.aux = aux;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::param(Matrix v) {
  const NodeId id = push(Op::kLeaf, {}, std::move(v));
  nodes_[id].param = true;
  params_.push_back(id);
  return id;
}

NodeId Tape::affine(NodeId weight, NodeId bias, NodeId x) {
  const Matrix& w = value(weight);
  const Matrix& b = value(bias);
  const Matrix& xv = value(x);
  require(column(xv) && column(b), "affine: bias and input must be vectors");
  require(w.cols() == xv.rows() && w.rows() == b.rows(),
          "affine: shape mismatch");
  return push(Op::kAffine, {weight, bias, x}, w * xv + b);
}

NodeId Tape::relu(NodeId x) {
  return push(Op::kRelu, {x}, value(x).cwiseMax(0.0));
}

NodeId Tape::concat(std::span<const NodeId> xs) {
  require(!xs.empty(), "concat: needs at least one input");
  Index rows = 0;
  for (NodeId id : xs) {
    require(column(value(id)), "concat: inputs must be column vectors");
    rows += value(id).rows();
  }
  Matrix out(rows, 1);
  Index offset = 0;
  for (NodeId id : xs) {
    out.block(offset, 0, value(id).rows(), 1) = value(id);
    offset += value(id).rows();
  }
  return push(Op::kConcat, {xs.begin(), xs.end()}, std::move(out));
}

NodeId Tape::mean_pool(NodeId x, int window) {
  const Matrix& xv = value(x);
  require(column(xv), "mean_pool: input must be a column vector");
  require(window >= 1 && xv.rows() % window == 0,
          "mean_pool: length must be a multiple of the window");
  const Index out_len = xv.rows() / window;
  Matrix out(out_len, 1);
  for (Index i = 0; i < out_len; ++i)
    out(i, 0) = xv.block(i * window, 0, window, 1).mean();
  return push(Op::kMeanPool, {x}, std::move(out), static_cast<double>(window));
}

NodeId Tape::l2_normalize(NodeId x) {
  const Matrix& xv = value(x);
  require(column(xv), "l2_normalize: input must be a column vector");
  const double norm = xv.norm();
  if (norm <= kNormEpsilon)
    throw DegenerateVectorError("l2_normalize: vector norm below epsilon");
  return push(Op::kL2Normalize, {x}, xv / norm);
}

NodeId Tape::dot(NodeId x, NodeId y) {
  const Matrix& xv = value(x);
  const Matrix& yv = value(y);
  require(same_shape(xv, yv), "dot: shape mismatch");
  return push(Op::kDot, {x, y}, scalar(xv.cwiseProduct(yv).sum()));
}

NodeId Tape::exp(NodeId x) {
  return push(Op::kExp, {x}, value(x).array().exp().matrix());
}

NodeId Tape::log(NodeId x) {
  assert((value(x).array() > 0.0).all());
  return push(Op::kLog, {x}, value(x).array().log().matrix());
}

NodeId Tape::clip_gate(NodeId x) {
  const Matrix& xv = value(x);
  Matrix out = (xv.array() > 1.0).select(xv, Matrix::Zero(xv.rows(), xv.cols()));
  return push(Op::kClipGate, {x}, std::move(out));
}

NodeId Tape::add(NodeId x, NodeId y) {
  require(same_shape(value(x), value(y)), "add: shape mismatch");
  return push(Op::kAdd, {x, y}, value(x) + value(y));
}

NodeId Tape::sub(NodeId x, NodeId y) {
  require(same_shape(value(x), value(y)), "sub: shape mismatch");
  return push(Op::kSub, {x, y}, value(x) - value(y));
}

NodeId Tape::mul(NodeId x, NodeId y) {
  require(same_shape(value(x), value(y)), "mul: shape mismatch");
  return push(Op::kMul, {x, y}, value(x).cwiseProduct(value(y)));
}

NodeId Tape::scale(NodeId x, double factor) {
  return push(Op::kScale, {x}, factor * value(x), factor);
}

NodeId Tape::add_const(NodeId x, double c) {
  return push(Op::kAddConst, {x}, (value(x).array() + c).matrix(), c);
}

NodeId Tape::add_n(std::span<const NodeId> xs) {
  require(!xs.empty(), "add_n: needs at least one input");
  Matrix out = value(xs[0]);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require(same_shape(out, value(xs[k])), "add_n: shape mismatch");
    out += value(xs[k]);
  }
  return push(Op::kAddN, {xs.begin(), xs.end()}, std::move(out));
}

NodeId Tape::pick(NodeId x, Index i) {
  const Matrix& xv = value(x);
  require(column(xv), "pick: input must be a column vector");
  require(i >= 0 && i < xv.rows(), "pick: index out of range");
  return push(Op::kPick, {x}, scalar(xv(i, 0)), static_cast<double>(i));
}

void Tape::set_terminal(NodeId id) {
  const Matrix& v = value(id);
  require(v.rows() == 1 && v.cols() == 1,
          "set_terminal: terminal must be a scalar node");
  terminal_ = id;
}

NodeId Tape::terminal() const {
  require(terminal_ >= 0, "Tape: no terminal set");
  return terminal_;
}

double Tape::value_scalar(NodeId id) const {
  const Matrix& v = value(id);
  require(v.rows() == 1 && v.cols() == 1, "value_scalar: node is not scalar");
  return v(0, 0);
}

GradientSet backward(const Tape& tape, double seed) {
  const NodeId terminal = tape.terminal();
  const auto& nodes = tape.nodes_;

  // Adjoints, allocated lazily: nodes with no path to the terminal are
  // never touched and contribute zero.
  std::vector<Matrix> grads(nodes.size());
  std::vector<bool> live(nodes.size(), false);
  auto grad_of = [&](NodeId id) -> Matrix& {
    if (!live[id]) {
      grads[id] = Matrix::Zero(nodes[id].value.rows(), nodes[id].value.cols());
      live[id] = true;
    }
    return grads[id];
  };

  grad_of(terminal)(0, 0) = seed;

  for (NodeId id = terminal; id >= 0; --id) {
    if (!live[id]) continue;
    const Node& n = nodes[id];
    const Matrix& g = grads[id];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAffine: {
        const Matrix& w = nodes[n.in[0]].value;
        const Matrix& xv = nodes[n.in[2]].value;
        grad_of(n.in[0]) += g * xv.transpose();
        grad_of(n.in[1]) += g;
        grad_of(n.in[2]) += w.transpose() * g;
        break;
      }
      case Op::kRelu: {
        const Matrix& xv = nodes[n.in[0]].value;
        grad_of(n.in[0]).array() +=
            (xv.array() > 0.0).cast<double>() * g.array();
        break;
      }
      case Op::kConcat: {
        Index offset = 0;
        for (NodeId in : n.in) {
          const Index len = nodes[in].value.rows();
          grad_of(in) += g.block(offset, 0, len, 1);
          offset += len;
        }
        break;
      }
      case Op::kMeanPool: {
        const int window = static_cast<int>(n.aux);
        Matrix& gx = grad_of(n.in[0]);
        for (Index i = 0; i < n.value.rows(); ++i)
          gx.block(i * window, 0, window, 1).array() += g(i, 0) / window;
        break;
      }
      case Op::kL2Normalize: {
        const Matrix& xv = nodes[n.in[0]].value;
        const double norm = xv.norm();
        const double proj = n.value.cwiseProduct(g).sum();
        grad_of(n.in[0]) += (g - proj * n.value) / norm;
        break;
      }
      case Op::kDot: {
        const double gs = g(0, 0);
        grad_of(n.in[0]) += gs * nodes[n.in[1]].value;
        grad_of(n.in[1]) += gs * nodes[n.in[0]].value;
        break;
      }
      case Op::kExp:
        grad_of(n.in[0]).array() += g.array() * n.value.array();
        break;
      case Op::kLog:
        grad_of(n.in[0]).array() += g.array() / nodes[n.in[0]].value.array();
        break;
      case Op::kClipGate: {
        const Matrix& xv = nodes[n.in[0]].value;
        grad_of(n.in[0]).array() +=
            (xv.array() > 1.0).cast<double>() * g.array();
        break;
      }
      case Op::kAdd:
        grad_of(n.in[0]) += g;
        grad_of(n.in[1]) += g;
        break;
      case Op::kSub:
        grad_of(n.in[0]) += g;
        grad_of(n.in[1]) -= g;
        break;
      case Op::kMul:
        grad_of(n.in[0]).array() += g.array() * nodes[n.in[1]].value.array();
        grad_of(n.in[1]).array() += g.array() * nodes[n.in[0]].value.array();
        break;
      case Op::kScale:
        grad_of(n.in[0]) += n.aux * g;
        break;
      case Op::kAddConst:
        grad_of(n.in[0]) += g;
        break;
      case Op::kAddN:
        for (NodeId in : n.in) grad_of(in) += g;
        break;
      case Op::kPick:
        grad_of(n.in[0])(static_cast<Index>(n.aux), 0) += g(0, 0);
        break;
    }
  }

  std::vector<GradientSet::Item> items;
  items.reserve(tape.params_.size());
  for (NodeId id : tape.params_) {
    if (live[id])
      items.emplace_back(id, std::move(grads[id]));
    else
      items.emplace_back(id, Matrix::Zero(nodes[id].value.rows(),
                                          nodes[id].value.cols()));
  }
  return GradientSet(std::move(items));
}

Vector l2_normalized(const Vector& v) {
  const double norm = v.norm();
  if (norm <= kNormEpsilon)
    throw DegenerateVectorError("l2_normalized: vector norm below epsilon");
  return v / norm;
}

}  // namespace maskrank::diff
