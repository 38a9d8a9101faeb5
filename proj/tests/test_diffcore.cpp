#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "maskrank/diff/finite_diff.hpp"
#include "maskrank/diff/tape.hpp"
#include "maskrank/losses/losses.hpp"
#include "maskrank/rng.hpp"

using namespace maskrank;

namespace {

Matrix col(std::initializer_list<double> vals) {
  Matrix m(static_cast<Index>(vals.size()), 1);
  Index i = 0;
  for (double v : vals) m(i++, 0) = v;
  return m;
}

// Max relative error between two same-shaped matrices.
double rel_err(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) {
      const double denom =
          std::max({std::abs(a(i, j)), std::abs(b(i, j)), 1e-6});
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
    }
  return worst;
}

}  // namespace

TEST_CASE("squared norm gradient is 2x") {
  diff::Tape tape;
  const auto x = tape.param(col({1, 0, 0}));
  tape.set_terminal(tape.dot(x, x));
  CHECK(tape.value_scalar(tape.terminal()) == doctest::Approx(1.0));
  const auto grads = diff::backward(tape);
  const Matrix& g = grads.at(x);
  CHECK(g(0, 0) == doctest::Approx(2.0));
  CHECK(g(1, 0) == 0.0);
  CHECK(g(2, 0) == 0.0);
}

TEST_CASE("relu gates its gradient") {
  diff::Tape tape;
  const auto x = tape.param(col({-1, 2}));
  const auto ones = tape.constant(col({1, 1}));
  tape.set_terminal(tape.dot(tape.relu(x), ones));
  CHECK(tape.value_scalar(tape.terminal()) == doctest::Approx(2.0));
  const auto grads = diff::backward(tape);
  const Matrix& g = grads.at(x);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(1, 0) == 1.0);
}

TEST_CASE("every primitive matches finite differences across seeds") {
  // One graph touching all primitives, differentiated w.r.t. its leaf and
  // checked against the central-difference oracle on 100 seeds. Inputs are
  // kept away from the relu kink and the clip threshold by construction.
  auto run = [](const Matrix& x0) {
    auto f = [](const Matrix& x) {
      diff::Tape tape;
      const auto x_node = tape.param(x);
      const auto w = tape.constant(2.0 * Matrix::Identity(4, 4));
      const auto b = tape.constant(Matrix::Constant(4, 1, 0.25));
      const auto a = tape.affine(w, b, x_node);       // 2x + 0.25, > 0.25
      const auto r = tape.relu(a);
      const std::vector<diff::NodeId> parts{r, x_node};
      const auto c = tape.concat(parts);              // length 8
      const auto p = tape.mean_pool(c, 2);            // length 4
      const auto n = tape.l2_normalize(p);
      const auto e = tape.exp(tape.scale(n, 0.5));
      const auto l = tape.log(tape.add_const(e, 1.5));
      const auto g = tape.clip_gate(tape.add_const(e, 1.25));  // > 1 safely
      const auto s = tape.add(tape.mul(l, g), tape.sub(e, l));
      const std::vector<diff::NodeId> sums{s, e};
      const auto t = tape.add_n(sums);
      const auto d = tape.dot(t, t);
      tape.set_terminal(tape.add(d, tape.pick(t, 2)));
      return tape;
    };
    auto value = [&](const Matrix& x) {
      diff::Tape tape = f(x);
      return tape.value_scalar(tape.terminal());
    };
    diff::Tape tape = f(x0);
    const Matrix analytic = diff::backward(tape).at(0);
    const Matrix fd = diff::finite_diff_grad(value, x0);
    return rel_err(analytic, fd);
  };

  double worst = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed) + 1);
    Matrix x(4, 1);
    // Positive, bounded away from 0 so relu and the gate stay off their
    // kinks under the oracle's +-h probes.
    for (Index i = 0; i < 4; ++i) x(i, 0) = 0.2 + rng.uniform01();
    worst = std::max(worst, run(x));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("ranking loss gradients match finite differences") {
  Rng rng(11);
  const Matrix raw = helpers::random_unit_rows(8, 8, rng);
  const std::vector<int> identity{0, 0, 0, 1, 2, 3, 4, 5};
  const losses::RankingBatch rb(0, {1, 2}, {3, 4, 5, 6, 7});
  const losses::LossParams params(0.2, 1.0);

  // Differentiate the composition rows -> l2-normalize -> loss so the
  // oracle may perturb coordinates freely.
  auto value = [&](const Matrix& v) {
    diff::Tape tape;
    std::vector<diff::NodeId> rows;
    for (Index r = 0; r < v.rows(); ++r)
      rows.push_back(tape.l2_normalize(tape.param(v.row(r).transpose())));
    tape.set_terminal(losses::append_ranking_loss(tape, rows, rb, params));
    return tape.value_scalar(tape.terminal());
  };

  // Analytic row gradients, re-packed to the matrix layout.
  diff::Tape tape;
  std::vector<diff::NodeId> row_leaves, rows;
  for (Index r = 0; r < raw.rows(); ++r) {
    row_leaves.push_back(tape.param(raw.row(r).transpose()));
    rows.push_back(tape.l2_normalize(row_leaves.back()));
  }
  tape.set_terminal(losses::append_ranking_loss(tape, rows, rb, params));
  const auto grads = diff::backward(tape);
  Matrix analytic = Matrix::Zero(raw.rows(), raw.cols());
  for (Index r = 0; r < raw.rows(); ++r)
    if (grads.contains(row_leaves[static_cast<std::size_t>(r)]))
      analytic.row(r) =
          grads.at(row_leaves[static_cast<std::size_t>(r)]).transpose();

  const Matrix fd = diff::finite_diff_grad(value, raw);
  CHECK(rel_err(analytic, fd) < 1e-5);
}

TEST_CASE("finite difference oracle on known functions") {
  auto square0 = [](const Matrix& x) { return x(0, 0) * x(0, 0); };
  const Matrix at3 = Matrix::Constant(1, 1, 3.0);
  CHECK(diff::finite_diff_grad(square0, at3)(0, 0) ==
        doctest::Approx(6.0).epsilon(1e-8));

  auto total = [](const Matrix& x) { return x.sum(); };
  Rng rng(5);
  const Matrix x = helpers::random_unit_rows(3, 2, rng);
  const Matrix g = diff::finite_diff_grad(total, x);
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j)
      CHECK(g(i, j) == doctest::Approx(1.0).epsilon(1e-9));

  auto blows_up = [](const Matrix& x) { return std::log(x(0, 0)); };
  const Matrix origin = Matrix::Zero(1, 1);
  CHECK_THROWS_AS(diff::finite_diff_grad(blows_up, origin), OracleError);
}

TEST_CASE("npair gradients agree between backward and the oracle") {
  Rng rng(21);
  const Matrix raw = helpers::random_unit_rows(4, 4, rng);
  const losses::RankingBatch rb(0, {1}, {2, 3});

  auto value = [&](const Matrix& v) {
    diff::Tape tape;
    std::vector<diff::NodeId> rows;
    for (Index r = 0; r < v.rows(); ++r)
      rows.push_back(tape.l2_normalize(tape.param(v.row(r).transpose())));
    tape.set_terminal(losses::append_npair_loss(tape, rows, rb));
    return tape.value_scalar(tape.terminal());
  };

  diff::Tape tape;
  std::vector<diff::NodeId> leaves, rows;
  for (Index r = 0; r < raw.rows(); ++r) {
    leaves.push_back(tape.param(raw.row(r).transpose()));
    rows.push_back(tape.l2_normalize(leaves.back()));
  }
  tape.set_terminal(losses::append_npair_loss(tape, rows, rb));
  const auto grads = diff::backward(tape);
  Matrix analytic = Matrix::Zero(raw.rows(), raw.cols());
  for (Index r = 0; r < raw.rows(); ++r)
    if (grads.contains(leaves[static_cast<std::size_t>(r)]))
      analytic.row(r) =
          grads.at(leaves[static_cast<std::size_t>(r)]).transpose();

  CHECK(rel_err(analytic, diff::finite_diff_grad(value, raw)) < 1e-5);
}

TEST_CASE("l2 normalization values and gradient") {
  diff::Tape tape;
  const auto v = tape.param(col({3, 4}));
  const auto n = tape.l2_normalize(v);
  CHECK(tape.value(n)(0, 0) == doctest::Approx(0.6));
  CHECK(tape.value(n)(1, 0) == doctest::Approx(0.8));

  // Idempotent on unit vectors.
  const auto n2 = tape.l2_normalize(n);
  CHECK(tape.value(n2)(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(tape.value(n2)(1, 0) == doctest::Approx(0.8).epsilon(1e-12));

  // Projection Jacobian at (1,1), probed through a fixed co-vector.
  const Matrix at(col({1, 1}));
  auto probe = [](const Matrix& x) {
    diff::Tape t;
    const auto leaf = t.param(x);
    const auto unit = t.l2_normalize(leaf);
    const auto c = t.constant(col({0.25, -1.5}));
    t.set_terminal(t.dot(unit, c));
    return t;
  };
  diff::Tape g = probe(at);
  const Matrix analytic = diff::backward(g).at(0);
  const Matrix fd = diff::finite_diff_grad(
      [&](const Matrix& x) {
        diff::Tape t = probe(x);
        return t.value_scalar(t.terminal());
      },
      at);
  CHECK(rel_err(analytic, fd) < 1e-6);
}

TEST_CASE("l2 normalization norm contract over magnitudes") {
  Rng rng(3);
  for (double scale : {1e-6, 1e-3, 1.0, 1e3, 1e6}) {
    Matrix v = helpers::random_unit_rows(1, 5, rng).transpose() * scale;
    diff::Tape tape;
    const auto n = tape.l2_normalize(tape.param(v));
    CHECK(std::abs(tape.value(n).norm() - 1.0) < 1e-10);
  }
  diff::Tape tape;
  CHECK_THROWS_AS(tape.l2_normalize(tape.param(Matrix::Zero(3, 1))),
                  DegenerateVectorError);
  CHECK_THROWS_AS(diff::l2_normalized(Vector::Zero(3)),
                  DegenerateVectorError);
}

TEST_CASE("backward requires a scalar terminal") {
  diff::Tape tape;
  const auto x = tape.param(col({1, 2}));
  CHECK_THROWS_AS(diff::backward(tape), ContractError);  // none designated
  CHECK_THROWS_AS(tape.set_terminal(x), ContractError);  // not a scalar
}

TEST_CASE("backward is deterministic") {
  auto build = [] {
    diff::Tape tape;
    Rng rng(17);
    const Matrix v = helpers::random_unit_rows(6, 1, rng);
    const auto x = tape.param(v);
    const auto n = tape.l2_normalize(tape.relu(x));
    tape.set_terminal(tape.dot(n, n));
    return tape;
  };
  diff::Tape a = build();
  diff::Tape b = build();
  const Matrix ga = diff::backward(a).at(0);
  const Matrix gb = diff::backward(b).at(0);
  CHECK((ga - gb).cwiseAbs().maxCoeff() == 0.0);
}
