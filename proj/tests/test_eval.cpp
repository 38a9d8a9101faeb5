#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "maskrank/eval/metrics.hpp"
#include "maskrank/io/features.hpp"
#include "maskrank/rng.hpp"
#include "oracles.hpp"

using namespace maskrank;
using eval::FeatureSet;

namespace {

// Rows with exact prescribed similarities to e0, each on its own axis.
FeatureSet planted_gallery(const std::vector<double>& sims,
                           const std::vector<std::string>& ids,
                           const std::vector<std::string>& cams) {
  const Index d = static_cast<Index>(sims.size()) + 1;
  Matrix rows = Matrix::Zero(static_cast<Index>(sims.size()), d);
  for (std::size_t i = 0; i < sims.size(); ++i) {
    rows(static_cast<Index>(i), 0) = sims[i];
    rows(static_cast<Index>(i), static_cast<Index>(i) + 1) =
        std::sqrt(1.0 - sims[i] * sims[i]);
  }
  return FeatureSet(rows, ids, cams);
}

FeatureSet lone_query(Index d, const std::string& id, const std::string& cam) {
  Matrix row = Matrix::Zero(1, d);
  row(0, 0) = 1.0;
  return FeatureSet(row, {id}, {cam});
}

}  // namespace

TEST_CASE("gallery ranking orders by similarity with index ties") {
  Matrix rows(2, 2);
  rows << 1, 0, -1, 0;
  const FeatureSet gallery(rows, {"a", "b"}, {"c0", "c1"});
  Vector q(2);
  q << 1, 0;
  CHECK(eval::rank_gallery(q, gallery) == std::vector<int>{0, 1});
  Vector anti(2);
  anti << -1, 0;
  CHECK(eval::rank_gallery(anti, gallery) == std::vector<int>{1, 0});

  // All-equal similarities fall back to ascending gallery order.
  Matrix same(4, 2);
  for (int i = 0; i < 4; ++i) same.row(i) << 0, 1;
  const FeatureSet flat(same, {"a", "b", "c", "d"}, {"c0", "c0", "c0", "c0"});
  CHECK(eval::rank_gallery(q, flat) == std::vector<int>{0, 1, 2, 3});

  CHECK_THROWS_AS(eval::rank_gallery(q, FeatureSet(Matrix(0, 2), {}, {})),
                  ContractError);

  // Random instances against an independently sorted order.
  Rng rng(80);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_below(8));
    const Matrix feats = helpers::random_unit_rows(n + 1, 6, rng);
    const Vector query = feats.row(0).transpose();
    Matrix gal = feats.bottomRows(n);
    std::vector<std::string> ids(static_cast<std::size_t>(n), "x"),
        cams(static_cast<std::size_t>(n), "c0");
    std::vector<double> sims(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < 6; ++k) sims[static_cast<std::size_t>(i)] +=
          query[k] * gal(i, k);
    std::vector<int> expected(static_cast<std::size_t>(n));
    std::iota(expected.begin(), expected.end(), 0);
    std::stable_sort(expected.begin(), expected.end(), [&](int a, int b) {
      return sims[static_cast<std::size_t>(a)] >
             sims[static_cast<std::size_t>(b)];
    });
    CHECK(eval::rank_gallery(query, FeatureSet(gal, ids, cams)) == expected);
  }
}

TEST_CASE("average precision on a worked example") {
  // Correct matches land at ranks 1 and 3: AP = (1/1 + 2/3) / 2 = 5/6.
  const FeatureSet gallery =
      planted_gallery({0.9, 0.8, 0.7, 0.6, 0.5},
                      {"a", "b", "a", "c", "d"},
                      {"c1", "c0", "c1", "c0", "c0"});
  const FeatureSet query = lone_query(gallery.dim(), "a", "c0");
  const eval::EvalReport report = eval::evaluate_single_query(query, gallery);
  REQUIRE(report.per_query.size() == 1);
  CHECK(std::abs(report.per_query[0] - 5.0 / 6.0) < 1e-10);
  CHECK(std::abs(report.map - 5.0 / 6.0) < 1e-10);
  CHECK(report.skipped == 0);
  REQUIRE(report.cmc.size() == 5);
  for (double v : report.cmc) CHECK(v == 1.0);
  CHECK(report.rank_k(1) == 1.0);
  CHECK(report.rank_k(50) == 1.0);
}

TEST_CASE("cmc steps at the first correct rank") {
  const FeatureSet gallery = planted_gallery(
      {0.9, 0.8, 0.7}, {"b", "c", "a"}, {"c0", "c0", "c1"});
  const FeatureSet query = lone_query(gallery.dim(), "a", "c0");
  const eval::EvalReport report = eval::evaluate_single_query(query, gallery);
  REQUIRE(report.cmc.size() == 3);
  CHECK(report.cmc[0] == 0.0);
  CHECK(report.cmc[1] == 0.0);
  CHECK(report.cmc[2] == 1.0);
  CHECK(std::abs(report.per_query[0] - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("same-identity same-camera gallery entries never count") {
  // The top-similarity entry shares identity and camera with the query, so
  // the protocol must look past it entirely.
  const FeatureSet gallery = planted_gallery(
      {1.0, 0.7, 0.5}, {"a", "b", "a"}, {"c0", "c0", "c1"});
  const FeatureSet query = lone_query(gallery.dim(), "a", "c0");
  const eval::EvalReport report = eval::evaluate_single_query(query, gallery);
  CHECK(report.cmc[0] == 0.0);
  CHECK(report.cmc[1] == 1.0);
  CHECK(std::abs(report.per_query[0] - 0.5) < 1e-12);
}

TEST_CASE("queries with no reachable match are skipped, not scored") {
  const FeatureSet gallery = planted_gallery(
      {0.9, 0.4}, {"a", "b"}, {"c0", "c0"});
  Matrix rows = Matrix::Zero(2, gallery.dim());
  rows(0, 0) = 1.0;
  rows.row(1) = gallery.features().row(1);
  // Query 0 can only match the filtered same-camera copy of itself; query 1
  // sits on its gallery twin, a live match at rank 1.
  const FeatureSet queries(rows, {"a", "b"}, {"c0", "c1"});
  const eval::EvalReport report = eval::evaluate_single_query(queries,
                                                              gallery);
  CHECK(report.skipped == 1);
  REQUIRE(report.per_query.size() == 1);
  CHECK(report.per_query[0] == 1.0);
  CHECK(report.map == 1.0);

  const FeatureSet lonely = lone_query(gallery.dim(), "a", "c0");
  CHECK_THROWS_AS(eval::evaluate_single_query(lonely, gallery),
                  InsufficientDataError);
}

TEST_CASE("multi-query pooling averages then renormalizes") {
  Vector x(2), y(2);
  x << 1, 0;
  y << 0, 1;
  const Vector alone = eval::multi_query_pool({x});
  CHECK((alone - x).norm() < 1e-12);
  const Vector doubled = eval::multi_query_pool({x, x});
  CHECK((doubled - x).norm() < 1e-12);

  const Vector blended = eval::multi_query_pool({x, y});
  CHECK(std::abs(blended[0] - std::sqrt(0.5)) < 1e-12);
  CHECK(std::abs(blended[1] - std::sqrt(0.5)) < 1e-12);

  // Max pooling differs from mean pooling on asymmetric groups.
  Vector tilted(2);
  tilted << 0.6, 0.8;
  const Vector mean_pooled = eval::multi_query_pool({x, tilted});
  const Vector max_pooled =
      eval::multi_query_pool({x, tilted}, eval::PoolMode::kMax);
  CHECK(std::abs(max_pooled[0] - 1.0 / std::sqrt(1.0 + 0.64)) < 1e-12);
  CHECK(std::abs(max_pooled[1] - 0.8 / std::sqrt(1.0 + 0.64)) < 1e-12);
  CHECK(mean_pooled != max_pooled);

  Vector anti(2);
  anti << -1, 0;
  CHECK_THROWS_AS(eval::multi_query_pool({x, anti}), DegenerateVectorError);
  CHECK_THROWS_AS(eval::multi_query_pool({}), ContractError);
}

TEST_CASE("multi-query evaluation groups by identity and camera") {
  const FeatureSet gallery = planted_gallery(
      {0.9, 0.7, 0.5, 0.3}, {"a", "b", "a", "b"}, {"c1", "c1", "c1", "c0"});

  // Singleton groups reduce to the single-query protocol exactly.
  Rng rng(81);
  Matrix rows = helpers::random_unit_rows(3, gallery.dim(), rng);
  const FeatureSet singles(rows, {"a", "b", "a"}, {"c0", "c0", "c1"});
  const eval::EvalReport multi = eval::evaluate_multi_query(singles, gallery);
  const eval::EvalReport single = eval::evaluate_single_query(singles,
                                                              gallery);
  CHECK(multi.map == single.map);
  CHECK(multi.cmc == single.cmc);
  CHECK(multi.per_query == single.per_query);

  // Repeated (identity, camera) pairs pool into one query, keeping first
  // appearance order.
  Matrix repeated(3, gallery.dim());
  repeated.row(0) = rows.row(0);
  repeated.row(1) = rows.row(1);
  repeated.row(2) = rows.row(0);
  const FeatureSet grouped(repeated, {"a", "b", "a"}, {"c0", "c0", "c0"});
  const eval::EvalReport pooled = eval::evaluate_multi_query(grouped, gallery);
  REQUIRE(pooled.per_query.size() == 2);

  // Pooling duplicates of one row changes nothing, so query "a" scores as
  // its lone row would.
  Matrix first(1, gallery.dim());
  first.row(0) = rows.row(0);
  const eval::EvalReport lone = eval::evaluate_single_query(
      FeatureSet(first, {"a"}, {"c0"}), gallery);
  CHECK(std::abs(pooled.per_query[0] - lone.per_query[0]) < 1e-12);
}

TEST_CASE("evaluation is invariant to gallery order and global rotation") {
  Rng rng(82);
  const int nq = 6, ng = 20;
  const Matrix qrows = helpers::random_unit_rows(nq, 8, rng);
  const Matrix grows = helpers::random_unit_rows(ng, 8, rng);
  std::vector<std::string> qids, qcams, gids, gcams;
  for (int i = 0; i < nq; ++i) {
    qids.push_back("id" + std::to_string(i % 4));
    qcams.push_back("c0");
  }
  for (int i = 0; i < ng; ++i) {
    gids.push_back("id" + std::to_string(i % 5));
    gcams.push_back(i % 2 == 0 ? "c0" : "c1");
  }
  const FeatureSet queries(qrows, qids, qcams);
  const FeatureSet gallery(grows, gids, gcams);
  const eval::EvalReport base = eval::evaluate_single_query(queries, gallery);

  // Shuffle the gallery.
  std::vector<int> perm(static_cast<std::size_t>(ng));
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.uniform_below(i)]);
  Matrix shuffled(ng, 8);
  std::vector<std::string> sids(static_cast<std::size_t>(ng)),
      scams(static_cast<std::size_t>(ng));
  for (int i = 0; i < ng; ++i) {
    shuffled.row(i) = grows.row(perm[static_cast<std::size_t>(i)]);
    sids[static_cast<std::size_t>(i)] =
        gids[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    scams[static_cast<std::size_t>(i)] =
        gcams[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  const eval::EvalReport moved = eval::evaluate_single_query(
      queries, FeatureSet(shuffled, sids, scams));
  CHECK(moved.map == base.map);
  CHECK(moved.cmc == base.cmc);
  CHECK(moved.per_query == base.per_query);

  // Rotate every feature by one orthogonal matrix: ranks cannot change.
  Matrix seed(8, 8);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) seed(i, j) = rng.gaussian();
  const Matrix q_mat = Eigen::HouseholderQR<Matrix>(seed).householderQ();
  const eval::EvalReport rotated = eval::evaluate_single_query(
      FeatureSet(qrows * q_mat.transpose(), qids, qcams),
      FeatureSet(grows * q_mat.transpose(), gids, gcams));
  CHECK(rotated.map == base.map);
  CHECK(rotated.cmc == base.cmc);
  CHECK(rotated.per_query == base.per_query);
}

TEST_CASE("evaluator agrees with a brute-force oracle") {
  Rng rng(83);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int nq = 1 + static_cast<int>(rng.uniform_below(4));
    const int ng = 2 + static_cast<int>(rng.uniform_below(9));
    Matrix qrows = helpers::random_unit_rows(nq, 5, rng);
    Matrix grows = helpers::random_unit_rows(ng, 5, rng);
    // Occasional duplicated gallery rows force similarity ties.
    if (trial % 3 == 0 && ng >= 2) grows.row(1) = grows.row(0);
    std::vector<std::string> qids, qcams, gids, gcams;
    for (int i = 0; i < nq; ++i) {
      qids.push_back("p" + std::to_string(rng.uniform_below(4)));
      qcams.push_back("c" + std::to_string(rng.uniform_below(2)));
    }
    for (int i = 0; i < ng; ++i) {
      gids.push_back("p" + std::to_string(rng.uniform_below(4)));
      gcams.push_back("c" + std::to_string(rng.uniform_below(2)));
    }
    const FeatureSet queries(qrows, qids, qcams);
    const FeatureSet gallery(grows, gids, gcams);

    // Oracle pass: filter, rank, score with plain loops.
    std::vector<double> ap;
    std::vector<int> first_ranks;
    int skipped = 0;
    for (int q = 0; q < nq; ++q) {
      std::vector<double> sims;
      std::vector<bool> good;
      bool any_good = false;
      for (int g = 0; g < ng; ++g) {
        const auto qi = static_cast<std::size_t>(q);
        const auto gi = static_cast<std::size_t>(g);
        if (gids[gi] == qids[qi] && gcams[gi] == qcams[qi]) continue;
        double s = 0.0;
        for (int k = 0; k < 5; ++k) s += qrows(q, k) * grows(g, k);
        sims.push_back(s);
        const bool is_good = gids[gi] == qids[qi];
        good.push_back(is_good);
        any_good = any_good || is_good;
      }
      if (!any_good) {
        ++skipped;
        continue;
      }
      const auto scored = oracles::rank_and_score(sims, good);
      ap.push_back(scored.average_precision);
      first_ranks.push_back(scored.first_correct_rank);
    }

    if (ap.empty()) {
      CHECK_THROWS_AS(eval::evaluate_single_query(queries, gallery),
                      InsufficientDataError);
      continue;
    }
    ++checked;
    const eval::EvalReport report = eval::evaluate_single_query(queries,
                                                                gallery);
    CHECK(report.skipped == skipped);
    REQUIRE(report.per_query.size() == ap.size());
    for (std::size_t i = 0; i < ap.size(); ++i)
      CHECK(std::abs(report.per_query[i] - ap[i]) < 1e-12);
    const double mean_ap =
        std::accumulate(ap.begin(), ap.end(), 0.0) /
        static_cast<double>(ap.size());
    CHECK(std::abs(report.map - mean_ap) < 1e-12);

    REQUIRE(report.cmc.size() == static_cast<std::size_t>(ng));
    for (int r = 1; r <= ng; ++r) {
      double hits = 0.0;
      for (int fr : first_ranks)
        if (fr <= r) hits += 1.0;
      CHECK(std::abs(report.cmc[static_cast<std::size_t>(r - 1)] -
                     hits / static_cast<double>(ap.size())) < 1e-12);
    }
    // The curve is monotone and saturates at 1 over the evaluated queries.
    for (std::size_t r = 1; r < report.cmc.size(); ++r)
      CHECK(report.cmc[r] >= report.cmc[r - 1]);
    CHECK(report.cmc.back() == 1.0);
  }
  CHECK(checked > 200);
}

TEST_CASE("reports serialize to parseable json") {
  const FeatureSet gallery = planted_gallery(
      {0.9, 0.8, 0.7}, {"a", "b", "a"}, {"c1", "c0", "c1"});
  const FeatureSet query = lone_query(gallery.dim(), "a", "c0");
  const eval::EvalReport report = eval::evaluate_single_query(query, gallery);
  const nlohmann::json j = nlohmann::json::parse(eval::report_to_json(report));
  CHECK(j.at("map").get<double>() == doctest::Approx(report.map));
  CHECK(j.at("rank1").get<double>() == report.cmc[0]);
  CHECK(j.at("skipped").get<int>() == 0);
  CHECK(j.at("cmc").size() == report.cmc.size());
}

TEST_CASE("thread count never changes the report") {
  Rng rng(84);
  const Matrix qrows = helpers::random_unit_rows(64, 8, rng);
  const Matrix grows = helpers::random_unit_rows(40, 8, rng);
  std::vector<std::string> qids, qcams, gids, gcams;
  for (int i = 0; i < 64; ++i) {
    qids.push_back("id" + std::to_string(i % 8));
    qcams.push_back("c0");
  }
  for (int i = 0; i < 40; ++i) {
    gids.push_back("id" + std::to_string(i % 8));
    gcams.push_back(i % 2 == 0 ? "c1" : "c0");
  }
  const FeatureSet queries(qrows, qids, qcams);
  const FeatureSet gallery(grows, gids, gcams);

  setenv("MASKRANK_THREADS", "1", 1);
  const eval::EvalReport serial = eval::evaluate_single_query(queries,
                                                              gallery);
  setenv("MASKRANK_THREADS", "4", 1);
  const eval::EvalReport parallel = eval::evaluate_single_query(queries,
                                                                gallery);
  setenv("MASKRANK_THREADS", "not_a_number", 1);
  CHECK_THROWS_AS(eval::evaluate_single_query(queries, gallery), ConfigError);
  unsetenv("MASKRANK_THREADS");

  CHECK(parallel.map == serial.map);
  CHECK(parallel.cmc == serial.cmc);
  CHECK(parallel.per_query == serial.per_query);
  CHECK(parallel.skipped == serial.skipped);
}

TEST_CASE("feature sets enforce unit rows") {
  Matrix rows(1, 3);
  rows << 0.5, 0.5, 0.5;
  CHECK_THROWS_AS(FeatureSet(rows, {"a"}, {"c0"}), ContractError);
  Matrix unit(1, 3);
  unit << 1, 0, 0;
  CHECK_THROWS_AS(FeatureSet(unit, {"a", "b"}, {"c0"}), ContractError);
  CHECK_NOTHROW(FeatureSet(unit, {"a"}, {"c0"}));
}
