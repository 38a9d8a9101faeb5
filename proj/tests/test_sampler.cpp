#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "maskrank/rng.hpp"
#include "maskrank/sampling/sampler.hpp"

using namespace maskrank;
using sampling::BatchSpec;
using sampling::DatasetIndex;

namespace {

// identities: count of images per identity, in insertion order.
DatasetIndex make_index(const std::vector<int>& image_counts) {
  DatasetIndex index;
  for (std::size_t id = 0; id < image_counts.size(); ++id)
    for (int i = 0; i < image_counts[id]; ++i)
      index.add(static_cast<int>(id), i % 2);
  return index;
}

}  // namespace

TEST_CASE("eligible identities need at least two images") {
  const DatasetIndex index = make_index({3, 1, 2});
  const auto eligible = sampling::eligible_identities(index);
  CHECK(eligible == std::vector<int>{0, 2});

  const DatasetIndex empty;
  CHECK(sampling::eligible_identities(empty).empty());

  // Random census against a brute-force filter.
  Rng rng(50);
  DatasetIndex random_index;
  std::map<int, int> counts;
  for (int r = 0; r < 400; ++r) {
    const int id = static_cast<int>(rng.uniform_below(100));
    random_index.add(id, static_cast<int>(rng.uniform_below(2)));
    ++counts[id];
  }
  std::vector<int> expected;
  for (const auto& [id, count] : counts)
    if (count >= 2) expected.push_back(id);
  auto got = sampling::eligible_identities(random_index);
  std::sort(got.begin(), got.end());
  CHECK(got == expected);
}

TEST_CASE("sampled batch shape and identity structure") {
  const DatasetIndex index = make_index(std::vector<int>(60, 12));
  Rng rng(51);
  const auto batch = sampling::sample_batch(index, BatchSpec{}, rng);

  REQUIRE(batch.records.size() == 64);
  REQUIRE(batch.identity.size() == 64);
  REQUIRE(batch.camera.size() == 64);

  // Rows 0..9 share the anchor identity, row 0 being the anchor itself.
  const int anchor_id = batch.identity[0];
  std::set<int> negative_ids;
  for (int row = 0; row < 64; ++row) {
    const auto i = static_cast<std::size_t>(row);
    CHECK(index.identity_of(batch.records[i]) == batch.identity[i]);
    CHECK(index.camera_of(batch.records[i]) == batch.camera[i]);
    if (row < 10) {
      CHECK(batch.identity[i] == anchor_id);
    } else {
      CHECK(batch.identity[i] != anchor_id);
      negative_ids.insert(batch.identity[i]);
    }
  }
  // Negatives come from 54 distinct identities, one image each.
  CHECK(negative_ids.size() == 54);

  // The positive rows are distinct images of the anchor identity.
  std::set<int> positive_records(batch.records.begin(),
                                 batch.records.begin() + 10);
  CHECK(positive_records.size() == 10);

  // The ranking structure mirrors the layout.
  CHECK(batch.structure.anchor() == 0);
  CHECK(batch.structure.positives().size() == 9);
  CHECK(batch.structure.negatives().size() == 54);
  for (std::size_t i = 0; i < 9; ++i)
    CHECK(batch.structure.positives()[i] == static_cast<int>(i) + 1);
  for (std::size_t i = 0; i < 54; ++i)
    CHECK(batch.structure.negatives()[i] == static_cast<int>(i) + 10);
}

TEST_CASE("scarce positives shrink the positive block") {
  // 61 identities but only 4 images each: the positive block caps at k and
  // the negative block fills the rest of the 64 rows.
  const DatasetIndex index = make_index(std::vector<int>(61, 4));
  Rng rng(52);
  const auto batch = sampling::sample_batch(index, BatchSpec{}, rng);
  REQUIRE(batch.records.size() == 64);
  const int anchor_id = batch.identity[0];
  int positives = 0;
  while (positives < 64 &&
         batch.identity[static_cast<std::size_t>(positives)] == anchor_id)
    ++positives;
  CHECK(positives == 4);
  CHECK(batch.structure.positives().size() == 3);
  CHECK(batch.structure.negatives().size() == 60);
}

TEST_CASE("insufficient identities are rejected") {
  // 10 positives + 54 distinct negative identities needs 55 identities.
  const DatasetIndex enough = make_index(std::vector<int>(55, 10));
  Rng rng(53);
  CHECK_NOTHROW(sampling::sample_batch(enough, BatchSpec{}, rng));

  const DatasetIndex short_one = make_index(std::vector<int>(54, 10));
  CHECK_THROWS_AS(sampling::sample_batch(short_one, BatchSpec{}, rng),
                  InsufficientDataError);

  // No identity with two images means nothing can anchor.
  const DatasetIndex all_single = make_index(std::vector<int>(80, 1));
  CHECK_THROWS_AS(sampling::sample_batch(all_single, BatchSpec{}, rng),
                  InsufficientDataError);
}

TEST_CASE("sampling is deterministic under the seed") {
  const DatasetIndex index = make_index(std::vector<int>(60, 8));
  Rng a(99), b(99);
  for (int i = 0; i < 20; ++i) {
    const auto left = sampling::sample_batch(index, BatchSpec{}, a);
    const auto right = sampling::sample_batch(index, BatchSpec{}, b);
    CHECK(left.records == right.records);
    CHECK(left.identity == right.identity);
    CHECK(left.camera == right.camera);
  }
}

TEST_CASE("batch invariants hold across ten thousand draws") {
  const DatasetIndex index = make_index(std::vector<int>(60, 12));
  Rng rng(54);
  std::map<int, int> anchor_count;
  bool all_good = true;
  for (int draw = 0; draw < 10000; ++draw) {
    const auto batch = sampling::sample_batch(index, BatchSpec{}, rng);
    const int anchor_id = batch.identity[0];
    ++anchor_count[anchor_id];

    all_good = all_good && batch.records.size() == 64;
    std::set<int> neg_ids;
    std::set<int> pos_records;
    for (int row = 0; row < 64; ++row) {
      const auto i = static_cast<std::size_t>(row);
      if (row < 10) {
        all_good = all_good && batch.identity[i] == anchor_id;
        pos_records.insert(batch.records[i]);
      } else {
        all_good = all_good && batch.identity[i] != anchor_id;
        neg_ids.insert(batch.identity[i]);
      }
    }
    all_good = all_good && neg_ids.size() == 54 && pos_records.size() == 10;
    if (!all_good) break;
  }
  CHECK(all_good);

  // Every identity anchors, and no identity dominates: with 10000 draws
  // over 60 identities the expected count is ~166.7 with sd ~12.8.
  CHECK(anchor_count.size() == 60);
  for (const auto& [id, count] : anchor_count) {
    CHECK(count > 100);
    CHECK(count < 235);
  }
}
