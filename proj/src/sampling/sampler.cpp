#include "maskrank/sampling/sampler.hpp"

#include <algorithm>
#include <string>

namespace maskrank::sampling {

void DatasetIndex::add(int identity, int camera) {
  by_identity_[identity].push_back(size());
  identity_.push_back(identity);
  camera_.push_back(camera);
}

const std::vector<int>& DatasetIndex::images_of(int identity) const {
  static const std::vector<int> kEmpty;
  const auto it = by_identity_.find(identity);
  return it == by_identity_.end() ? kEmpty : it->second;
}

std::vector<int> DatasetIndex::identities() const {
  std::vector<int> out;
  out.reserve(by_identity_.size());
  for (const auto& [id, images] : by_identity_) out.push_back(id);
  return out;
}

BatchSpec::BatchSpec(int positives_in, int negatives_in)
    : positives(positives_in), negatives(negatives_in) {
  if (positives < 2)
    throw ConfigError("BatchSpec: need at least two positive rows");
  if (negatives < 1)
    throw ConfigError("BatchSpec: need at least one negative row");
}

std::vector<int> eligible_identities(const DatasetIndex& index) {
  std::vector<int> out;
  for (int id : index.identities())
    if (index.images_of(id).size() >= 2) out.push_back(id);
  return out;
}

SampledBatch sample_batch(const DatasetIndex& index, const BatchSpec& spec,
                          Rng& rng) {
  const std::vector<int> eligible = eligible_identities(index);
  if (eligible.empty())
    throw InsufficientDataError(
        "sample_batch: no identity has two or more images");

  const int anchor_id = eligible[static_cast<std::size_t>(
      rng.uniform_below(eligible.size()))];
  const std::vector<int>& anchor_images = index.images_of(anchor_id);
  const int k = static_cast<int>(anchor_images.size());
  const int n_pos = std::min(spec.positives, k);
  const int n_neg = spec.batch_size() - n_pos;

  std::vector<int> others;
  for (int id : index.identities())
    if (id != anchor_id) others.push_back(id);
  if (static_cast<int>(others.size()) < n_neg)
    throw InsufficientDataError(
        "sample_batch: need " + std::to_string(n_neg) +
        " other identities, index has " + std::to_string(others.size()));

  SampledBatch out{
      losses::RankingBatch(0, {}, {}), {}, {}, {}};
  out.records = rng.sample_without_replacement(anchor_images,
                                               static_cast<std::size_t>(n_pos));
  for (int id : rng.sample_without_replacement(others,
                                               static_cast<std::size_t>(n_neg))) {
    const std::vector<int>& images = index.images_of(id);
    out.records.push_back(images[static_cast<std::size_t>(
        rng.uniform_below(images.size()))]);
  }

  out.identity.reserve(out.records.size());
  out.camera.reserve(out.records.size());
  for (int record : out.records) {
    out.identity.push_back(index.identity_of(record));
    out.camera.push_back(index.camera_of(record));
  }

  std::vector<int> positives(static_cast<std::size_t>(n_pos - 1));
  for (int i = 1; i < n_pos; ++i) positives[static_cast<std::size_t>(i - 1)] = i;
  std::vector<int> negatives(static_cast<std::size_t>(n_neg));
  for (int i = 0; i < n_neg; ++i)
    negatives[static_cast<std::size_t>(i)] = n_pos + i;
  out.structure =
      losses::RankingBatch(0, std::move(positives), std::move(negatives));
  return out;
}

}  // namespace maskrank::sampling
