#include "maskrank/eval/metrics.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <thread>

#include "json.hpp"
#include "maskrank/diff/tape.hpp"

namespace maskrank::eval {

double EvalReport::rank_k(int k) const {
  if (cmc.empty() || k < 1) throw ContractError("rank_k: bad rank or empty curve");
  const std::size_t i = std::min(static_cast<std::size_t>(k),
                                 cmc.size());
  return cmc[i - 1];
}

std::vector<int> rank_gallery(const Vector& query, const FeatureSet& gallery) {
  if (gallery.size() == 0) throw ContractError("rank_gallery: empty gallery");
  if (gallery.dim() != query.size())
    throw ContractError("rank_gallery: dimension mismatch");
  const Vector sims = gallery.features() * query;
  std::vector<int> order(static_cast<std::size_t>(gallery.size()));
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return sims[a] > sims[b]; });
  return order;
}

namespace {

int thread_budget(int work_items) {
  int budget = 1;
  if (const char* env = std::getenv("MASKRANK_THREADS")) {
    try {
      budget = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw ConfigError("MASKRANK_THREADS must be a positive integer");
    }
  }
  return std::min(budget, std::max(1, work_items));
}

struct QueryOutcome {
  bool skipped = true;
  int first_correct = 0;  // 0-based rank of the first match
  double ap = 0.0;
};

// One query against the gallery: filter out same-identity-same-camera
// entries, rank the rest, take the first-match rank and average precision.
QueryOutcome evaluate_one(const FeatureSet& queries, Index q,
                          const FeatureSet& gallery) {
  const std::size_t qi = static_cast<std::size_t>(q);
  const Vector sims = gallery.features() * queries.row(q);
  std::vector<int> kept;
  kept.reserve(static_cast<std::size_t>(gallery.size()));
  std::size_t total_correct = 0;
  for (Index g = 0; g < gallery.size(); ++g) {
    const std::size_t gi = static_cast<std::size_t>(g);
    const bool same_id = gallery.identity()[gi] == queries.identity()[qi];
    if (same_id && gallery.camera()[gi] == queries.camera()[qi]) continue;
    kept.push_back(static_cast<int>(g));
    if (same_id) ++total_correct;
  }
  QueryOutcome out;
  if (total_correct == 0) return out;  // nothing correct can be retrieved

  // kept ascends in gallery index, so the stable sort breaks similarity
  // ties toward the lower index.
  std::stable_sort(kept.begin(), kept.end(),
                   [&](int a, int b) { return sims[a] > sims[b]; });
  out.skipped = false;
  std::size_t seen_correct = 0;
  double precision_sum = 0.0;
  for (std::size_t pos = 0; pos < kept.size(); ++pos) {
    const std::size_t gi = static_cast<std::size_t>(kept[pos]);
    if (gallery.identity()[gi] != queries.identity()[qi]) continue;
    ++seen_correct;
    if (seen_correct == 1) out.first_correct = static_cast<int>(pos);
    precision_sum +=
        static_cast<double>(seen_correct) / static_cast<double>(pos + 1);
  }
  out.ap = precision_sum / static_cast<double>(total_correct);
  return out;
}

}  // namespace

EvalReport evaluate_single_query(const FeatureSet& queries,
                                 const FeatureSet& gallery) {
  if (queries.size() == 0) throw ContractError("evaluate: no queries");
  if (gallery.size() == 0) throw ContractError("evaluate: empty gallery");
  if (queries.dim() != gallery.dim())
    throw ContractError("evaluate: feature dimensions differ");

  // Each slot is written by exactly one worker, so the merge below is
  // independent of the thread count.
  std::vector<QueryOutcome> outcomes(static_cast<std::size_t>(queries.size()));
  const int threads = thread_budget(static_cast<int>(queries.size()));
  if (threads <= 1) {
    for (Index q = 0; q < queries.size(); ++q)
      outcomes[static_cast<std::size_t>(q)] =
          evaluate_one(queries, q, gallery);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (Index q = t; q < queries.size(); q += threads)
          outcomes[static_cast<std::size_t>(q)] =
              evaluate_one(queries, q, gallery);
      });
    }
    for (std::thread& th : pool) th.join();
  }

  EvalReport report;
  report.cmc.assign(static_cast<std::size_t>(gallery.size()), 0.0);
  for (const QueryOutcome& out : outcomes) {
    if (out.skipped) {
      ++report.skipped;
      continue;
    }
    report.per_query.push_back(out.ap);
    for (std::size_t r = static_cast<std::size_t>(out.first_correct);
         r < report.cmc.size(); ++r)
      report.cmc[r] += 1.0;
  }
  if (report.per_query.empty())
    throw InsufficientDataError(
        "evaluate: every query lost all its matches to filtering");
  const double evaluated = static_cast<double>(report.per_query.size());
  for (double& v : report.cmc) v /= evaluated;
  double ap_sum = 0.0;
  for (double ap : report.per_query) ap_sum += ap;
  report.map = ap_sum / evaluated;
  return report;
}

Vector multi_query_pool(const std::vector<Vector>& group, PoolMode mode) {
  if (group.empty()) throw ContractError("multi_query_pool: empty group");
  Vector pooled = group[0];
  for (std::size_t i = 1; i < group.size(); ++i) {
    if (group[i].size() != pooled.size())
      throw ContractError("multi_query_pool: dimension mismatch");
    if (mode == PoolMode::kMean)
      pooled += group[i];
    else
      pooled = pooled.cwiseMax(group[i]);
  }
  if (mode == PoolMode::kMean) pooled /= static_cast<double>(group.size());
  return diff::l2_normalized(pooled);
}

EvalReport evaluate_multi_query(const FeatureSet& queries,
                                const FeatureSet& gallery, PoolMode mode) {
  if (queries.size() == 0) throw ContractError("evaluate: no queries");
  std::vector<std::pair<std::string, std::string>> group_keys;
  std::map<std::pair<std::string, std::string>, std::vector<Index>> groups;
  for (Index q = 0; q < queries.size(); ++q) {
    const std::size_t qi = static_cast<std::size_t>(q);
    const auto key = std::make_pair(queries.identity()[qi],
                                    queries.camera()[qi]);
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) group_keys.push_back(key);
    it->second.push_back(q);
  }

  Matrix pooled(static_cast<Index>(group_keys.size()), queries.dim());
  std::vector<std::string> identity, camera;
  for (std::size_t g = 0; g < group_keys.size(); ++g) {
    std::vector<Vector> members;
    for (Index q : groups[group_keys[g]]) members.push_back(queries.row(q));
    pooled.row(static_cast<Index>(g)) =
        multi_query_pool(members, mode).transpose();
    identity.push_back(group_keys[g].first);
    camera.push_back(group_keys[g].second);
  }
  return evaluate_single_query(
      FeatureSet(std::move(pooled), std::move(identity), std::move(camera)),
      gallery);
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["rank1"] = report.rank_k(1);
  j["rank5"] = report.rank_k(5);
  j["rank10"] = report.rank_k(10);
  j["map"] = report.map;
  j["cmc"] = report.cmc;
  j["skipped"] = report.skipped;
  return j.dump();
}

}  // namespace maskrank::eval
