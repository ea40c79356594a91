#include "alertsieve/bench.hpp"

#include <algorithm>
#include <chrono>
#include <climits>
#include <iomanip>
#include <set>
#include <sstream>

#include "alertsieve/alerts.hpp"
#include "alertsieve/corpus.hpp"
#include "alertsieve/error.hpp"
#include "alertsieve/parallel.hpp"
#include "alertsieve/rng.hpp"

namespace alertsieve {
namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kFamilySize = 5;
constexpr std::size_t kIndexedVariants = 3;
constexpr std::size_t kFamilyBlock = 256;

struct FamilyClusters {
  std::vector<Cluster> clusters;  // local ids
  std::vector<tlsh::Digest> members;
  std::vector<tlsh::Digest> fresh;
  std::size_t templates = 0;
};

std::optional<tlsh::Digest> line_digest(const CommandTemplate& t, const std::string& command_line) {
  AlertRecord r;
  r.initiator_kind = t.kind;
  r.command_line = command_line;
  r.parent_path = t.parent_path;
  r.process_path = t.process_path;
  try {
    return tlsh::try_digest(effective_command_line(r));
  } catch (const Error&) {
    return std::nullopt;
  }
}

FamilyClusters cluster_family(std::uint64_t seed, std::size_t family, int cdist) {
  const auto templates = make_templates(kFamilySize, kFamilySize, kIndexedVariants + 1,
                                        derive_seed(seed, family));
  FamilyClusters out;
  out.templates = templates.size();
  std::vector<tlsh::Digest> lines;
  for (const auto& t : templates) {
    if (auto d = line_digest(t, t.command_line)) lines.push_back(*d);
    for (std::size_t v = 0; v < t.variants.size(); ++v) {
      auto d = line_digest(t, t.variants[v]);
      if (!d) continue;
      (v < kIndexedVariants ? lines : out.fresh).push_back(*d);
    }
  }
  if (lines.empty()) return out;
  ClusterParams params;
  params.cdist = cdist;
  auto model = hact_cluster(lines, params, 1);
  out.clusters = std::move(model.clusters);
  out.members = std::move(model.digests);
  return out;
}

template <class T>
std::vector<T> sample(std::vector<T> pool, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  n = std::min(n, pool.size());
  for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  pool.resize(n);
  return pool;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

AnnWorkload make_ann_workload(std::size_t target_clusters, std::size_t n_queries, std::uint64_t seed,
                              int cdist, std::size_t workers) {
  if (target_clusters == 0) throw Error(ErrorCode::InvalidArgument, "target_clusters must be positive");
  AnnWorkload w;
  std::vector<tlsh::Digest> members, fresh;
  for (std::size_t first = 0; w.clusters.size() < target_clusters; first += kFamilyBlock) {
    std::vector<FamilyClusters> block(kFamilyBlock);
    parallel_for(kFamilyBlock, workers,
                 [&](std::size_t i) { block[i] = cluster_family(seed, first + i, cdist); }, 4);
    for (auto& f : block) {
      if (w.clusters.size() >= target_clusters) break;
      const int offset = w.clusters.empty() ? 0 : w.clusters.back().cluster_id + 1;
      for (auto c : f.clusters) {
        c.cluster_id += offset;
        w.clusters.push_back(c);
      }
      members.insert(members.end(), f.members.begin(), f.members.end());
      fresh.insert(fresh.end(), f.fresh.begin(), f.fresh.end());
      w.templates += f.templates;
    }
  }

  std::set<tlsh::Digest> centroids;
  for (const auto& c : w.clusters) centroids.insert(c.centroid);
  std::set<tlsh::Digest> seen(centroids);
  std::vector<tlsh::Digest> member_pool, fresh_pool;
  for (const auto& d : members) {
    if (seen.insert(d).second) member_pool.push_back(d);
  }
  for (const auto& d : fresh) {
    if (seen.insert(d).second) fresh_pool.push_back(d);
  }
  w.queries = sample(std::move(member_pool), n_queries, derive_seed(seed, 0xA11));
  w.fresh_queries = sample(std::move(fresh_pool), n_queries, derive_seed(seed, 0xF7E5));
  return w;
}

BenchReport run_ann_bench(const AnnWorkload& workload, const AnnParams& params, const BenchOptions& options) {
  if (workload.queries.empty()) throw Error(ErrorCode::InvalidArgument, "bench needs queries");
  if (options.ks.empty() || options.batch == 0) {
    throw Error(ErrorCode::InvalidArgument, "bench needs at least one k and a positive batch");
  }
  const std::size_t workers = options.workers == 0 ? default_workers() : options.workers;
  const std::size_t max_k = *std::max_element(options.ks.begin(), options.ks.end());
  const auto& clusters = workload.clusters;
  const auto& queries = workload.queries;

  BenchReport report;
  report.index_size = clusters.size();
  report.queries = queries.size();
  report.batch = options.batch;
  report.workers = workers;

  auto start = Clock::now();
  const auto index = AnnIndex::build(clusters, params, workers);
  report.build_seconds = seconds_since(start);

  const std::size_t n_batches = (queries.size() + options.batch - 1) / options.batch;
  auto batch_span = [&](std::size_t b) {
    const std::size_t begin = b * options.batch;
    return std::span<const tlsh::Digest>(queries).subspan(
        begin, std::min(options.batch, queries.size() - begin));
  };

  // Linear scan cost does not depend on k beyond the partial sort.
  const std::size_t linear_batches = std::clamp<std::size_t>(options.linear_batches, 1, n_batches);
  start = Clock::now();
  std::size_t sink = 0;
  for (std::size_t b = 0; b < linear_batches; ++b) {
    for (const auto& q : batch_span(b)) sink += linear_search(clusters, q, max_k).neighbors.size();
  }
  const double linear = seconds_since(start) / static_cast<double>(linear_batches);

  std::vector<std::vector<QueryResult>> approx(options.ks.size());
  for (std::size_t i = 0; i < options.ks.size(); ++i) {
    SearchTimes t;
    t.k = options.ks[i];
    t.linear = linear;
    start = Clock::now();
    for (std::size_t b = 0; b < n_batches; ++b) sink += index.query_batch(batch_span(b), t.k, 1).size();
    t.ann_single = seconds_since(start) / static_cast<double>(n_batches);
    start = Clock::now();
    for (std::size_t b = 0; b < n_batches; ++b) {
      auto part = index.query_batch(batch_span(b), t.k, workers);
      approx[i].insert(approx[i].end(), std::make_move_iterator(part.begin()),
                       std::make_move_iterator(part.end()));
    }
    t.ann_multi = seconds_since(start) / static_cast<double>(n_batches);
    report.times.push_back(t);
  }
  if (sink == 0) throw Error(ErrorCode::InvalidArgument, "empty search results");

  const double smallest_k_multi = report.times[static_cast<std::size_t>(
      std::min_element(options.ks.begin(), options.ks.end()) - options.ks.begin())].ann_multi;
  report.throughput.batch_ms = 1000.0 * smallest_k_multi;
  report.throughput.per_alert_ms = report.throughput.batch_ms / static_cast<double>(options.batch);
  report.throughput.alerts_per_second =
      report.throughput.per_alert_ms > 0 ? 1000.0 / report.throughput.per_alert_ms : 0.0;

  // Exact neighbors once at the largest k; smaller k read a prefix, which
  // is what a scan at that k returns.
  const auto& fresh = workload.fresh_queries;
  std::vector<tlsh::Digest> all(queries.begin(), queries.end());
  all.insert(all.end(), fresh.begin(), fresh.end());
  std::vector<QueryResult> exact(all.size());
  parallel_for(all.size(), workers, [&](std::size_t i) { exact[i] = linear_search(clusters, all[i], max_k); }, 16);
  std::vector<std::vector<QueryResult>> fresh_approx(options.ks.size());
  for (std::size_t i = 0; i < options.ks.size(); ++i) {
    fresh_approx[i] = index.query_batch(fresh, options.ks[i], workers);
  }

  auto hit_rate = [&](const QueryResult& ann, const QueryResult& truth, std::size_t k) {
    const std::size_t n = std::min(k, truth.neighbors.size());
    if (n == 0) return 1.0;
    const int kth = truth.neighbors[n - 1].distance;
    std::size_t hits = 0;
    for (const auto& a : ann.neighbors) hits += a.distance <= kth ? 1 : 0;
    return static_cast<double>(std::min(hits, n)) / static_cast<double>(n);
  };
  const std::vector<std::pair<int, int>> bands{{0, 24}, {25, 49}, {50, 74}, {75, 124}, {125, INT_MAX}};
  std::vector<double> band_sum(bands.size(), 0.0);
  std::vector<std::size_t> band_count(bands.size(), 0);
  const auto smallest = static_cast<std::size_t>(
      std::min_element(options.ks.begin(), options.ks.end()) - options.ks.begin());
  for (std::size_t i = 0; i < options.ks.size(); ++i) {
    RecallRow row;
    row.k = options.ks[i];
    double sum = 0.0, fresh_sum = 0.0;
    for (std::size_t q = 0; q < all.size(); ++q) {
      const bool is_fresh = q >= queries.size();
      const auto& ann = is_fresh ? fresh_approx[i][q - queries.size()] : approx[i][q];
      const double r = hit_rate(ann, exact[q], row.k);
      (is_fresh ? fresh_sum : sum) += r;
      if (i == smallest) {
        const int nearest = exact[q].neighbors.front().distance;
        for (std::size_t b = 0; b < bands.size(); ++b) {
          if (nearest >= bands[b].first && nearest <= bands[b].second) {
            band_sum[b] += r;
            ++band_count[b];
          }
        }
      }
    }
    row.recall = sum / static_cast<double>(queries.size());
    row.fresh_recall = fresh.empty() ? 0.0 : fresh_sum / static_cast<double>(fresh.size());
    report.recall.push_back(row);
  }
  for (std::size_t b = 0; b < bands.size(); ++b) {
    report.strata.push_back({bands[b].first, bands[b].second, band_count[b],
                             band_count[b] ? band_sum[b] / static_cast<double>(band_count[b]) : 0.0});
  }
  return report;
}

std::string format_bench(const std::vector<BenchReport>& reports) {
  std::ostringstream out;
  auto header = [&](const char* first) {
    out << first;
    for (const auto& r : reports) out << "\tindex=" << r.index_size;
    out << '\n';
  };
  out << std::fixed;
  if (reports.empty()) return {};
  const auto& ks = reports.front().times;

  out << "search time per batch of " << reports.front().batch << " queries (s)\n";
  out << "k";
  for (const char* part : {"linear", "ann_1_worker", "ann_n_workers"}) {
    for (const auto& r : reports) out << '\t' << part << "@" << r.index_size;
  }
  out << '\n' << std::setprecision(4);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    out << ks[i].k;
    for (const auto& r : reports) out << '\t' << r.times[i].linear;
    for (const auto& r : reports) out << '\t' << r.times[i].ann_single;
    for (const auto& r : reports) out << '\t' << r.times[i].ann_multi;
    out << '\n';
  }

  out << "\nrecall\n";
  header("k");
  out << std::setprecision(3);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    out << ks[i].k;
    for (const auto& r : reports) out << '\t' << r.recall[i].recall;
    out << '\n';
  }
  out << "\nrecall on fresh edits\n";
  header("k");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    out << ks[i].k;
    for (const auto& r : reports) out << '\t' << r.recall[i].fresh_recall;
    out << '\n';
  }

  out << "\nrecall at k=" << ks.front().k << " by distance to nearest centroid, all queries\n";
  header("distance");
  const auto& strata = reports.front().strata;
  for (std::size_t b = 0; b < strata.size(); ++b) {
    out << strata[b].lo << '-';
    if (strata[b].hi == INT_MAX) {
      out << "max";
    } else {
      out << strata[b].hi;
    }
    for (const auto& r : reports) out << '\t' << r.strata[b].recall << " (" << r.strata[b].queries << ")";
    out << '\n';
  }

  out << "\nthroughput with " << reports.front().workers << " workers\n";
  header("measure");
  out << std::setprecision(2) << "total_ms";
  for (const auto& r : reports) out << '\t' << r.throughput.batch_ms;
  out << "\nper_alert_ms";
  out << std::setprecision(4);
  for (const auto& r : reports) out << '\t' << r.throughput.per_alert_ms;
  out << "\nmax_alerts_per_s" << std::setprecision(0);
  for (const auto& r : reports) out << '\t' << r.throughput.alerts_per_second;
  out << '\n';
  return out.str();
}

}  // namespace alertsieve
