#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "alertsieve/ann_index.hpp"
#include "alertsieve/clustering.hpp"

namespace alertsieve {

/// Clusters built from generated command-line templates, plus query sets.
struct AnnWorkload {
  std::vector<Cluster> clusters;
  /// Distinct clustered lines that are not centroids themselves.
  std::vector<tlsh::Digest> queries;
  /// Fresh edits of template lines, never seen while clustering. Many land
  /// beyond cdist of every centroid.
  std::vector<tlsh::Digest> fresh_queries;
  std::size_t templates = 0;
};

/// Adds template families (each template plus three drifted variants,
/// clustered family by family at `cdist`) until at least `target_clusters`
/// clusters exist. Queries are drawn without replacement under `seed`.
[[nodiscard]] AnnWorkload make_ann_workload(std::size_t target_clusters, std::size_t n_queries,
                                            std::uint64_t seed, int cdist = 50,
                                            std::size_t workers = 0);

struct BenchOptions {
  std::vector<std::size_t> ks{1, 3, 5};
  std::size_t batch = 500;
  std::size_t workers = 0;
  /// Linear search is timed on this many batches only.
  std::size_t linear_batches = 2;
};

/// Seconds per batch.
struct SearchTimes {
  std::size_t k = 0;
  double linear = 0.0;
  double ann_single = 0.0;
  double ann_multi = 0.0;
};

struct RecallRow {
  std::size_t k = 0;
  double recall = 0.0;
  double fresh_recall = 0.0;
};

/// Recall at the smallest k by distance from the query to its nearest
/// centroid, over queries and fresh queries together.
struct RecallStratum {
  int lo = 0;
  int hi = 0;  // inclusive
  std::size_t queries = 0;
  double recall = 0.0;
};

struct Throughput {
  double batch_ms = 0.0;
  double per_alert_ms = 0.0;
  double alerts_per_second = 0.0;
};

struct BenchReport {
  std::size_t index_size = 0;
  std::size_t queries = 0;
  std::size_t batch = 0;
  std::size_t workers = 0;
  double build_seconds = 0.0;
  std::vector<SearchTimes> times;
  std::vector<RecallRow> recall;
  std::vector<RecallStratum> strata;
  /// Multi-worker search at the smallest k.
  Throughput throughput;
};

/// Builds the index over the workload's clusters and measures it against
/// the linear scan. Throws InvalidArgument on empty query sets or k lists.
[[nodiscard]] BenchReport run_ann_bench(const AnnWorkload& workload, const AnnParams& params,
                                        const BenchOptions& options = {});

/// Search-time, recall and throughput tables, one column per report.
[[nodiscard]] std::string format_bench(const std::vector<BenchReport>& reports);

}  // namespace alertsieve
