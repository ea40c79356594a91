#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "alertsieve/clustering.hpp"
#include "alertsieve/tlsh.hpp"

namespace alertsieve {

struct AnnParams {
  std::size_t k_build = 20;
  std::size_t iterations = 10;
  double sample_rate = 0.5;
  /// Stop early once an iteration changes fewer than this share of edges.
  double convergence = 0.001;
  /// Candidate queue bound during search; 0 means 3 * k_query. Never
  /// below k_query.
  std::size_t queue_width = 64;
  std::size_t entry_points = 8;
  /// Hash tables over sampled body buckets whose collisions seed the graph
  /// before the first join; 0 starts from random neighbors only.
  std::size_t lsh_tables = 24;
  std::uint64_t seed = 0x5EED;

  /// Throws InvalidArgument.
  void validate() const;
  bool operator==(const AnnParams&) const = default;
};

struct Neighbor {
  int cluster_id = 0;
  int distance = 0;
  bool operator==(const Neighbor&) const = default;
};

struct QueryResult {
  /// Ascending by (distance, cluster_id).
  std::vector<Neighbor> neighbors;
  bool operator==(const QueryResult&) const = default;
};

/// k-NN graph over cluster centroids, refined by NN-Descent and searched
/// best-first from fixed entry points (plus the centroid equal to the query,
/// if any). Immutable after build.
class AnnIndex {
public:
  struct Node {
    int cluster_id = 0;
    tlsh::Digest centroid;
    bool operator==(const Node&) const = default;
  };

  /// Throws EmptyIndex. Identical output for any worker count.
  static AnnIndex build(std::span<const Cluster> clusters, const AnnParams& params = {},
                        std::size_t workers = 0);

  [[nodiscard]] QueryResult query(const tlsh::Digest& q, std::size_t k) const;
  /// Same as calling query() per element.
  [[nodiscard]] std::vector<QueryResult> query_batch(std::span<const tlsh::Digest> queries,
                                                     std::size_t k,
                                                     std::size_t workers = 0) const;

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
  [[nodiscard]] const AnnParams& params() const noexcept { return params_; }
  [[nodiscard]] const std::vector<Node>& nodes() const noexcept { return nodes_; }
  /// Neighbor node indices of node i, nearest first.
  [[nodiscard]] const std::vector<std::uint32_t>& adjacency(std::size_t i) const {
    return graph_.at(i);
  }
  [[nodiscard]] const std::vector<std::uint32_t>& entry_points() const noexcept {
    return entries_;
  }
  /// Distance evaluations performed by queries on this thread so far.
  [[nodiscard]] static std::uint64_t thread_distance_count() noexcept;

  /// Search-time queue width override; the graph is untouched.
  [[nodiscard]] AnnIndex with_queue_width(std::size_t width) const;

  void save(std::ostream& out) const;
  /// Throws BundleMismatch on unknown formats or inconsistent contents.
  static AnnIndex load(std::istream& in);

  bool operator==(const AnnIndex& other) const {
    return params_ == other.params_ && nodes_ == other.nodes_ && graph_ == other.graph_ &&
           entries_ == other.entries_;
  }

private:
  AnnParams params_;
  std::vector<Node> nodes_;
  std::vector<std::vector<std::uint32_t>> graph_;
  std::vector<std::uint32_t> entries_;
  // Pruned union of forward and reverse edges, derived from graph_.
  std::vector<std::vector<std::uint32_t>> search_graph_;
  // Exact centroid lookup; a query equal to a centroid starts there.
  std::unordered_map<tlsh::Digest, std::uint32_t> exact_;

  void derive_search_graph();
};

/// Exact k nearest centroids by full scan, ties by cluster_id.
[[nodiscard]] QueryResult linear_search(std::span<const Cluster> clusters, const tlsh::Digest& q,
                                        std::size_t k);

/// Mean over queries of |ANN ∩ exact| / |exact|. Nodes tied with the exact
/// k-th distance count as members of the exact set.
/// Throws InvalidArgument on an empty query set.
[[nodiscard]] double measure_recall(const AnnIndex& index, std::span<const Cluster> clusters,
                                    std::span<const tlsh::Digest> queries, std::size_t k,
                                    std::size_t workers = 0);

}  // namespace alertsieve
