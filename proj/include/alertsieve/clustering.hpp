#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "alertsieve/alerts.hpp"
#include "alertsieve/tlsh.hpp"

namespace alertsieve {

struct ClusterParams {
  int cdist = 50;
  int sweep_begin = 30;
  int sweep_end = 70;
  int sweep_step = 5;
  /// Membership threshold at assignment time: the cluster's own radius
  /// instead of the global cdist.
  bool assign_by_radius = false;

  /// Throws InvalidArgument on a nonpositive cdist or a bad sweep range.
  void validate() const;
  [[nodiscard]] std::vector<int> sweep_values() const;
};

struct Cluster {
  int cluster_id = 0;
  tlsh::Digest centroid;
  int radius = 0;
  std::size_t member_count = 0;
  bool contaminated = false;

  bool operator==(const Cluster&) const = default;
};

/// Clusters plus the member-to-cluster map they came from. `digests` is the
/// deduplicated input in ascending rendering order; `cluster_of[i]` is the
/// cluster id of `digests[i]`.
struct ClusterModel {
  std::vector<Cluster> clusters;
  std::vector<tlsh::Digest> digests;
  std::vector<int> cluster_of;

  /// Cluster id of a training digest, if it was part of the input.
  [[nodiscard]] std::optional<int> member_cluster(const tlsh::Digest& d) const;
  bool operator==(const ClusterModel&) const = default;
};

/// Ordered so iteration is deterministic.
using DigestCounts = std::map<tlsh::Digest, std::size_t>;

[[nodiscard]] DigestCounts dedupe_digests(std::span<const PreparedAlert> alerts);

/// Radius-capped agglomerative clustering. Candidate pairs are merged in
/// ascending (distance, rendering) order; a merge is kept only if the union's
/// 1-center radius stays within cdist. Duplicate input digests are folded.
/// Cluster ids follow the rendering order of each cluster's smallest member.
/// Throws EmptyInput.
[[nodiscard]] ClusterModel hact_cluster(std::span<const tlsh::Digest> digests,
                                        const ClusterParams& params, std::size_t workers = 0);

/// Nearest centroid within `threshold`, ties to the smallest id.
[[nodiscard]] std::optional<int> assign(const tlsh::Digest& digest,
                                        std::span<const Cluster> clusters, int threshold);

/// Same, honoring params.assign_by_radius.
[[nodiscard]] std::optional<int> assign(const tlsh::Digest& digest,
                                        std::span<const Cluster> clusters,
                                        const ClusterParams& params);

/// Per-digest multiset of feature vectors, stored as interned value codes.
class FeatureSource {
public:
  void add(const tlsh::Digest& digest, const SecurityFeatureSet& features);
  void add(std::span<const PreparedAlert> alerts);

  [[nodiscard]] bool empty() const noexcept { return rows_.empty(); }

  /// Codes for one feature slot; equal codes mean equal values.
  using Row = std::array<std::uint32_t, kFeatureCount>;
  [[nodiscard]] const std::vector<Row>* rows(const tlsh::Digest& digest) const;

private:
  std::array<std::unordered_map<std::string, std::uint32_t>, kFeatureCount> codes_;
  std::unordered_map<tlsh::Digest, std::vector<Row>> rows_;
};

struct SweepPoint {
  int cdist = 0;
  std::size_t n_clusters = 0;
  double mean_feature_entropy = 0.0;
  double n_clusters_normalized = 0.0;
  double entropy_normalized = 0.0;
};

/// Mean over clusters (weighted by member_count) of the per-feature Shannon
/// entropy in bits, averaged over the 28 features, computed from the
/// feature vectors of every alert behind each member digest.
[[nodiscard]] double mean_feature_entropy(const ClusterModel& model, const FeatureSource& features);

/// One point per cdist in the sweep range. Normalized columns are min-max
/// over the sweep; a constant column normalizes to 0. Throws EmptyInput.
[[nodiscard]] std::vector<SweepPoint> sweep_cdist(std::span<const tlsh::Digest> digests,
                                                  const FeatureSource& features,
                                                  const ClusterParams& params,
                                                  std::size_t workers = 0);

/// Tab-separated table with a header row.
[[nodiscard]] std::string format_sweep(std::span<const SweepPoint> points);

}  // namespace alertsieve
