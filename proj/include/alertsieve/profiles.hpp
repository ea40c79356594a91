#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "alertsieve/alerts.hpp"
#include "alertsieve/clustering.hpp"

namespace alertsieve {

struct ProfileParams {
  /// A value is an outlier when count / total_members falls below this.
  double outlier_threshold = 0.001;
  /// Clusters with fewer training alerts skip the outlier path entirely.
  std::size_t min_support = 1000;

  void validate() const;
  bool operator==(const ProfileParams&) const = default;
};

/// Training-time feature histograms of one cluster.
struct ClusterProfile {
  int cluster_id = 0;
  std::size_t total_members = 0;
  std::array<std::map<std::string, std::size_t>, kFeatureCount> histograms;

  [[nodiscard]] std::size_t count(std::size_t feature, const std::string& value) const;
  bool operator==(const ClusterProfile&) const = default;
};

using ProfileSet = std::map<int, ClusterProfile>;

struct OutlierFeature {
  std::string feature;
  std::string value;
  double proportion = 0.0;
  bool operator==(const OutlierFeature&) const = default;
};

struct OutlierReport {
  std::string alert_id;
  int cluster_id = 0;
  std::vector<OutlierFeature> outlier_features;
  /// False when the profile is below minimum support; such alerts are never
  /// consistent.
  bool supported = true;

  [[nodiscard]] bool is_consistent() const noexcept {
    return supported && outlier_features.empty();
  }
};

/// One profile per cluster id present in `cluster_ids` (parallel to alerts).
/// Throws InvalidArgument when the spans differ in length.
[[nodiscard]] ProfileSet build_profiles(std::span<const PreparedAlert> alerts,
                                        std::span<const int> cluster_ids);

/// Lists every feature whose value is rarer than the threshold in `profile`.
/// Unseen values have proportion 0.
[[nodiscard]] OutlierReport check_outliers(const PreparedAlert& alert,
                                           const ClusterProfile& profile,
                                           const ProfileParams& params = {},
                                           const FeatureSchema& schema = FeatureSchema::standard());

/// Sets the contaminated flag; idempotent. Throws UnknownCluster.
[[nodiscard]] std::vector<Cluster> mark_contaminated(std::vector<Cluster> clusters, int cluster_id);

struct ContaminationRecord {
  int cluster_id = 0;
  std::int64_t timestamp_ms = 0;
  std::string reason;
  bool operator==(const ContaminationRecord&) const = default;
};

/// One JSON line per record; the log is only ever appended to.
void append_contamination(std::ostream& out, const ContaminationRecord& record);
/// Throws MalformedRecord.
[[nodiscard]] std::vector<ContaminationRecord> read_contamination_log(std::istream& in);

void save_profiles(std::ostream& out, const ProfileSet& profiles, const ProfileParams& params,
                   const FeatureSchema& schema);
struct LoadedProfiles {
  ProfileSet profiles;
  ProfileParams params;
  std::vector<std::string> feature_names;
};
/// Throws BundleMismatch.
[[nodiscard]] LoadedProfiles load_profiles(std::istream& in);

}  // namespace alertsieve
