#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "alertsieve/alerts.hpp"
#include "alertsieve/ann_index.hpp"
#include "alertsieve/clustering.hpp"
#include "alertsieve/profiles.hpp"
#include "alertsieve/scoring.hpp"

namespace alertsieve {

struct EngineConfig {
  ClusterParams clustering;
  AnnParams ann;
  ProfileParams profiles;
  double decision_threshold = 0.5;
  /// Alerts per ANN batch in triage_stream.
  std::size_t batch_size = 500;
  /// Bound on batches buffered between the reader and the workers.
  std::size_t queue_batches = 4;
  bool fit_weights = true;

  /// Throws InvalidArgument.
  void validate() const;
  bool operator==(const EngineConfig& other) const;
};

/// Reads a JSON config. Missing keys keep their defaults; unknown keys throw
/// InvalidArgument.
[[nodiscard]] EngineConfig load_config(std::istream& in);
void save_config(std::ostream& out, const EngineConfig& config);

enum class Route { ClusteredConsistent, ClusteredOutlier, ContaminatedScored, UnclusteredScored };
enum class Decision { RemovedFromTriage, RetainedForTriage };

[[nodiscard]] std::string_view to_string(Route route) noexcept;
[[nodiscard]] std::string_view to_string(Decision decision) noexcept;

struct TriageVerdict {
  std::string alert_id;
  Route route = Route::UnclusteredScored;
  std::optional<int> cluster_id;
  std::optional<std::vector<OutlierFeature>> outlier_features;
  std::optional<double> anomaly_score;
  Decision decision = Decision::RetainedForTriage;
  std::int64_t latency_micros = 0;

  /// Latency is excluded: two runs agree when they decide the same way.
  bool operator==(const TriageVerdict& other) const;
};

[[nodiscard]] std::string to_json_line(const TriageVerdict& verdict);
/// Throws MalformedRecord.
[[nodiscard]] TriageVerdict parse_verdict_line(std::string_view line);

/// Per-cluster contamination flags, safe to set while other threads triage,
/// plus the append-only record of every mark.
class ContaminationState {
public:
  ContaminationState() = default;
  explicit ContaminationState(std::span<const Cluster> clusters);
  ContaminationState(const ContaminationState& other);
  ContaminationState& operator=(const ContaminationState& other);

  [[nodiscard]] bool test(std::size_t position) const noexcept {
    return flags_[position].load(std::memory_order_acquire);
  }
  /// Returns false when the flag was already set; the log only grows on a
  /// new mark.
  bool set(std::size_t position, ContaminationRecord record);
  [[nodiscard]] std::vector<ContaminationRecord> log() const;
  void restore_log(std::vector<ContaminationRecord> log);

private:
  std::unique_ptr<std::atomic<bool>[]> flags_;
  std::size_t size_ = 0;
  mutable std::mutex log_mutex_;
  std::vector<ContaminationRecord> log_;
};

/// Everything inference needs, versioned and persisted together.
class ModelBundle {
public:
  static constexpr int kVersion = 1;

  ModelBundle() = default;
  ModelBundle(EngineConfig config, FeatureSchema schema, std::vector<Cluster> clusters,
              ProfileSet profiles, AnnIndex index, FrequencyStore frequencies,
              ScoreWeights weights, std::optional<double> fitted_auc);

  [[nodiscard]] const EngineConfig& config() const noexcept { return config_; }
  [[nodiscard]] const FeatureSchema& schema() const noexcept { return schema_; }
  [[nodiscard]] const AnnIndex& index() const noexcept { return index_; }
  [[nodiscard]] const ProfileSet& profiles() const noexcept { return profiles_; }
  [[nodiscard]] const FrequencyStore& frequencies() const noexcept { return frequencies_; }
  [[nodiscard]] const ScoreWeights& weights() const noexcept { return weights_; }
  [[nodiscard]] std::optional<double> fitted_auc() const noexcept { return fitted_auc_; }

  /// Clusters with their current contamination flags.
  [[nodiscard]] std::vector<Cluster> clusters() const;
  [[nodiscard]] const Cluster* find_cluster(int cluster_id) const;
  [[nodiscard]] bool is_contaminated(int cluster_id) const;

  /// Throws UnknownCluster. Idempotent; returns true on a new mark.
  bool mark_contaminated(int cluster_id, std::int64_t timestamp_ms, std::string reason);
  [[nodiscard]] std::vector<ContaminationRecord> contamination_log() const {
    return contamination_.log();
  }

  /// Replaces the frequency store, e.g. after a daily batch.
  void set_frequencies(FrequencyStore store) { frequencies_ = std::move(store); }
  void set_weights(ScoreWeights weights, std::optional<double> fitted_auc);

  /// One file per component plus manifest.json with their SHA-256 hashes.
  /// Files are written to temporaries and renamed into place.
  void save(const std::filesystem::path& dir) const;
  /// Throws BundleMismatch on a missing or altered component and Io when the
  /// directory cannot be read.
  static ModelBundle load(const std::filesystem::path& dir);

  /// Same verdict-relevant contents.
  bool operator==(const ModelBundle& other) const;

private:
  EngineConfig config_;
  FeatureSchema schema_ = FeatureSchema::standard();
  std::vector<Cluster> clusters_;
  std::unordered_map<int, std::size_t> position_;
  ProfileSet profiles_;
  AnnIndex index_;
  FrequencyStore frequencies_;
  ScoreWeights weights_;
  std::optional<double> fitted_auc_;
  ContaminationState contamination_;

  void index_positions();
};

struct TrainReport {
  std::size_t alerts = 0;
  std::size_t undigestible = 0;
  std::size_t unique_digests = 0;
  std::size_t clusters = 0;
  std::size_t supported_clusters = 0;
  std::size_t weight_samples = 0;
  std::optional<WeightFit> fit;
  std::vector<std::string> warnings;
};

struct TrainResult {
  ModelBundle bundle;
  TrainReport report;
};

/// prepare, dedupe, cluster, profile, index, count frequencies day by day
/// and fit weights on labeled alerts that take a scoring route. Weight
/// samples are looked up against the store as it stood before each alert's
/// day. Without both labels among them, uniform weights are installed and a
/// warning is recorded. Throws EmptyInput when no alert can be digested.
[[nodiscard]] TrainResult train(std::span<const AlertRecord> alerts, const EngineConfig& config,
                                const FeatureSchema& schema = FeatureSchema::standard(),
                                std::size_t workers = 0);

/// Cluster the alert falls in: the nearest centroid by ANN search when it
/// lies within cdist (or that cluster's radius with assign_by_radius).
[[nodiscard]] std::optional<int> locate(const ModelBundle& bundle, const PreparedAlert& alert);

/// Frequency keys of each digestible alert as inference would count it.
/// Undigestible alerts are skipped.
[[nodiscard]] std::vector<KeyedOccurrence> keyed_occurrences(const ModelBundle& bundle,
                                                             std::span<const AlertRecord> alerts,
                                                             std::size_t workers = 0);

/// The bundle's store with `alerts` ingested day by day. Throws
/// OutOfOrderBatch when they start before the store's window end.
[[nodiscard]] FrequencyStore updated_frequencies(const ModelBundle& bundle,
                                                 std::span<const AlertRecord> alerts,
                                                 std::size_t workers = 0);

/// Labeled alerts that would take a scoring route, looked up against the
/// bundle's current store.
[[nodiscard]] std::vector<LabeledSample> weight_samples(const ModelBundle& bundle,
                                                        std::span<const AlertRecord> alerts,
                                                        std::size_t workers = 0);

/// Marks the cluster of every Malicious-labeled alert in `feedback`.
/// Returns the newly marked ids in ascending order.
std::vector<int> contaminate_from_feedback(ModelBundle& bundle, std::span<const AlertRecord> feedback,
                                           std::int64_t timestamp_ms, const std::string& reason);

/// Wall time split by pipeline stage, in microseconds.
struct StageTimes {
  std::int64_t prepare = 0;
  std::int64_t search = 0;
  std::int64_t decide = 0;
};

[[nodiscard]] TriageVerdict triage(const ModelBundle& bundle, const AlertRecord& alert,
                                   StageTimes* times = nullptr);

/// Order-preserving; results do not depend on the worker count.
[[nodiscard]] std::vector<TriageVerdict> triage_batch(const ModelBundle& bundle,
                                                      std::span<const AlertRecord> alerts,
                                                      std::size_t workers = 0);

struct LatencySummary {
  double p50 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
  bool operator==(const LatencySummary&) const = default;
};

struct StreamStats {
  std::size_t alerts = 0;
  std::size_t malformed = 0;
  double seconds = 0.0;
  double alerts_per_second = 0.0;
  LatencySummary prepare;
  LatencySummary search;
  LatencySummary decide;
  LatencySummary total;
};

/// Reads alert lines on a separate thread, triages them in batches across
/// `workers` and writes one line per input record in input order: a verdict,
/// or {"line":n,"error":"MalformedRecord","reason":...} for a bad line.
StreamStats triage_stream(const ModelBundle& bundle, std::istream& in, std::ostream& out,
                          std::size_t workers = 0);

[[nodiscard]] std::string format_stream_stats(const StreamStats& stats);

}  // namespace alertsieve
