#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "alertsieve/alerts.hpp"

namespace alertsieve {

inline constexpr std::size_t kScopeCount = 6;

/// Trailing-window counts: command line and parent/child path at device,
/// organization and global scope, in that order.
struct FrequencyVector {
  std::array<std::uint64_t, kScopeCount> f{};
  bool operator==(const FrequencyVector&) const = default;
};

struct ScalingContext {
  std::uint64_t devices_with_alert = 1;  // in the alert's organization
  std::uint64_t devices_in_org = 1;
  std::uint64_t orgs_with_alert = 1;
  std::uint64_t orgs_total = 1;
  bool operator==(const ScalingContext&) const = default;
};

struct ScoreWeights {
  std::array<double, kScopeCount> w{1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
  double decision_threshold = 0.5;

  /// Throws InvalidArgument on negative weights, a zero sum or a threshold
  /// outside (0, 1).
  void validate() const;
  /// Copy with weights rescaled to sum to 1.
  [[nodiscard]] ScoreWeights normalized() const;
  bool operator==(const ScoreWeights&) const = default;
};

/// 1 / (1 + ln(1 + f)).
[[nodiscard]] double transform_frequency(double f);

/// (1, 1, ln(n_od/n_o), ln(n_od/n_o), ln(n_go/n_g), ln(n_go/n_g)).
/// Throws DegenerateContext unless 1 <= n_o <= n_od and 1 <= n_g <= n_go.
[[nodiscard]] std::array<double, kScopeCount> scaling_factors(const ScalingContext& ctx);

/// Per-scope products F_i * S_i; score() is their weighted sum.
[[nodiscard]] std::array<double, kScopeCount> score_terms(const FrequencyVector& fv,
                                                          const ScalingContext& ctx);

[[nodiscard]] double score(const FrequencyVector& fv, const ScalingContext& ctx,
                           const ScoreWeights& weights);

struct ScoredLabel {
  double score = 0.0;
  Label label = Label::False;
};

/// Mann-Whitney AUC with Malicious as the positive class; ties count half.
/// Throws SingleClassData.
[[nodiscard]] double roc_auc(std::span<const ScoredLabel> scored);

struct LabeledSample {
  FrequencyVector fv;
  ScalingContext ctx;
  Label label = Label::False;
};

struct WeightFit {
  ScoreWeights weights;
  double auc = 0.0;
  double uniform_auc = 0.0;
  std::size_t candidates_evaluated = 0;
};

/// Coordinate ascent over the weight simplex: pairwise transfers of 0.05,
/// then 0.01, from the uniform point and each vertex. Among equal-AUC optima
/// the lexicographically smallest weight vector wins. Throws SingleClassData.
[[nodiscard]] WeightFit fit_weights(std::span<const LabeledSample> samples,
                                    double decision_threshold = 0.5, std::size_t workers = 0);

/// The two keys an alert is counted under.
struct FrequencyKeys {
  /// "c:<cluster_id>" when clustered, otherwise "d:<digest rendering>".
  std::string command;
  /// "parent_path>process_path".
  std::string path;
  bool operator==(const FrequencyKeys&) const = default;
};

/// Pass nullopt for alerts without a cluster within cdist.
[[nodiscard]] FrequencyKeys frequency_keys(const PreparedAlert& alert,
                                           std::optional<int> cluster_id);

struct KeyedOccurrence {
  FrequencyKeys keys;
  std::string org_id;
  std::string device_id;
  std::int64_t timestamp_ms = 0;
};

/// Seven daily buckets of occurrence counts plus a cumulative registry of
/// the devices seen in each organization.
class FrequencyStore {
public:
  static constexpr int kWindowDays = 7;
  static constexpr std::int64_t kDayMs = 86400000;

  /// The window covers days [window_end_day - 7, window_end_day).
  [[nodiscard]] std::int64_t window_end_day() const noexcept { return end_day_; }
  [[nodiscard]] bool empty() const noexcept { return end_day_ == kNoDay; }

  /// Copy of this store with `day` ingested and the window moved to end
  /// after it. Every occurrence must fall on `day`. Throws OutOfOrderBatch
  /// when `day` is not after the current window, InvalidArgument when an
  /// occurrence lies outside `day`.
  [[nodiscard]] FrequencyStore advanced(std::int64_t day,
                                        std::span<const KeyedOccurrence> batch) const;
  /// In-place form of advanced().
  void advance(std::int64_t day, std::span<const KeyedOccurrence> batch);

  /// Window counts and scaling context for an alert on (org, device).
  [[nodiscard]] std::pair<FrequencyVector, ScalingContext> lookup(const FrequencyKeys& keys,
                                                                  const std::string& org_id,
                                                                  const std::string& device_id) const;

  /// Window count of one table cell; scope 0..5 as in FrequencyVector.
  [[nodiscard]] std::uint64_t count(std::size_t scope, const FrequencyKeys& keys,
                                    const std::string& org_id,
                                    const std::string& device_id) const;

  void save(std::ostream& out) const;
  /// Throws BundleMismatch.
  static FrequencyStore load(std::istream& in);

  bool operator==(const FrequencyStore& other) const {
    return end_day_ == other.end_day_ && days_ == other.days_ && fleet_ == other.fleet_;
  }

  static std::int64_t day_of(std::int64_t timestamp_ms) noexcept;

private:
  static constexpr std::int64_t kNoDay = std::numeric_limits<std::int64_t>::min();
  using Table = std::unordered_map<std::string, std::uint64_t>;

  struct Day {
    std::int64_t day = 0;
    // Raw occurrences by (command key, path key, org, device) cell.
    std::map<std::array<std::string, 4>, std::uint64_t> cells;
    bool operator==(const Day&) const = default;
  };

  std::int64_t end_day_ = kNoDay;
  std::deque<Day> days_;
  std::map<std::string, std::set<std::string>> fleet_;

  // Derived from days_.
  std::array<Table, kScopeCount> window_;
  Table devices_with_command_;  // command key + org -> devices with a positive count
  Table orgs_with_command_;     // command key -> orgs with a positive count

  void apply(const Day& day, int sign);
  void rebuild();
};

/// Splits occurrences into consecutive day batches, including empty days
/// between the first and last, and feeds them to `store`.
void ingest_days(FrequencyStore& store, std::span<const KeyedOccurrence> occurrences);

}  // namespace alertsieve
