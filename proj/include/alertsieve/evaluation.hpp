#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alertsieve/alerts.hpp"
#include "alertsieve/engine.hpp"

namespace alertsieve {

struct ClassCounts {
  std::size_t malicious = 0;
  std::size_t false_alerts = 0;
  bool operator==(const ClassCounts&) const = default;
};

/// Throws InvalidArgument when a record has no label.
[[nodiscard]] ClassCounts class_counts(std::span<const AlertRecord> labeled);

/// Class totals after scaling each class by its duplication factor, rounded
/// to the nearest integer.
[[nodiscard]] ClassCounts targets_from_factors(const ClassCounts& counts, double malicious_factor,
                                               double false_factor);

/// Duplicates alerts so the class totals equal `targets` exactly. Every alert
/// of a class gets floor(target / n) copies; the remainder goes one extra
/// copy each to the earliest alerts in input order. Copies keep all fields
/// except the id, which gains "#dup<k>". Output keeps each original followed
/// by its copies. Throws ImpossibleTarget when a target is below the class
/// count and InvalidArgument on unlabeled input.
[[nodiscard]] std::vector<AlertRecord> bias_correct(std::span<const AlertRecord> labeled,
                                                    const ClassCounts& targets);

struct Confusion {
  std::size_t malicious_retained = 0;
  std::size_t malicious_removed = 0;
  std::size_t false_retained = 0;
  std::size_t false_removed = 0;

  [[nodiscard]] std::size_t total() const noexcept {
    return malicious_retained + malicious_removed + false_retained + false_removed;
  }
  bool operator==(const Confusion&) const = default;
};

struct EvalReport {
  Confusion confusion;
  double recall_malicious = 0.0;
  double false_removal_rate = 0.0;
  /// Malicious-to-false ratio among retained alerts over the same ratio in
  /// the whole set. Infinite when no false alert is retained.
  double snr_improvement = 0.0;
};

/// Throws SingleClassData when either class is empty.
[[nodiscard]] EvalReport report_from_confusion(const Confusion& confusion);

/// Triages each distinct labeled alert once and counts its verdict as many
/// times as bias correction would duplicate it (once without targets).
/// Throws InvalidArgument on unlabeled input, ImpossibleTarget and
/// SingleClassData.
[[nodiscard]] EvalReport evaluate(const ModelBundle& bundle, std::span<const AlertRecord> labeled,
                                  const std::optional<ClassCounts>& targets = std::nullopt,
                                  std::size_t workers = 0);

/// Two-row retained/removed table plus the three rates.
[[nodiscard]] std::string format_eval(const EvalReport& report, const std::string& title);

}  // namespace alertsieve
