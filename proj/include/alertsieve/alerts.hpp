#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "alertsieve/tlsh.hpp"

namespace alertsieve {

inline constexpr std::size_t kFeatureCount = 28;
inline constexpr std::string_view kUnknownValue = "unknown";

enum class InitiatorKind { CommandLine, DesktopLaunch, InProcessCreation, ScheduledTask, Other };
enum class Label { Malicious, False };

[[nodiscard]] std::string_view to_string(InitiatorKind kind) noexcept;
[[nodiscard]] std::optional<InitiatorKind> parse_initiator_kind(std::string_view text) noexcept;
[[nodiscard]] std::string_view to_string(Label label) noexcept;
[[nodiscard]] std::optional<Label> parse_label(std::string_view text) noexcept;

/// The 28 categorical feature names of a corpus, fixed when it is loaded.
class FeatureSchema {
public:
  /// Throws InvalidArgument unless there are exactly 28 unique, nonempty names.
  explicit FeatureSchema(std::vector<std::string> names);

  /// The named security features plus parent-process counterparts, padded
  /// with custom_01..custom_17.
  static const FeatureSchema& standard();

  [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
  [[nodiscard]] const std::string& name(std::size_t i) const { return names_.at(i); }
  [[nodiscard]] std::optional<std::size_t> index_of(std::string_view name) const noexcept;

  bool operator==(const FeatureSchema&) const = default;

private:
  std::vector<std::string> names_;
};

/// Feature values in schema order. Missing values hold kUnknownValue.
using SecurityFeatureSet = std::array<std::string, kFeatureCount>;

[[nodiscard]] SecurityFeatureSet unknown_features();

struct AlertRecord {
  std::string alert_id;
  std::int64_t timestamp_ms = 0;
  std::string device_id;
  std::string org_id;
  std::string command_line;
  InitiatorKind initiator_kind = InitiatorKind::CommandLine;
  std::string parent_path;
  std::string process_path;
  SecurityFeatureSet features = unknown_features();
  std::optional<Label> label;

  bool operator==(const AlertRecord&) const = default;
};

struct PreparedAlert {
  AlertRecord source;
  std::string effective_command_line;
  tlsh::Digest digest;
  std::string parent_child_path;
};

/// "PROXY|<kind>|<parent>|<process>"; empty paths become empty segments.
[[nodiscard]] std::string synthesize_proxy_command_line(const AlertRecord& record);

/// Repeats `cmd` joined by '|' until the result reaches 50 bytes.
/// Throws EmptyCommandLine for empty input. Inputs already at 50 bytes or
/// more are returned unchanged.
[[nodiscard]] std::string pad_short_command_line(std::string_view cmd);

/// "parent_path>process_path".
[[nodiscard]] std::string parent_child_path(const AlertRecord& record);

/// The byte string that gets digested for this record.
[[nodiscard]] std::string effective_command_line(const AlertRecord& record);

/// Throws Error(UndigestibleAlert) with the digest failure as cause.
[[nodiscard]] PreparedAlert prepare(const AlertRecord& record);

struct MalformedRecord {
  std::size_t line_number = 0;
  std::string reason;
};

using StreamItem = std::variant<AlertRecord, MalformedRecord>;

/// Pull parser for line-delimited alert records.
///
/// An optional first line {"schema":{"features":[...28 names...]}} fixes the
/// feature order; without it the standard schema applies. Blank lines are
/// skipped. Bad lines come back as MalformedRecord and parsing continues.
class AlertStreamReader {
public:
  explicit AlertStreamReader(std::istream& in,
                             const FeatureSchema& fallback = FeatureSchema::standard());

  /// Next record or per-line error; nullopt at end of stream.
  std::optional<StreamItem> next();

  [[nodiscard]] const FeatureSchema& schema() const noexcept { return schema_; }

private:
  std::istream& in_;
  FeatureSchema schema_;
  std::size_t line_number_ = 0;
  bool seen_content_ = false;
  std::unordered_set<std::string> seen_ids_;
};

/// Reads a whole stream; convenience wrapper over AlertStreamReader.
[[nodiscard]] std::vector<StreamItem> parse_alert_stream(std::istream& in);

/// Decodes one record line against `schema`. Throws Error(MalformedRecord).
[[nodiscard]] AlertRecord parse_alert_line(std::string_view line, const FeatureSchema& schema);

/// Reorders features read under `from` into `to` by name. Names missing
/// from `from` become "unknown".
[[nodiscard]] SecurityFeatureSet remap_features(const SecurityFeatureSet& features,
                                                const FeatureSchema& from, const FeatureSchema& to);

[[nodiscard]] std::string schema_header_line(const FeatureSchema& schema);
[[nodiscard]] std::string to_json_line(const AlertRecord& record, const FeatureSchema& schema);

}  // namespace alertsieve
