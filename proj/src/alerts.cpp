#include "alertsieve/alerts.hpp"

#include <json.hpp>

namespace alertsieve {
namespace {

using json = nlohmann::json;

constexpr char kPadSeparator = '|';

std::vector<std::string> standard_feature_names() {
  std::vector<std::string> names = {
      "mitre_ttps",
      "process_reputation",
      "privilege_escalation",
      "digital_signature_state",
      "process_path",
      "process_user_name",
      "parent_process_reputation",
      "parent_privilege_escalation",
      "parent_digital_signature_state",
      "parent_process_path",
      "parent_process_user_name",
  };
  for (int i = 1; names.size() < kFeatureCount; ++i) {
    names.push_back((i < 10 ? "custom_0" : "custom_") + std::to_string(i));
  }
  return names;
}

[[noreturn]] void malformed(const std::string& reason) {
  throw Error(ErrorCode::MalformedRecord, reason);
}

const std::string& require_string(const json& obj, const char* key, bool allow_empty) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(std::string("missing field ") + key);
  if (!it->is_string()) malformed(std::string("field ") + key + " must be a string");
  const auto& value = it->get_ref<const std::string&>();
  if (!allow_empty && value.empty()) malformed(std::string("field ") + key + " is empty");
  return value;
}

std::string optional_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) malformed(std::string("field ") + key + " must be a string");
  return it->get<std::string>();
}

}  // namespace

std::string_view to_string(InitiatorKind kind) noexcept {
  switch (kind) {
    case InitiatorKind::CommandLine: return "CommandLine";
    case InitiatorKind::DesktopLaunch: return "DesktopLaunch";
    case InitiatorKind::InProcessCreation: return "InProcessCreation";
    case InitiatorKind::ScheduledTask: return "ScheduledTask";
    case InitiatorKind::Other: return "Other";
  }
  return "Other";
}

std::optional<InitiatorKind> parse_initiator_kind(std::string_view text) noexcept {
  for (auto kind : {InitiatorKind::CommandLine, InitiatorKind::DesktopLaunch,
                    InitiatorKind::InProcessCreation, InitiatorKind::ScheduledTask,
                    InitiatorKind::Other}) {
    if (to_string(kind) == text) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(Label label) noexcept {
  return label == Label::Malicious ? "Malicious" : "False";
}

std::optional<Label> parse_label(std::string_view text) noexcept {
  if (text == "Malicious") return Label::Malicious;
  if (text == "False") return Label::False;
  return std::nullopt;
}

FeatureSchema::FeatureSchema(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() != kFeatureCount) {
    throw Error(ErrorCode::InvalidArgument, "feature schema needs exactly 28 names, got " +
                                                std::to_string(names_.size()));
  }
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty() || !seen.insert(n).second) {
      throw Error(ErrorCode::InvalidArgument, "feature names must be unique and nonempty");
    }
  }
}

const FeatureSchema& FeatureSchema::standard() {
  static const FeatureSchema schema(standard_feature_names());
  return schema;
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

SecurityFeatureSet unknown_features() {
  SecurityFeatureSet f;
  f.fill(std::string(kUnknownValue));
  return f;
}

std::string synthesize_proxy_command_line(const AlertRecord& record) {
  std::string out = "PROXY|";
  out += to_string(record.initiator_kind);
  out += '|';
  out += record.parent_path;
  out += '|';
  out += record.process_path;
  return out;
}

namespace {

// Repetition k >= 1 passes printable ASCII through the affine map
// c -> 32 + ((c - 32) * m + 17k) mod 95 with m coprime to 95. Plain
// repetition is periodic and too uniform for TLSH to digest; shuffling each
// copy keeps the layout while giving every copy its own trigrams.
char scramble(char c, std::size_t k) {
  static constexpr int kMultipliers[] = {2,  3,  4,  6,  7,  8,  9,  11, 12, 13, 14, 16, 17,
                                         18, 21, 22, 23, 24, 26, 27, 28, 29, 31, 32, 33};
  const auto u = static_cast<unsigned char>(c);
  if (k == 0 || u < 32 || u > 126) return c;
  const int m = kMultipliers[(k - 1) % std::size(kMultipliers)];
  return static_cast<char>(32 + ((u - 32) * m + 17 * static_cast<int>(k)) % 95);
}

}  // namespace

std::string pad_short_command_line(std::string_view cmd) {
  if (cmd.empty()) throw Error(ErrorCode::EmptyCommandLine, "cannot pad an empty command line");
  std::string out(cmd);
  for (std::size_t k = 1; out.size() < tlsh::kMinInputLength; ++k) {
    out += kPadSeparator;
    for (char c : cmd) out += scramble(c, k);
  }
  return out;
}

std::string parent_child_path(const AlertRecord& record) {
  return record.parent_path + ">" + record.process_path;
}

std::string effective_command_line(const AlertRecord& record) {
  const bool use_proxy =
      record.initiator_kind != InitiatorKind::CommandLine || record.command_line.empty();
  std::string base = use_proxy ? synthesize_proxy_command_line(record) : record.command_line;
  if (base.size() < tlsh::kMinInputLength) base = pad_short_command_line(base);
  return base;
}

PreparedAlert prepare(const AlertRecord& record) {
  PreparedAlert out;
  out.effective_command_line = effective_command_line(record);
  ErrorCode why = ErrorCode::InsufficientComplexity;
  auto d = tlsh::try_digest(out.effective_command_line, &why);
  if (!d) {
    throw Error(ErrorCode::UndigestibleAlert,
                "alert " + record.alert_id + " is undigestible: " + std::string(to_string(why)),
                why);
  }
  out.digest = *d;
  out.parent_child_path = parent_child_path(record);
  out.source = record;
  return out;
}

AlertRecord parse_alert_line(std::string_view line, const FeatureSchema& schema) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    malformed(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) malformed("record must be a JSON object");

  AlertRecord r;
  r.alert_id = require_string(obj, "alert_id", false);
  r.device_id = require_string(obj, "device_id", false);
  r.org_id = require_string(obj, "org_id", false);

  auto ts = obj.find("timestamp");
  if (ts == obj.end() || !ts->is_number_integer()) malformed("timestamp must be an integer");
  r.timestamp_ms = ts->get<std::int64_t>();
  if (r.timestamp_ms <= 0) malformed("timestamp must be positive");

  r.command_line = optional_string(obj, "command_line");
  r.parent_path = optional_string(obj, "parent_path");
  r.process_path = optional_string(obj, "process_path");

  const auto kind_text = optional_string(obj, "initiator_kind");
  if (!kind_text.empty()) {
    auto kind = parse_initiator_kind(kind_text);
    if (!kind) malformed("unknown initiator_kind " + kind_text);
    r.initiator_kind = *kind;
  }

  const auto label_text = optional_string(obj, "label");
  if (!label_text.empty()) {
    auto label = parse_label(label_text);
    if (!label) malformed("unknown label " + label_text);
    r.label = label;
  }

  if (auto f = obj.find("features"); f != obj.end() && !f->is_null()) {
    if (!f->is_object()) malformed("features must be an object");
    for (const auto& [name, value] : f->items()) {
      auto idx = schema.index_of(name);
      if (!idx) malformed("feature " + name + " is not in the schema");
      if (!value.is_string()) malformed("feature " + name + " must be a string");
      r.features[*idx] = value.get<std::string>();
    }
  }
  return r;
}

AlertStreamReader::AlertStreamReader(std::istream& in, const FeatureSchema& fallback)
    : in_(in), schema_(fallback) {}

std::optional<StreamItem> AlertStreamReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_number_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    if (!seen_content_) {
      seen_content_ = true;
      auto header = json::parse(line, nullptr, false);
      if (header.is_object() && header.contains("schema")) {
        try {
          const auto& names = header.at("schema").at("features");
          schema_ = FeatureSchema(names.get<std::vector<std::string>>());
        } catch (const std::exception& e) {
          return MalformedRecord{line_number_, std::string("bad schema header: ") + e.what()};
        }
        continue;
      }
    }

    try {
      AlertRecord r = parse_alert_line(line, schema_);
      if (!seen_ids_.insert(r.alert_id).second) {
        return MalformedRecord{line_number_, "duplicate alert_id " + r.alert_id};
      }
      return r;
    } catch (const Error& e) {
      return MalformedRecord{line_number_, e.what()};
    }
  }
  return std::nullopt;
}

std::vector<StreamItem> parse_alert_stream(std::istream& in) {
  AlertStreamReader reader(in);
  std::vector<StreamItem> out;
  while (auto item = reader.next()) out.push_back(std::move(*item));
  return out;
}

std::string schema_header_line(const FeatureSchema& schema) {
  json header;
  header["schema"]["features"] = schema.names();
  return header.dump();
}

SecurityFeatureSet remap_features(const SecurityFeatureSet& features, const FeatureSchema& from,
                                  const FeatureSchema& to) {
  SecurityFeatureSet out = unknown_features();
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (auto j = from.index_of(to.name(i))) out[i] = features[*j];
  }
  return out;
}

std::string to_json_line(const AlertRecord& record, const FeatureSchema& schema) {
  // ordered_json keeps the field order stable and human-readable.
  nlohmann::ordered_json obj;
  obj["alert_id"] = record.alert_id;
  obj["timestamp"] = record.timestamp_ms;
  obj["device_id"] = record.device_id;
  obj["org_id"] = record.org_id;
  obj["command_line"] = record.command_line;
  obj["initiator_kind"] = to_string(record.initiator_kind);
  obj["parent_path"] = record.parent_path;
  obj["process_path"] = record.process_path;
  nlohmann::ordered_json features = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < kFeatureCount; ++i) features[schema.name(i)] = record.features[i];
  obj["features"] = std::move(features);
  if (record.label) obj["label"] = to_string(*record.label);
  return obj.dump();
}

}  // namespace alertsieve
