#include "alertsieve/profiles.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "alertsieve/error.hpp"

namespace alertsieve {
namespace {

constexpr const char* kFormatName = "alertsieve.profiles";
constexpr int kFormatVersion = 1;

}  // namespace

void ProfileParams::validate() const {
  if (!(outlier_threshold > 0.0 && outlier_threshold < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "outlier_threshold must lie in (0, 1)");
  }
}

std::size_t ClusterProfile::count(std::size_t feature, const std::string& value) const {
  const auto& h = histograms.at(feature);
  auto it = h.find(value);
  return it == h.end() ? 0 : it->second;
}

ProfileSet build_profiles(std::span<const PreparedAlert> alerts, std::span<const int> cluster_ids) {
  if (alerts.size() != cluster_ids.size()) {
    throw Error(ErrorCode::InvalidArgument, "every alert needs a cluster assignment");
  }
  ProfileSet out;
  for (std::size_t i = 0; i < alerts.size(); ++i) {
    auto& p = out[cluster_ids[i]];
    p.cluster_id = cluster_ids[i];
    ++p.total_members;
    const auto& features = alerts[i].source.features;
    for (std::size_t f = 0; f < kFeatureCount; ++f) ++p.histograms[f][features[f]];
  }
  return out;
}

OutlierReport check_outliers(const PreparedAlert& alert, const ClusterProfile& profile,
                             const ProfileParams& params, const FeatureSchema& schema) {
  OutlierReport report;
  report.alert_id = alert.source.alert_id;
  report.cluster_id = profile.cluster_id;
  report.supported = profile.total_members >= params.min_support && profile.total_members > 0;
  const double total = static_cast<double>(std::max<std::size_t>(profile.total_members, 1));
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    const auto& value = alert.source.features[f];
    const double proportion = static_cast<double>(profile.count(f, value)) / total;
    if (proportion < params.outlier_threshold) {
      report.outlier_features.push_back({schema.name(f), value, proportion});
    }
  }
  return report;
}

std::vector<Cluster> mark_contaminated(std::vector<Cluster> clusters, int cluster_id) {
  auto it = std::find_if(clusters.begin(), clusters.end(),
                         [&](const Cluster& c) { return c.cluster_id == cluster_id; });
  if (it == clusters.end()) {
    throw Error(ErrorCode::UnknownCluster, "no cluster with id " + std::to_string(cluster_id));
  }
  it->contaminated = true;
  return clusters;
}

void append_contamination(std::ostream& out, const ContaminationRecord& record) {
  nlohmann::ordered_json j;
  j["cluster_id"] = record.cluster_id;
  j["timestamp"] = record.timestamp_ms;
  j["reason"] = record.reason;
  out << j.dump() << '\n';
}

std::vector<ContaminationRecord> read_contamination_log(std::istream& in) {
  std::vector<ContaminationRecord> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("cluster_id").get<int>(), j.at("timestamp").get<std::int64_t>(),
                     j.at("reason").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord,
                  "contamination log line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  return out;
}

void save_profiles(std::ostream& out, const ProfileSet& profiles, const ProfileParams& params,
                   const FeatureSchema& schema) {
  nlohmann::ordered_json j;
  j["format"] = kFormatName;
  j["version"] = kFormatVersion;
  j["outlier_threshold"] = params.outlier_threshold;
  j["min_support"] = params.min_support;
  j["features"] = schema.names();
  auto list = nlohmann::ordered_json::array();
  for (const auto& [id, p] : profiles) {
    nlohmann::ordered_json entry;
    entry["cluster_id"] = id;
    entry["total_members"] = p.total_members;
    auto histograms = nlohmann::ordered_json::array();
    for (const auto& h : p.histograms) {
      nlohmann::ordered_json values = nlohmann::ordered_json::object();
      for (const auto& [value, count] : h) values[value] = count;
      histograms.push_back(std::move(values));
    }
    entry["histograms"] = std::move(histograms);
    list.push_back(std::move(entry));
  }
  j["profiles"] = std::move(list);
  out << j.dump() << '\n';
}

LoadedProfiles load_profiles(std::istream& in) {
  LoadedProfiles out;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != kFormatName || j.at("version") != kFormatVersion) {
      throw Error(ErrorCode::BundleMismatch, "unsupported profile format");
    }
    j.at("outlier_threshold").get_to(out.params.outlier_threshold);
    j.at("min_support").get_to(out.params.min_support);
    j.at("features").get_to(out.feature_names);
    for (const auto& entry : j.at("profiles")) {
      ClusterProfile p;
      entry.at("cluster_id").get_to(p.cluster_id);
      entry.at("total_members").get_to(p.total_members);
      const auto& histograms = entry.at("histograms");
      if (histograms.size() != kFeatureCount) {
        throw Error(ErrorCode::BundleMismatch, "profile has the wrong number of features");
      }
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        std::size_t sum = 0;
        for (const auto& [value, count] : histograms[f].items()) {
          p.histograms[f][value] = count.get<std::size_t>();
          sum += count.get<std::size_t>();
        }
        if (sum != p.total_members) {
          throw Error(ErrorCode::BundleMismatch, "profile histogram does not sum to its total");
        }
      }
      out.profiles.emplace(p.cluster_id, std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BundleMismatch, std::string("corrupt profiles: ") + e.what());
  }
  return out;
}

}  // namespace alertsieve
