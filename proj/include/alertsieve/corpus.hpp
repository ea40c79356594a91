#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "alertsieve/alerts.hpp"

namespace alertsieve {

/// Knobs for the synthetic alert corpus.
struct GeneratorSpec {
  std::size_t n_alerts = 100000;
  std::size_t n_templates = 500;
  std::size_t templates_per_family = 5;
  /// Probability that an alert uses one of its template's variants instead
  /// of the template's own command line.
  double mutation_rate = 0.02;
  std::size_t variants_per_template = 1;
  std::size_t n_orgs = 20;
  std::size_t devices_per_org = 50;
  /// Zipf exponent of template popularity.
  double popularity_skew = 1.0;
  /// Share of a template's alerts carrying its modal value, per feature.
  double dominant_share = 0.97;
  std::size_t alternate_values = 3;
  double feature_outlier_rate = 0.002;
  double rare_unclustered_rate = 0.002;
  /// Feature outliers are planted only in templates expected to produce at
  /// least this many alerts.
  std::size_t outlier_min_template_alerts = 2500;
  double label_fraction = 1.0;
  int days = 14;
  std::int64_t start_ms = 1700006400000;  // midnight UTC

  /// Throws InvalidSpec.
  void validate() const;
};

/// A command-line template and the alternate lines its alerts may carry.
struct CommandTemplate {
  int template_id = 0;
  int family_id = 0;
  InitiatorKind kind = InitiatorKind::CommandLine;
  std::string command_line;
  std::string parent_path;
  std::string process_path;
  std::vector<std::string> variants;
};

/// `n` templates in families of `per_family`. Templates of one family share
/// an executable and most arguments; families share executables and
/// argument vocabulary only loosely.
[[nodiscard]] std::vector<CommandTemplate> make_templates(std::size_t n, std::size_t per_family,
                                                          std::size_t variants,
                                                          std::uint64_t seed);

/// A random command line unrelated to any template family.
[[nodiscard]] std::string random_command_line(std::uint64_t seed);

enum class PlantedAnomaly { None, FeatureOutlier, RareUnclustered };

[[nodiscard]] std::string_view to_string(PlantedAnomaly kind) noexcept;

struct TruthRecord {
  std::string alert_id;
  int template_id = -1;  // -1 for rare unclustered alerts
  PlantedAnomaly anomaly = PlantedAnomaly::None;
  std::string planted_feature;
  /// Route a correct pipeline should take: ClusteredConsistent,
  /// ClusteredOutlier or UnclusteredScored.
  std::string expected_route;
};

struct Corpus {
  std::vector<AlertRecord> alerts;  // ascending timestamp
  std::vector<TruthRecord> truth;   // parallel to alerts
};

/// Deterministic for a given (spec, seed). Throws InvalidSpec.
[[nodiscard]] Corpus generate_corpus(const GeneratorSpec& spec, std::uint64_t seed);

void write_corpus(std::ostream& out, const Corpus& corpus);
void write_truth(std::ostream& out, const Corpus& corpus);

/// Reads sidecar lines written by write_truth. Throws MalformedRecord.
[[nodiscard]] std::vector<TruthRecord> read_truth(std::istream& in);

}  // namespace alertsieve
