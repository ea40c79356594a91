#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "alertsieve/corpus.hpp"
#include "alertsieve/error.hpp"
#include "doctest.h"

using namespace alertsieve;

namespace {

std::string render(const Corpus& c) {
  std::ostringstream out;
  write_corpus(out, c);
  write_truth(out, c);
  return out.str();
}

GeneratorSpec small_spec() {
  GeneratorSpec spec;
  spec.n_alerts = 20000;
  spec.n_templates = 80;
  spec.feature_outlier_rate = 0.01;
  spec.rare_unclustered_rate = 0.01;
  spec.outlier_min_template_alerts = 500;
  return spec;
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
  const auto spec = small_spec();
  const auto a = render(generate_corpus(spec, 4));
  CHECK(render(generate_corpus(spec, 4)) == a);
  CHECK(render(generate_corpus(spec, 5)) != a);
}

TEST_CASE("invalid specs are rejected") {
  auto expect_invalid = [](const GeneratorSpec& spec) {
    try {
      (void)generate_corpus(spec, 1);
      FAIL("expected InvalidSpec");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidSpec);
    }
  };
  GeneratorSpec spec;
  spec.n_templates = 0;
  expect_invalid(spec);
  spec = {};
  spec.mutation_rate = 1.5;
  expect_invalid(spec);
  spec = {};
  spec.feature_outlier_rate = 0.7;
  spec.rare_unclustered_rate = 0.7;
  expect_invalid(spec);
  spec = {};
  spec.n_orgs = 0;
  expect_invalid(spec);
  spec = {};
  spec.days = 0;
  expect_invalid(spec);
}

TEST_CASE("low mutation keeps unique digests near the template count") {
  GeneratorSpec spec;
  spec.rare_unclustered_rate = 0.0;  // only template-derived lines
  const auto corpus = generate_corpus(spec, 8);
  std::set<tlsh::Digest> unique;
  std::set<int> templates_seen;
  for (std::size_t i = 0; i < corpus.alerts.size(); ++i) {
    unique.insert(prepare(corpus.alerts[i]).digest);
    templates_seen.insert(corpus.truth[i].template_id);
  }
  CAPTURE(unique.size());
  CHECK(templates_seen.size() == spec.n_templates);
  CHECK(unique.size() >= spec.n_templates / 2);
  CHECK(unique.size() <= 2 * spec.n_templates);
}

TEST_CASE("records are ordered, unique and consistent with the sidecar") {
  const auto spec = small_spec();
  const auto corpus = generate_corpus(spec, 12);
  REQUIRE(corpus.alerts.size() == spec.n_alerts);
  REQUIRE(corpus.truth.size() == spec.n_alerts);
  std::set<std::string> ids;
  std::map<PlantedAnomaly, std::size_t> kinds;
  std::map<int, std::size_t> per_template;
  for (std::size_t i = 0; i < corpus.alerts.size(); ++i) {
    const auto& a = corpus.alerts[i];
    const auto& t = corpus.truth[i];
    ids.insert(a.alert_id);
    CHECK(a.alert_id == t.alert_id);
    if (i > 0) CHECK(corpus.alerts[i - 1].timestamp_ms <= a.timestamp_ms);
    CHECK(a.timestamp_ms >= spec.start_ms);
    CHECK(a.timestamp_ms < spec.start_ms + spec.days * 86400000LL);
    REQUIRE(a.label.has_value());
    CHECK((*a.label == Label::Malicious) == (t.anomaly != PlantedAnomaly::None));
    ++kinds[t.anomaly];
    if (t.template_id >= 0) ++per_template[t.template_id];
    switch (t.anomaly) {
      case PlantedAnomaly::None:
        CHECK(t.expected_route == "ClusteredConsistent");
        CHECK(t.template_id >= 0);
        break;
      case PlantedAnomaly::FeatureOutlier: {
        CHECK(t.expected_route == "ClusteredOutlier");
        const auto f = FeatureSchema::standard().index_of(t.planted_feature);
        REQUIRE(f.has_value());
        CHECK(a.features[*f].rfind("rare_", 0) == 0);
        break;
      }
      case PlantedAnomaly::RareUnclustered:
        CHECK(t.expected_route == "UnclusteredScored");
        CHECK(t.template_id == -1);
        break;
    }
  }
  CHECK(ids.size() == corpus.alerts.size());
  // Planted rates within five standard deviations.
  for (auto kind : {PlantedAnomaly::FeatureOutlier, PlantedAnomaly::RareUnclustered}) {
    CHECK(kinds[kind] >= 200 - 5 * 14);
    CHECK(kinds[kind] <= 200 + 5 * 14);
  }
  // Feature outliers sit only in templates that are large in expectation.
  for (std::size_t i = 0; i < corpus.alerts.size(); ++i) {
    if (corpus.truth[i].anomaly == PlantedAnomaly::FeatureOutlier) {
      CHECK(per_template.at(corpus.truth[i].template_id) >= 350);
    }
  }
}

TEST_CASE("written corpora parse back and the sidecar round trips") {
  auto spec = small_spec();
  spec.n_alerts = 3000;
  spec.label_fraction = 0.5;
  const auto corpus = generate_corpus(spec, 2);
  std::stringstream alerts;
  write_corpus(alerts, corpus);
  std::vector<AlertRecord> parsed;
  for (auto& item : parse_alert_stream(alerts)) {
    REQUIRE(std::holds_alternative<AlertRecord>(item));
    parsed.push_back(std::get<AlertRecord>(item));
  }
  CHECK(parsed == corpus.alerts);
  const auto labeled = std::count_if(parsed.begin(), parsed.end(),
                                     [](const AlertRecord& a) { return a.label.has_value(); });
  CHECK(labeled > 1300);
  CHECK(labeled < 1700);

  std::stringstream sidecar;
  write_truth(sidecar, corpus);
  const auto truth = read_truth(sidecar);
  REQUIRE(truth.size() == corpus.truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(truth[i].alert_id == corpus.truth[i].alert_id);
    CHECK(truth[i].template_id == corpus.truth[i].template_id);
    CHECK(truth[i].anomaly == corpus.truth[i].anomaly);
    CHECK(truth[i].planted_feature == corpus.truth[i].planted_feature);
    CHECK(truth[i].expected_route == corpus.truth[i].expected_route);
  }
  std::stringstream bad("{\"alert_id\":\"x\"}\n");
  CHECK_THROWS_AS((void)read_truth(bad), Error);
}

TEST_CASE("templates of a family are closer than templates of different families") {
  const auto templates = make_templates(60, 5, 2, 99);
  REQUIRE(templates.size() == 60);
  std::vector<int> within, across;
  std::vector<tlsh::Digest> digests;
  for (const auto& t : templates) {
    AlertRecord r;
    r.command_line = t.command_line;
    r.initiator_kind = t.kind;
    r.parent_path = t.parent_path;
    r.process_path = t.process_path;
    const auto d = tlsh::try_digest(effective_command_line(r));
    REQUIRE(d.has_value());
    digests.push_back(*d);
  }
  for (std::size_t i = 0; i < templates.size(); ++i) {
    for (std::size_t j = i + 1; j < templates.size(); ++j) {
      const int d = tlsh::distance(digests[i], digests[j]);
      (templates[i].family_id == templates[j].family_id ? within : across).push_back(d);
    }
  }
  std::sort(within.begin(), within.end());
  std::sort(across.begin(), across.end());
  CAPTURE(within[within.size() / 2]);
  CAPTURE(across.front());
  CHECK(2 * within[within.size() / 2] < 3 * across[across.size() / 2] / 2);
  CHECK(within.front() < across.front());
}
