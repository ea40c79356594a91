// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "alertsieve/bench.hpp"
#include "alertsieve/clustering.hpp"
#include "alertsieve/corpus.hpp"
#include "alertsieve/engine.hpp"
#include "alertsieve/evaluation.hpp"
#include "alertsieve/scoring.hpp"
#include "alertsieve/tlsh.hpp"
#include "support/splitmix.hpp"

using namespace alertsieve;
using testing_support::SplitMix;
using testing_support::splitmix_bytes;

namespace {

struct RandomVector {
  unsigned seed;
  unsigned length;
  bool printable;
  const char* digest;
};

struct PairVector {
  int a;
  int b;
  int distance;
};

#include "unit/tlsh_vectors.inc"

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<PreparedAlert> prepare_all(std::span<const AlertRecord> alerts) {
  std::vector<PreparedAlert> out;
  out.reserve(alerts.size());
  for (const auto& a : alerts) {
    try {
      out.push_back(prepare(a));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UndigestibleAlert) throw;
    }
  }
  return out;
}

std::vector<tlsh::Digest> unique_digests(std::span<const PreparedAlert> prepared) {
  std::vector<tlsh::Digest> out;
  for (const auto& [d, n] : dedupe_digests(prepared)) out.push_back(d);
  return out;
}

// ---------------------------------------------------------------------------

void tlsh_compatibility(Outcome& o) {
  std::size_t digests_ok = 0, pairs_ok = 0;
  for (const auto& v : kRandomVectors) {
    digests_ok += tlsh::digest(splitmix_bytes(v.seed, v.length, v.printable)).render() == v.digest;
  }
  for (const auto& p : kRandomPairs) {
    pairs_ok += tlsh::distance(tlsh::parse_digest(kRandomVectors[p.a].digest),
                               tlsh::parse_digest(kRandomVectors[p.b].digest)) == p.distance;
  }
  const std::size_t n_vectors = std::size(kRandomVectors), n_pairs = std::size(kRandomPairs);
  o.require(digests_ok == n_vectors, "reference digests");
  o.require(pairs_ok == n_pairs, "reference distances");

  const std::string lines[3] = {
      R"("C:\Windows\System32\rundll32.exe" shwebsvc.dll,AddNetPlaceRunDll)",
      R"("C:\WINDOWS\System32\WindowsPowerShell\v1.0\powershell.exe" ((New-Object System.Net.WebClient).OpenRead('https://www.google.com')).CanRead)",
      R"("C:\WINDOWS\System32\WindowsPowerShell\v1.0\powershell.exe" ((New-Object System.Net.WebClient).OpenRead('https://www.microsoft.com')).CanRead)",
  };
  tlsh::Digest d[3];
  for (int i = 0; i < 3; ++i) {
    d[i] = tlsh::digest(lines[i]);
    o.require(d[i].render() == kSampleDigests[i], "sample digest " + std::to_string(i + 1));
  }
  const int d23 = tlsh::distance(d[1], d[2]);
  const int d12 = tlsh::distance(d[0], d[1]);
  const int d13 = tlsh::distance(d[0], d[2]);
  auto within = [](int got, double want) { return std::abs(got - want) <= 0.15 * want; };
  o.require(within(d23, 23) && within(d12, 371) && within(d13, 380), "sample distances within 15%");
  o.require(d23 * 10 < d12 && d23 * 10 < d13, "similar pair an order of magnitude closer");
  o.detail << "vectors " << digests_ok << "/" << n_vectors << ", pairs " << pairs_ok << "/" << n_pairs
           << ", sample distances (" << d23 << ", " << d12 << ", " << d13 << ") vs (23, 371, 380)";
}

void clustering_invariants(Outcome& o) {
  const ClusterParams params;
  std::size_t corpora = 0, digests_total = 0, clusters_total = 0;
  for (int i = 0; i < 10; ++i) {
    GeneratorSpec spec;
    spec.n_alerts = static_cast<std::size_t>(std::llround(1000.0 * std::pow(10.0, i * 2.0 / 9.0)));
    spec.n_templates = std::max<std::size_t>(50, spec.n_alerts / 20);
    spec.variants_per_template = 3;
    spec.mutation_rate = 0.1;
    spec.outlier_min_template_alerts = 1;
    const auto corpus = generate_corpus(spec, 1000 + static_cast<std::uint64_t>(i));
    const auto digests = unique_digests(prepare_all(corpus.alerts));
    const auto model = hact_cluster(digests, params);
    const auto again = hact_cluster(digests, params, 1);
    o.require(model == again, "rerun identical on corpus " + std::to_string(i));

    bool within = true, exact = model.digests == digests && model.cluster_of.size() == digests.size();
    std::vector<std::size_t> members(model.clusters.size(), 0);
    for (std::size_t k = 0; exact && k < digests.size(); ++k) {
      const int id = model.cluster_of[k];
      if (id < 0 || static_cast<std::size_t>(id) >= model.clusters.size()) {
        exact = false;
        break;
      }
      const auto& c = model.clusters[static_cast<std::size_t>(id)];
      within = within && tlsh::distance(c.centroid, digests[k]) <= params.cdist &&
               tlsh::distance(c.centroid, digests[k]) <= c.radius;
      ++members[static_cast<std::size_t>(id)];
    }
    for (std::size_t k = 0; exact && k < model.clusters.size(); ++k) {
      exact = model.clusters[k].member_count == members[k] && members[k] > 0 &&
              model.clusters[k].radius <= params.cdist;
    }
    o.require(within, "members within cdist on corpus " + std::to_string(i));
    o.require(exact, "exact partition on corpus " + std::to_string(i));
    ++corpora;
    digests_total += digests.size();
    clusters_total += model.clusters.size();
  }
  o.detail << corpora << " corpora (1e3..1e5 alerts), " << digests_total << " unique digests, "
           << clusters_total << " clusters";
}

void cdist_sweep(Outcome& o) {
  const auto corpus = generate_corpus(GeneratorSpec{}, 7);
  const auto prepared = prepare_all(corpus.alerts);
  FeatureSource features;
  features.add(prepared);
  ClusterParams params;
  params.sweep_begin = 30;
  params.sweep_end = 70;
  params.sweep_step = 1;
  const auto points = sweep_cdist(unique_digests(prepared), features, params);
  bool clusters_ok = true, entropy_ok = true;
  for (std::size_t i = 1; i < points.size(); ++i) {
    clusters_ok = clusters_ok && points[i].n_clusters <= points[i - 1].n_clusters;
    entropy_ok = entropy_ok && points[i].mean_feature_entropy >= points[i - 1].mean_feature_entropy;
  }
  o.require(points.size() == 41, "one point per cdist");
  o.require(clusters_ok, "cluster count non-increasing");
  o.require(entropy_ok, "entropy non-decreasing");
  o.detail << "cdist 30..70: clusters " << points.front().n_clusters << " -> " << points.back().n_clusters
           << ", entropy " << fmt(points.front().mean_feature_entropy, 4) << " -> "
           << fmt(points.back().mean_feature_entropy, 4) << " bits";
}

// Criteria 4 and 5 share the 16K bench.
struct AnnResults {
  BenchReport small;
  BenchReport large;
};

AnnResults& ann_results() {
  static AnnResults r = [] {
    AnnResults out;
    BenchOptions options;
    options.ks = {1, 3, 5};
    options.batch = 500;
    options.linear_batches = 4;
    out.small = run_ann_bench(make_ann_workload(16000, 10000, 0xACCE97), AnnParams{}, options);
    options.linear_batches = 2;
    out.large = run_ann_bench(make_ann_workload(100000, 10000, 0xACCE98), AnnParams{}, options);
    return out;
  }();
  return r;
}

void ann_recall(Outcome& o) {
  const auto& r = ann_results();
  o.require(r.small.index_size >= 16000 && r.small.queries == 10000, "16K workload shape");
  o.require(r.large.index_size >= 100000, "100K workload shape");
  o.detail << "16K (" << r.small.index_size << "):";
  for (const auto& row : r.small.recall) {
    o.require(row.recall >= 0.95, "16K recall at k=" + std::to_string(row.k));
    o.detail << " k=" << row.k << " " << fmt(row.recall);
  }
  o.detail << "; 100K (" << r.large.index_size << "):";
  for (const auto& row : r.large.recall) {
    o.require(row.recall >= 0.95, "100K recall at k=" + std::to_string(row.k));
    o.detail << " k=" << row.k << " " << fmt(row.recall);
  }
}

void ann_speedup(Outcome& o) {
  const auto& r = ann_results().small;
  o.detail << "16K, batch " << r.batch << ", " << r.workers << " worker(s):";
  for (const auto& t : r.times) {
    const double speedup = t.linear / t.ann_multi;
    const double per_alert_ms = 1000.0 * t.ann_multi / static_cast<double>(r.batch);
    o.require(speedup >= 5.0, "speedup at k=" + std::to_string(t.k));
    o.require(per_alert_ms < 1.0, "per-alert time at k=" + std::to_string(t.k));
    o.detail << " k=" << t.k << " linear " << fmt(t.linear) << "s ann " << fmt(t.ann_multi) << "s ("
             << fmt(speedup, 1) << "x, " << fmt(per_alert_ms, 3) << " ms/alert)";
  }
}

long double reference_score(const FrequencyVector& fv, const ScalingContext& ctx, const ScoreWeights& w) {
  const long double org = std::log(static_cast<long double>(ctx.devices_in_org) /
                                   static_cast<long double>(ctx.devices_with_alert));
  const long double global =
      std::log(static_cast<long double>(ctx.orgs_total) / static_cast<long double>(ctx.orgs_with_alert));
  const long double s[6] = {1.0L, 1.0L, org, org, global, global};
  long double total = 0.0L;
  for (int i = 0; i < 6; ++i) {
    total += static_cast<long double>(w.w[i]) * s[i] /
             (1.0L + std::log(1.0L + static_cast<long double>(fv.f[i])));
  }
  return total;
}

ScalingContext random_context(SplitMix& rng) {
  ScalingContext ctx;
  ctx.devices_in_org = 1 + rng.below(5000);
  ctx.devices_with_alert = 1 + rng.below(ctx.devices_in_org);
  ctx.orgs_total = 1 + rng.below(500);
  ctx.orgs_with_alert = 1 + rng.below(ctx.orgs_total);
  return ctx;
}

FrequencyVector random_frequencies(SplitMix& rng) {
  FrequencyVector fv;
  fv.f[0] = rng.below(100);
  fv.f[1] = rng.below(100);
  fv.f[2] = fv.f[0] + rng.below(1000);
  fv.f[3] = fv.f[1] + rng.below(1000);
  fv.f[4] = fv.f[2] + rng.below(1000000);
  fv.f[5] = fv.f[3] + rng.below(1000000);
  return fv;
}

ScoreWeights random_weights(SplitMix& rng) {
  ScoreWeights w;
  for (auto& x : w.w) x = static_cast<double>(rng.below(1000));
  w.w[rng.below(6)] += 1.0;
  return w.normalized();
}

void scoring_oracle(Outcome& o) {
  SplitMix rng(0x5C0E);
  double worst = 0.0;
  std::size_t monotone_checks = 0, violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto fv = random_frequencies(rng);
    const auto ctx = random_context(rng);
    const auto w = random_weights(rng);
    const long double expected = reference_score(fv, ctx, w);
    const double got = score(fv, ctx, w);
    if (expected == 0.0L) {
      if (got != 0.0) worst = 1.0;
    } else {
      worst = std::max(worst, static_cast<double>(std::fabs((got - expected) / expected)));
    }
    for (std::size_t k = 0; k < kScopeCount; ++k) {
      auto more = fv;
      more.f[k] += 1 + rng.below(50);
      ++monotone_checks;
      violations += score(more, ctx, w) > got;
    }
  }
  o.require(worst <= 1e-12, "relative error");
  o.require(violations == 0, "monotone in each frequency");
  o.detail << "10000 triples, worst relative error " << worst << ", " << monotone_checks
           << " neighbor checks, " << violations << " violations";
}

void frequency_window(Outcome& o) {
  GeneratorSpec spec;
  spec.n_alerts = 20000;
  spec.n_templates = 120;
  spec.n_orgs = 6;
  spec.devices_per_org = 20;
  spec.days = 14;
  spec.rare_unclustered_rate = 0.01;
  const auto corpus = generate_corpus(spec, 0xF4E9);
  EngineConfig config;
  config.fit_weights = false;
  const auto bundle = train(corpus.alerts, config).bundle;
  const auto occurrences = keyed_occurrences(bundle, corpus.alerts);

  std::map<std::int64_t, std::vector<KeyedOccurrence>> by_day;
  for (const auto& occ : occurrences) by_day[FrequencyStore::day_of(occ.timestamp_ms)].push_back(occ);
  std::set<std::tuple<std::string, std::string, std::string, std::string>> probes;
  for (const auto& occ : occurrences) probes.emplace(occ.keys.command, occ.keys.path, occ.org_id, occ.device_id);

  FrequencyStore store;
  std::size_t lookups = 0, count_errors = 0, scope_errors = 0;
  for (const auto& [day, batch] : by_day) {
    store.advance(day, batch);
    std::map<std::string, std::uint64_t> brute[6];
    for (const auto& [d, b] : by_day) {
      if (d > day || d <= day - FrequencyStore::kWindowDays) continue;
      for (const auto& occ : b) {
        const auto& c = occ.keys.command;
        const auto& p = occ.keys.path;
        ++brute[0][c + '\x1f' + occ.org_id + '\x1f' + occ.device_id];
        ++brute[1][p + '\x1f' + occ.org_id + '\x1f' + occ.device_id];
        ++brute[2][c + '\x1f' + occ.org_id];
        ++brute[3][p + '\x1f' + occ.org_id];
        ++brute[4][c];
        ++brute[5][p];
      }
    }
    for (const auto& [c, p, org, device] : probes) {
      const auto [fv, ctx] = store.lookup({c, p}, org, device);
      const std::string cells[6] = {c + '\x1f' + org + '\x1f' + device, p + '\x1f' + org + '\x1f' + device,
                                    c + '\x1f' + org, p + '\x1f' + org, c, p};
      for (int s = 0; s < 6; ++s) {
        const auto it = brute[s].find(cells[s]);
        count_errors += fv.f[static_cast<std::size_t>(s)] != (it == brute[s].end() ? 0 : it->second);
      }
      scope_errors += !(fv.f[0] <= fv.f[2] && fv.f[2] <= fv.f[4] && fv.f[1] <= fv.f[3] && fv.f[3] <= fv.f[5]);
      ++lookups;
    }
  }
  o.require(by_day.size() == 14, "fourteen days");
  o.require(count_errors == 0, "window counts");
  o.require(scope_errors == 0, "scope monotonicity");
  o.detail << by_day.size() << " days, " << occurrences.size() << " occurrences, " << lookups
           << " lookups, " << count_errors << " count mismatches, " << scope_errors << " scope violations";
}

void weight_fitting(Outcome& o) {
  SplitMix rng(0xF17);
  std::vector<LabeledSample> separable;
  for (int i = 0; i < 5000; ++i) {
    LabeledSample s;
    s.label = rng.below(8) == 0 ? Label::Malicious : Label::False;
    s.fv = random_frequencies(rng);
    // Malicious alerts are new on their device; false ones are not.
    s.fv.f[0] = s.label == Label::Malicious ? 0 : 1 + rng.below(30);
    s.fv.f[2] = std::max(s.fv.f[2], s.fv.f[0]);
    s.fv.f[4] = std::max(s.fv.f[4], s.fv.f[2]);
    s.ctx = random_context(rng);
    separable.push_back(s);
  }
  const auto fit = fit_weights(separable);
  o.require(fit.auc == 1.0, "separable AUC");
  bool never_below = fit.auc >= fit.uniform_auc;

  double lo = 1.0, hi = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    auto permuted = separable;
    std::vector<Label> labels;
    for (const auto& s : permuted) labels.push_back(s.label);
    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);
    for (std::size_t i = 0; i < permuted.size(); ++i) permuted[i].label = labels[i];
    const auto p = fit_weights(permuted);
    lo = std::min(lo, p.auc);
    hi = std::max(hi, p.auc);
    never_below = never_below && p.auc >= p.uniform_auc;
  }
  o.require(lo >= 0.45 && hi <= 0.55, "permuted AUC within [0.45, 0.55]");

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LabeledSample> noisy;
    for (int i = 0; i < 1000; ++i) {
      LabeledSample s{random_frequencies(rng), random_context(rng), Label::False};
      const double signal = 1.0 / (1.0 + static_cast<double>(s.fv.f[trial % 6]));
      s.label = rng.below(1000) < static_cast<std::uint64_t>(100 + 600 * signal) ? Label::Malicious : Label::False;
      noisy.push_back(s);
    }
    const auto f = fit_weights(noisy);
    never_below = never_below && f.auc >= f.uniform_auc;
  }
  o.require(never_below, "fitted AUC at least uniform");
  o.detail << "separable AUC " << fmt(fit.auc, 4) << ", permuted AUC " << fmt(lo, 4) << ".." << fmt(hi, 4)
           << ", fitted >= uniform on 26 sample sets";
}

void evaluation_arithmetic(Outcome& o) {
  const auto set_a = report_from_confusion({108, 0, 12477, 58679});
  const auto set_b = report_from_confusion({945, 58, 12971, 68323});
  o.require(std::abs(100.0 * set_a.false_removal_rate - 82.5) < 0.05, "set A false removal");
  o.require(std::abs(100.0 * set_b.false_removal_rate - 84.0) < 0.5, "set B false removal");
  o.require(set_a.recall_malicious == 1.0, "set A recall");
  o.require(std::abs(100.0 * set_b.recall_malicious - 94.3) <= 0.1, "set B recall");
  o.require(std::abs(set_a.snr_improvement - 5.70) <= 0.01, "set A snr");
  o.require(std::abs(set_b.snr_improvement - 5.91) <= 0.01, "set B snr");
  o.detail << "set A removal " << fmt(100.0 * set_a.false_removal_rate, 2) << "%, recall "
           << fmt(100.0 * set_a.recall_malicious, 2) << "%, snr " << fmt(set_a.snr_improvement, 4) << "; set B removal "
           << fmt(100.0 * set_b.false_removal_rate, 2) << "%, recall " << fmt(100.0 * set_b.recall_malicious, 2)
           << "%, snr " << fmt(set_b.snr_improvement, 4);
}

void bias_correction(Outcome& o) {
  struct Row {
    ClassCounts before, after;
  };
  for (const auto& row : {Row{{32, 2218}, {108, 71156}}, Row{{88, 2734}, {1003, 81294}}}) {
    std::vector<AlertRecord> labeled;
    for (std::size_t i = 0; i < row.before.malicious + row.before.false_alerts; ++i) {
      AlertRecord r;
      r.alert_id = "a" + std::to_string(i);
      r.label = i < row.before.malicious ? Label::Malicious : Label::False;
      labeled.push_back(r);
    }
    const auto targets = targets_from_factors(
        row.before, static_cast<double>(row.after.malicious) / static_cast<double>(row.before.malicious),
        static_cast<double>(row.after.false_alerts) / static_cast<double>(row.before.false_alerts));
    const auto corrected = class_counts(bias_correct(labeled, targets));
    o.require(targets == row.after && corrected == row.after, "exact class totals");
    o.detail << "(" << row.before.malicious << ", " << row.before.false_alerts << ") -> (" << corrected.malicious
             << ", " << corrected.false_alerts << ") ";
  }
}

void planted_anomalies(Outcome& o) {
  const GeneratorSpec spec;
  const auto corpus = generate_corpus(spec, 2024);
  const auto first_day = FrequencyStore::day_of(corpus.alerts.front().timestamp_ms);
  std::vector<AlertRecord> history, fresh;
  std::vector<TruthRecord> truth;
  for (std::size_t i = 0; i < corpus.alerts.size(); ++i) {
    if (FrequencyStore::day_of(corpus.alerts[i].timestamp_ms) - first_day < 11) {
      history.push_back(corpus.alerts[i]);
    } else {
      fresh.push_back(corpus.alerts[i]);
      truth.push_back(corpus.truth[i]);
    }
  }
  EngineConfig config;
  config.profiles.min_support = 100;
  const auto bundle = train(history, config).bundle;
  const auto verdicts = triage_batch(bundle, fresh);

  std::size_t outliers = 0, outliers_caught = 0, rare = 0, rare_caught = 0, normal = 0, normal_removed = 0;
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    const auto& v = verdicts[i];
    switch (truth[i].anomaly) {
      case PlantedAnomaly::FeatureOutlier:
        ++outliers;
        outliers_caught += v.route == Route::ClusteredOutlier && v.decision == Decision::RetainedForTriage;
        break;
      case PlantedAnomaly::RareUnclustered:
        ++rare;
        rare_caught += v.anomaly_score && *v.anomaly_score >= bundle.weights().decision_threshold;
        break;
      case PlantedAnomaly::None:
        if (truth[i].expected_route == "ClusteredConsistent") {
          ++normal;
          normal_removed += v.decision == Decision::RemovedFromTriage;
        }
        break;
    }
  }
  auto share = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  o.require(outliers > 0 && share(outliers_caught, outliers) >= 0.99, "feature outliers retained");
  o.require(rare > 0 && share(rare_caught, rare) >= 0.99, "rare unclustered above threshold");
  o.require(share(normal_removed, normal) >= 0.80, "non-anomalous removed");
  o.detail << "train days 0-10, triage days 11-13: outliers " << outliers_caught << "/" << outliers
           << ", rare " << rare_caught << "/" << rare << ", non-anomalous removed " << normal_removed << "/"
           << normal << " (" << fmt(100.0 * share(normal_removed, normal), 1) << "%)";
}

void stream_throughput(Outcome& o) {
  GeneratorSpec spec;
  spec.n_templates = 40000;
  const auto corpus = generate_corpus(spec, 0x7417);
  const auto bundle = train(corpus.alerts, EngineConfig{}).bundle;
  std::stringstream in;
  write_corpus(in, corpus);
  std::ostringstream out;
  const auto stats = triage_stream(bundle, in, out);
  o.require(bundle.clusters().size() >= 16000, "16K-cluster bundle");
  o.require(stats.alerts == corpus.alerts.size(), "every alert triaged");
  o.require(stats.alerts_per_second >= 1000.0, "at least 1000 alerts/s");
  o.detail << bundle.clusters().size() << " clusters, " << stats.alerts << " alerts in " << fmt(stats.seconds, 2)
           << "s = " << fmt(stats.alerts_per_second, 0) << " alerts/s, p99 " << fmt(stats.total.p99, 0) << " us";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"tlsh compatibility", tlsh_compatibility},
      {"clustering invariants", clustering_invariants},
      {"cdist sweep shape", cdist_sweep},
      {"ann recall", ann_recall},
      {"ann speedup", ann_speedup},
      {"scoring oracle", scoring_oracle},
      {"frequency window", frequency_window},
      {"weight fitting", weight_fitting},
      {"evaluation arithmetic", evaluation_arithmetic},
      {"bias correction", bias_correction},
      {"planted anomalies end to end", planted_anomalies},
      {"stream throughput", stream_throughput},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": "
              << o.detail.str() << " [" << fmt(seconds, 1) << "s]" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failed;
}
