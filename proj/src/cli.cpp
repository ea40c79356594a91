#include "alertsieve/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "alertsieve/bench.hpp"
#include "alertsieve/corpus.hpp"
#include "alertsieve/engine.hpp"
#include "alertsieve/error.hpp"
#include "alertsieve/evaluation.hpp"
#include "alertsieve/parallel.hpp"

namespace alertsieve {
namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string model_dir;
  std::string config_path;
  std::size_t workers = 0;
  std::uint64_t seed = 0x5EED;
  bool seed_given = false;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path);
  return f;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path);
  return f;
}

struct AlertInput {
  FeatureSchema schema = FeatureSchema::standard();
  std::vector<AlertRecord> alerts;
  std::size_t malformed = 0;
};

// Malformed lines are reported on `err` and skipped. With `target`, features
// are reordered into that schema.
AlertInput read_alerts(std::istream& in, std::ostream& err, const FeatureSchema* target = nullptr) {
  AlertStreamReader reader(in);
  AlertInput result;
  while (auto item = reader.next()) {
    if (auto* bad = std::get_if<MalformedRecord>(&*item)) {
      ++result.malformed;
      err << json{{"line", bad->line_number}, {"error", "MalformedRecord"}, {"reason", bad->reason}}.dump()
          << '\n';
      continue;
    }
    result.alerts.push_back(std::move(std::get<AlertRecord>(*item)));
  }
  result.schema = reader.schema();
  if (target != nullptr && *target != result.schema) {
    for (auto& a : result.alerts) a.features = remap_features(a.features, result.schema, *target);
    result.schema = *target;
  }
  return result;
}

AlertInput read_alerts_from(const std::string& path, std::istream& in, std::ostream& err,
                            const FeatureSchema* target = nullptr) {
  if (path.empty() || path == "-") return read_alerts(in, err, target);
  auto f = open_input(path);
  return read_alerts(f, err, target);
}

EngineConfig config_of(const GlobalOptions& g) {
  EngineConfig config;
  if (!g.config_path.empty()) {
    auto f = open_input(g.config_path);
    config = load_config(f);
  }
  if (g.seed_given) config.ann.seed = g.seed;
  config.validate();
  return config;
}

const std::string& require_model_dir(const GlobalOptions& g) {
  if (g.model_dir.empty()) throw UsageError("--model-dir is required");
  return g.model_dir;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

json weights_json(const ModelBundle& bundle) {
  const auto& w = bundle.weights();
  json out{{"weights", w.w}, {"decision_threshold", w.decision_threshold}};
  out["fitted_auc"] = bundle.fitted_auc() ? json(*bundle.fitted_auc()) : json(nullptr);
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Alert triage by command-line similarity, feature profiles and rarity scoring",
               "alertsieve"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--model-dir", g.model_dir, "Model bundle directory");
  app.add_option("--config", g.config_path, "Engine config (JSON)");
  app.add_option("--workers", g.workers, "Worker threads, 0 for all cores");
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed for generation, benchmarks and the index");

  // generate
  GeneratorSpec gen;
  std::string gen_output, gen_truth;
  auto* generate = app.add_subcommand("generate", "Write a synthetic labeled alert corpus");
  generate->add_option("--output", gen_output, "Alert file, default stdout");
  generate->add_option("--truth", gen_truth, "Ground-truth sidecar file");
  generate->add_option("--alerts", gen.n_alerts)->capture_default_str();
  generate->add_option("--templates", gen.n_templates)->capture_default_str();
  generate->add_option("--orgs", gen.n_orgs)->capture_default_str();
  generate->add_option("--devices-per-org", gen.devices_per_org)->capture_default_str();
  generate->add_option("--days", gen.days)->capture_default_str();
  generate->add_option("--mutation-rate", gen.mutation_rate)->capture_default_str();
  generate->add_option("--outlier-rate", gen.feature_outlier_rate)->capture_default_str();
  generate->add_option("--rare-rate", gen.rare_unclustered_rate)->capture_default_str();
  generate->add_option("--label-fraction", gen.label_fraction)->capture_default_str();
  generate->add_option("--outlier-min-template-alerts", gen.outlier_min_template_alerts)
      ->capture_default_str();

  // train
  std::string train_input;
  auto* train_cmd = app.add_subcommand("train", "Build a model bundle from alerts");
  train_cmd->add_option("--input", train_input, "Alert file, default stdin");

  // sweep-cdist
  std::string sweep_input;
  std::optional<int> sweep_begin, sweep_end, sweep_step;
  auto* sweep = app.add_subcommand("sweep-cdist", "Cluster count and feature entropy per cdist");
  sweep->add_option("--input", sweep_input, "Alert file, default stdin");
  sweep->add_option("--begin", sweep_begin);
  sweep->add_option("--end", sweep_end);
  sweep->add_option("--step", sweep_step);

  // triage
  std::string triage_input, triage_output;
  bool triage_stats = false;
  auto* triage_cmd = app.add_subcommand("triage", "Stream alerts and emit one verdict per line");
  triage_cmd->add_option("--input", triage_input, "Alert file, default stdin");
  triage_cmd->add_option("--output", triage_output, "Verdict file, default stdout");
  triage_cmd->add_flag("--stats", triage_stats, "Print throughput and latency to stderr");

  // fit-weights
  std::string fit_input;
  auto* fit = app.add_subcommand("fit-weights", "Refit scoring weights on labeled alerts");
  fit->add_option("--input", fit_input, "Labeled alert file, default stdin");

  // update-frequencies
  std::string freq_input;
  auto* update = app.add_subcommand("update-frequencies", "Fold a new batch into the frequency window");
  update->add_option("--input", freq_input, "Alert file, default stdin");

  // mark-contaminated
  std::vector<int> mark_ids;
  std::string mark_feedback, mark_reason = "analyst";
  std::optional<std::int64_t> mark_timestamp;
  auto* mark = app.add_subcommand("mark-contaminated", "Flag clusters that hold malicious alerts");
  mark->add_option("--cluster-id", mark_ids, "Cluster to mark; repeatable");
  mark->add_option("--feedback", mark_feedback, "Labeled alerts; clusters of malicious ones are marked");
  mark->add_option("--reason", mark_reason)->capture_default_str();
  mark->add_option("--timestamp", mark_timestamp, "Epoch milliseconds, default now");

  // eval
  std::string eval_input, eval_title = "evaluation";
  std::optional<std::size_t> eval_mal_target, eval_false_target;
  std::optional<double> eval_mal_factor, eval_false_factor;
  auto* eval = app.add_subcommand("eval", "Confusion table, recall and SNR improvement");
  eval->add_option("--input", eval_input, "Labeled alert file, default stdin");
  auto* mt = eval->add_option("--malicious-target", eval_mal_target, "Malicious count after duplication");
  auto* ft = eval->add_option("--false-target", eval_false_target, "False-alert count after duplication");
  auto* mf = eval->add_option("--malicious-factor", eval_mal_factor);
  auto* ff = eval->add_option("--false-factor", eval_false_factor);
  mt->needs(ft);
  ft->needs(mt);
  mf->needs(ff);
  ff->needs(mf);
  mt->excludes(mf);
  mt->excludes(ff);
  ft->excludes(mf);
  ft->excludes(ff);
  eval->add_option("--title", eval_title)->capture_default_str();

  // bench
  std::vector<std::size_t> bench_sizes{16000};
  BenchOptions bench_opts;
  std::size_t bench_queries = 10000;
  auto* bench = app.add_subcommand("bench", "ANN against linear search: time, recall, throughput");
  bench->add_option("--index-size", bench_sizes, "Clusters in the index; repeatable")->capture_default_str();
  bench->add_option("--batch", bench_opts.batch)->capture_default_str();
  bench->add_option("--k", bench_opts.ks, "Neighbors; repeatable")->capture_default_str();
  bench->add_option("--queries", bench_queries)->capture_default_str();
  bench->add_option("--linear-batches", bench_opts.linear_batches)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    (void)app.exit(e, out, err);
    err << app.help();
    return 2;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    const std::size_t workers = g.workers == 0 ? default_workers() : g.workers;

    if (*generate) {
      const auto corpus = generate_corpus(gen, g.seed);
      if (gen_output.empty() || gen_output == "-") {
        write_corpus(out, corpus);
      } else {
        auto f = open_output(gen_output);
        write_corpus(f, corpus);
      }
      if (!gen_truth.empty()) {
        auto f = open_output(gen_truth);
        write_truth(f, corpus);
      }
    } else if (*train_cmd) {
      const auto& dir = require_model_dir(g);
      const auto config = config_of(g);
      const auto input = read_alerts_from(train_input, in, err);
      auto result = train(input.alerts, config, input.schema, workers);
      result.bundle.save(dir);
      for (const auto& w : result.report.warnings) err << "warning: " << w << '\n';
      const auto& r = result.report;
      json summary{{"alerts", r.alerts},
                   {"malformed", input.malformed},
                   {"undigestible", r.undigestible},
                   {"unique_digests", r.unique_digests},
                   {"clusters", r.clusters},
                   {"supported_clusters", r.supported_clusters},
                   {"weight_samples", r.weight_samples}};
      summary.update(weights_json(result.bundle));
      out << summary.dump() << '\n';
    } else if (*sweep) {
      auto config = config_of(g);
      if (sweep_begin) config.clustering.sweep_begin = *sweep_begin;
      if (sweep_end) config.clustering.sweep_end = *sweep_end;
      if (sweep_step) config.clustering.sweep_step = *sweep_step;
      config.clustering.validate();
      const auto input = read_alerts_from(sweep_input, in, err);
      std::vector<PreparedAlert> prepared;
      prepared.reserve(input.alerts.size());
      for (const auto& a : input.alerts) {
        try {
          prepared.push_back(prepare(a));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::UndigestibleAlert) throw;
        }
      }
      FeatureSource features;
      features.add(prepared);
      const auto counts = dedupe_digests(prepared);
      std::vector<tlsh::Digest> digests;
      digests.reserve(counts.size());
      for (const auto& [d, n] : counts) digests.push_back(d);
      const auto points = sweep_cdist(digests, features, config.clustering, workers);
      out << format_sweep(points);
    } else if (*triage_cmd) {
      const auto bundle = ModelBundle::load(require_model_dir(g));
      std::ifstream fin;
      std::ofstream fout;
      std::istream* src = &in;
      std::ostream* dst = &out;
      if (!triage_input.empty() && triage_input != "-") {
        fin = open_input(triage_input);
        src = &fin;
      }
      if (!triage_output.empty() && triage_output != "-") {
        fout = open_output(triage_output);
        dst = &fout;
      }
      const auto stats = triage_stream(bundle, *src, *dst, workers);
      dst->flush();
      if (triage_stats) err << format_stream_stats(stats);
    } else if (*fit) {
      const auto& dir = require_model_dir(g);
      auto bundle = ModelBundle::load(dir);
      const auto input = read_alerts_from(fit_input, in, err, &bundle.schema());
      const auto samples = weight_samples(bundle, input.alerts, workers);
      bool has_mal = false, has_false = false;
      for (const auto& s : samples) (s.label == Label::Malicious ? has_mal : has_false) = true;
      if (!has_mal || !has_false) {
        throw Error(ErrorCode::InsufficientLabeledData,
                    "labeled scoring-route alerts lack one class (" + std::to_string(samples.size()) +
                        " samples)");
      }
      const auto result = fit_weights(samples, bundle.weights().decision_threshold, workers);
      bundle.set_weights(result.weights, result.auc);
      bundle.save(dir);
      json summary{{"samples", samples.size()}, {"uniform_auc", result.uniform_auc}};
      summary.update(weights_json(bundle));
      out << summary.dump() << '\n';
    } else if (*update) {
      const auto& dir = require_model_dir(g);
      auto bundle = ModelBundle::load(dir);
      const auto input = read_alerts_from(freq_input, in, err, &bundle.schema());
      bundle.set_frequencies(updated_frequencies(bundle, input.alerts, workers));
      bundle.save(dir);
      out << json{{"alerts", input.alerts.size()},
                  {"window_end_day", bundle.frequencies().window_end_day()}}
                 .dump()
          << '\n';
    } else if (*mark) {
      const auto& dir = require_model_dir(g);
      if (mark_ids.empty() && mark_feedback.empty()) {
        throw UsageError("mark-contaminated needs --cluster-id or --feedback");
      }
      auto bundle = ModelBundle::load(dir);
      const auto ts = mark_timestamp.value_or(now_ms());
      std::vector<int> marked;
      for (int id : mark_ids) {
        if (bundle.mark_contaminated(id, ts, mark_reason)) marked.push_back(id);
      }
      if (!mark_feedback.empty()) {
        const auto input = read_alerts_from(mark_feedback, in, err, &bundle.schema());
        for (int id : contaminate_from_feedback(bundle, input.alerts, ts, mark_reason)) marked.push_back(id);
      }
      std::sort(marked.begin(), marked.end());
      bundle.save(dir);
      out << json{{"marked", marked}, {"contaminated_total", bundle.contamination_log().size()}}.dump()
          << '\n';
    } else if (*eval) {
      const auto bundle = ModelBundle::load(require_model_dir(g));
      const auto input = read_alerts_from(eval_input, in, err, &bundle.schema());
      std::optional<ClassCounts> targets;
      if (eval_mal_target) targets = ClassCounts{*eval_mal_target, *eval_false_target};
      if (eval_mal_factor) {
        targets = targets_from_factors(class_counts(input.alerts), *eval_mal_factor, *eval_false_factor);
      }
      out << format_eval(evaluate(bundle, input.alerts, targets, workers), eval_title);
    } else if (*bench) {
      const auto config = config_of(g);
      bench_opts.workers = workers;
      std::vector<BenchReport> reports;
      for (const auto size : bench_sizes) {
        const auto workload =
            make_ann_workload(size, bench_queries, g.seed, config.clustering.cdist, workers);
        reports.push_back(run_ann_bench(workload, config.ann, bench_opts));
      }
      out << format_bench(reports);
    }
    out.flush();
    return 0;
  } catch (const UsageError& e) {
    err << json{{"error", "Usage"}, {"message", e.what()}}.dump() << '\n';
    err << app.help();
    return 2;
  } catch (const Error& e) {
    err << json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
}

}  // namespace alertsieve
