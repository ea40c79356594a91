#include "alertsieve/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <openssl/evp.h>

#include "alertsieve/error.hpp"
#include "alertsieve/parallel.hpp"

namespace alertsieve {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::int64_t micros_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration_cast<std::chrono::microseconds>(b - a).count();
}

void reject_unknown_keys(const json& object, std::initializer_list<std::string_view> known,
                         const std::string& where) {
  if (!object.is_object()) throw Error(ErrorCode::InvalidArgument, where + " must be an object");
  for (const auto& [key, value] : object.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::InvalidArgument, "unknown config key " + where + key);
    }
  }
}

template <class T>
void read_key(const json& object, const char* key, T& target) {
  if (object.contains(key)) object.at(key).get_to(target);
}

ordered_json config_json(const EngineConfig& c) {
  ordered_json j;
  j["cdist"] = c.clustering.cdist;
  j["assign_by_radius"] = c.clustering.assign_by_radius;
  j["sweep"] = {{"begin", c.clustering.sweep_begin},
                {"end", c.clustering.sweep_end},
                {"step", c.clustering.sweep_step}};
  j["ann"] = {{"k_build", c.ann.k_build},
              {"iterations", c.ann.iterations},
              {"sample_rate", c.ann.sample_rate},
              {"convergence", c.ann.convergence},
              {"queue_width", c.ann.queue_width},
              {"entry_points", c.ann.entry_points},
              {"lsh_tables", c.ann.lsh_tables},
              {"seed", c.ann.seed}};
  j["outlier_threshold"] = c.profiles.outlier_threshold;
  j["min_support"] = c.profiles.min_support;
  j["decision_threshold"] = c.decision_threshold;
  j["batch_size"] = c.batch_size;
  j["queue_batches"] = c.queue_batches;
  j["fit_weights"] = c.fit_weights;
  return j;
}

EngineConfig config_from_json(const json& j) {
  EngineConfig c;
  reject_unknown_keys(j,
                      {"cdist", "assign_by_radius", "sweep", "ann", "outlier_threshold",
                       "min_support", "decision_threshold", "batch_size", "queue_batches",
                       "fit_weights"},
                      "");
  read_key(j, "cdist", c.clustering.cdist);
  read_key(j, "assign_by_radius", c.clustering.assign_by_radius);
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    reject_unknown_keys(s, {"begin", "end", "step"}, "sweep.");
    read_key(s, "begin", c.clustering.sweep_begin);
    read_key(s, "end", c.clustering.sweep_end);
    read_key(s, "step", c.clustering.sweep_step);
  }
  if (j.contains("ann")) {
    const auto& a = j.at("ann");
    reject_unknown_keys(a,
                        {"k_build", "iterations", "sample_rate", "convergence", "queue_width",
                         "entry_points", "lsh_tables", "seed"},
                        "ann.");
    read_key(a, "k_build", c.ann.k_build);
    read_key(a, "iterations", c.ann.iterations);
    read_key(a, "sample_rate", c.ann.sample_rate);
    read_key(a, "convergence", c.ann.convergence);
    read_key(a, "queue_width", c.ann.queue_width);
    read_key(a, "entry_points", c.ann.entry_points);
    read_key(a, "lsh_tables", c.ann.lsh_tables);
    read_key(a, "seed", c.ann.seed);
  }
  read_key(j, "outlier_threshold", c.profiles.outlier_threshold);
  read_key(j, "min_support", c.profiles.min_support);
  read_key(j, "decision_threshold", c.decision_threshold);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "queue_batches", c.queue_batches);
  read_key(j, "fit_weights", c.fit_weights);
  c.validate();
  return c;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Io, "SHA-256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(out[i]);
  }
  return hex.str();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << bytes;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot replace " + path.string() + ": " + ec.message());
}

ordered_json clusters_json(const std::vector<Cluster>& clusters, int cdist) {
  ordered_json j;
  j["format"] = "alertsieve.clusters";
  j["version"] = 1;
  j["cdist"] = cdist;
  auto list = ordered_json::array();
  for (const auto& c : clusters) {
    list.push_back({{"cluster_id", c.cluster_id},
                    {"centroid", c.centroid.render()},
                    {"radius", c.radius},
                    {"member_count", c.member_count},
                    {"contaminated", c.contaminated}});
  }
  j["clusters"] = std::move(list);
  return j;
}

ordered_json weights_json(const ScoreWeights& w, std::optional<double> fitted_auc) {
  ordered_json j;
  j["format"] = "alertsieve.weights";
  j["version"] = 1;
  j["weights"] = w.w;
  j["decision_threshold"] = w.decision_threshold;
  j["method"] = fitted_auc ? "fitted" : "uniform";
  j["fitted_auc"] = fitted_auc ? ordered_json(*fitted_auc) : ordered_json(nullptr);
  return j;
}

void expect_format(const json& j, const char* name) {
  if (j.at("format") != name || j.at("version") != 1) {
    throw Error(ErrorCode::BundleMismatch, std::string("unsupported ") + name + " component");
  }
}

TriageVerdict fail_open(std::string alert_id) {
  TriageVerdict v;
  v.alert_id = std::move(alert_id);
  v.route = Route::UnclusteredScored;
  v.anomaly_score = 1.0;
  v.decision = Decision::RetainedForTriage;
  return v;
}

LatencySummary summarize(std::vector<std::int64_t> values) {
  LatencySummary s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto rank = [&](double q) {
    const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
    return static_cast<double>(values[std::clamp<std::size_t>(i, 1, values.size()) - 1]);
  };
  s.p50 = rank(0.50);
  s.p95 = rank(0.95);
  s.p99 = rank(0.99);
  return s;
}

template <class T>
class BoundedQueue {
public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

  void push(T item) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
  }

private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

}  // namespace

void EngineConfig::validate() const {
  clustering.validate();
  ann.validate();
  profiles.validate();
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "decision_threshold must lie in (0, 1)");
  }
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch_size must be positive");
  if (queue_batches == 0) throw Error(ErrorCode::InvalidArgument, "queue_batches must be positive");
}

bool EngineConfig::operator==(const EngineConfig& o) const {
  return config_json(*this) == config_json(o);
}

EngineConfig load_config(std::istream& in) {
  try {
    return config_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad config: ") + e.what());
  }
}

void save_config(std::ostream& out, const EngineConfig& config) {
  out << config_json(config).dump(2) << '\n';
}

std::string_view to_string(Route route) noexcept {
  switch (route) {
    case Route::ClusteredConsistent: return "ClusteredConsistent";
    case Route::ClusteredOutlier: return "ClusteredOutlier";
    case Route::ContaminatedScored: return "ContaminatedScored";
    case Route::UnclusteredScored: return "UnclusteredScored";
  }
  return "UnclusteredScored";
}

std::string_view to_string(Decision decision) noexcept {
  return decision == Decision::RemovedFromTriage ? "RemovedFromTriage" : "RetainedForTriage";
}

bool TriageVerdict::operator==(const TriageVerdict& o) const {
  return alert_id == o.alert_id && route == o.route && cluster_id == o.cluster_id &&
         outlier_features == o.outlier_features && anomaly_score == o.anomaly_score &&
         decision == o.decision;
}

std::string to_json_line(const TriageVerdict& v) {
  ordered_json j;
  j["alert_id"] = v.alert_id;
  j["route"] = to_string(v.route);
  if (v.cluster_id) j["cluster_id"] = *v.cluster_id;
  if (v.outlier_features) {
    auto list = ordered_json::array();
    for (const auto& o : *v.outlier_features) {
      list.push_back({{"feature", o.feature}, {"value", o.value}, {"proportion", o.proportion}});
    }
    j["outlier_features"] = std::move(list);
  }
  if (v.anomaly_score) j["anomaly_score"] = *v.anomaly_score;
  j["decision"] = to_string(v.decision);
  j["latency_micros"] = v.latency_micros;
  return j.dump();
}

TriageVerdict parse_verdict_line(std::string_view line) {
  try {
    const auto j = json::parse(line);
    TriageVerdict v;
    j.at("alert_id").get_to(v.alert_id);
    const auto route = j.at("route").get<std::string>();
    bool known = false;
    for (auto r : {Route::ClusteredConsistent, Route::ClusteredOutlier, Route::ContaminatedScored,
                   Route::UnclusteredScored}) {
      if (route == to_string(r)) {
        v.route = r;
        known = true;
      }
    }
    if (!known) throw Error(ErrorCode::MalformedRecord, "unknown route " + route);
    if (j.contains("cluster_id")) v.cluster_id = j.at("cluster_id").get<int>();
    if (j.contains("outlier_features")) {
      v.outlier_features.emplace();
      for (const auto& o : j.at("outlier_features")) {
        v.outlier_features->push_back({o.at("feature").get<std::string>(),
                                       o.at("value").get<std::string>(),
                                       o.at("proportion").get<double>()});
      }
    }
    if (j.contains("anomaly_score")) v.anomaly_score = j.at("anomaly_score").get<double>();
    const auto decision = j.at("decision").get<std::string>();
    if (decision == to_string(Decision::RemovedFromTriage)) {
      v.decision = Decision::RemovedFromTriage;
    } else if (decision == to_string(Decision::RetainedForTriage)) {
      v.decision = Decision::RetainedForTriage;
    } else {
      throw Error(ErrorCode::MalformedRecord, "unknown decision " + decision);
    }
    v.latency_micros = j.value("latency_micros", std::int64_t{0});
    return v;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("bad verdict line: ") + e.what());
  }
}

ContaminationState::ContaminationState(std::span<const Cluster> clusters)
    : flags_(std::make_unique<std::atomic<bool>[]>(clusters.size())), size_(clusters.size()) {
  for (std::size_t i = 0; i < clusters.size(); ++i) flags_[i].store(clusters[i].contaminated);
}

ContaminationState::ContaminationState(const ContaminationState& other) { *this = other; }

ContaminationState& ContaminationState::operator=(const ContaminationState& other) {
  if (this == &other) return *this;
  auto flags = std::make_unique<std::atomic<bool>[]>(other.size_);
  for (std::size_t i = 0; i < other.size_; ++i) flags[i].store(other.test(i));
  auto log = other.log();
  std::lock_guard lock(log_mutex_);
  flags_ = std::move(flags);
  size_ = other.size_;
  log_ = std::move(log);
  return *this;
}

bool ContaminationState::set(std::size_t position, ContaminationRecord record) {
  std::lock_guard lock(log_mutex_);
  if (flags_[position].exchange(true, std::memory_order_acq_rel)) return false;
  log_.push_back(std::move(record));
  return true;
}

std::vector<ContaminationRecord> ContaminationState::log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

void ContaminationState::restore_log(std::vector<ContaminationRecord> log) {
  std::lock_guard lock(log_mutex_);
  log_ = std::move(log);
}

ModelBundle::ModelBundle(EngineConfig config, FeatureSchema schema, std::vector<Cluster> clusters,
                         ProfileSet profiles, AnnIndex index, FrequencyStore frequencies,
                         ScoreWeights weights, std::optional<double> fitted_auc)
    : config_(std::move(config)),
      schema_(std::move(schema)),
      clusters_(std::move(clusters)),
      profiles_(std::move(profiles)),
      index_(std::move(index)),
      frequencies_(std::move(frequencies)),
      weights_(std::move(weights)),
      fitted_auc_(fitted_auc) {
  config_.validate();
  weights_.validate();
  index_positions();
  if (index_.size() != clusters_.size()) {
    throw Error(ErrorCode::BundleMismatch, "index and cluster set differ in size");
  }
  for (const auto& node : index_.nodes()) {
    const auto* c = find_cluster(node.cluster_id);
    if (c == nullptr || c->centroid != node.centroid) {
      throw Error(ErrorCode::BundleMismatch, "index node does not match its cluster");
    }
  }
  for (const auto& [id, p] : profiles_) {
    if (find_cluster(id) == nullptr) {
      throw Error(ErrorCode::BundleMismatch, "profile for unknown cluster " + std::to_string(id));
    }
  }
  contamination_ = ContaminationState(clusters_);
}

void ModelBundle::index_positions() {
  position_.clear();
  for (std::size_t i = 0; i < clusters_.size(); ++i) {
    if (!position_.emplace(clusters_[i].cluster_id, i).second) {
      throw Error(ErrorCode::BundleMismatch, "duplicate cluster id");
    }
  }
}

std::vector<Cluster> ModelBundle::clusters() const {
  auto out = clusters_;
  for (std::size_t i = 0; i < out.size(); ++i) out[i].contaminated = contamination_.test(i);
  return out;
}

const Cluster* ModelBundle::find_cluster(int cluster_id) const {
  auto it = position_.find(cluster_id);
  return it == position_.end() ? nullptr : &clusters_[it->second];
}

bool ModelBundle::is_contaminated(int cluster_id) const {
  auto it = position_.find(cluster_id);
  return it != position_.end() && contamination_.test(it->second);
}

bool ModelBundle::mark_contaminated(int cluster_id, std::int64_t timestamp_ms, std::string reason) {
  auto it = position_.find(cluster_id);
  if (it == position_.end()) {
    throw Error(ErrorCode::UnknownCluster, "no cluster with id " + std::to_string(cluster_id));
  }
  return contamination_.set(it->second, {cluster_id, timestamp_ms, std::move(reason)});
}

void ModelBundle::set_weights(ScoreWeights weights, std::optional<double> fitted_auc) {
  weights.validate();
  weights_ = std::move(weights);
  fitted_auc_ = fitted_auc;
}

bool ModelBundle::operator==(const ModelBundle& o) const {
  return config_ == o.config_ && schema_ == o.schema_ && clusters() == o.clusters() &&
         profiles_ == o.profiles_ && index_ == o.index_ && frequencies_ == o.frequencies_ &&
         weights_ == o.weights_ && fitted_auc_ == o.fitted_auc_ &&
         contamination_log() == o.contamination_log();
}

void ModelBundle::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back("config.json", config_json(config_).dump(2) + "\n");
  files.emplace_back("clusters.json", clusters_json(clusters(), config_.clustering.cdist).dump() + "\n");
  {
    std::ostringstream out;
    save_profiles(out, profiles_, config_.profiles, schema_);
    files.emplace_back("profiles.json", out.str());
  }
  {
    std::ostringstream out;
    index_.save(out);
    files.emplace_back("ann.json", out.str());
  }
  {
    std::ostringstream out;
    frequencies_.save(out);
    files.emplace_back("frequencies.json", out.str());
  }
  files.emplace_back("weights.json", weights_json(weights_, fitted_auc_).dump(2) + "\n");
  {
    std::ostringstream out;
    for (const auto& r : contamination_log()) append_contamination(out, r);
    files.emplace_back("contamination.jsonl", out.str());
  }

  ordered_json manifest;
  manifest["format"] = "alertsieve.bundle";
  manifest["version"] = kVersion;
  auto components = ordered_json::array();
  for (const auto& [name, bytes] : files) {
    write_file_atomic(dir / name, bytes);
    components.push_back({{"file", name}, {"sha256", sha256_hex(bytes)}});
  }
  manifest["components"] = std::move(components);
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

ModelBundle ModelBundle::load(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw Error(ErrorCode::Io, "no model bundle in " + dir.string());
  }
  try {
    const auto manifest = json::parse(read_file(dir / "manifest.json"));
    if (manifest.at("format") != "alertsieve.bundle" || manifest.at("version") != kVersion) {
      throw Error(ErrorCode::BundleMismatch, "unsupported bundle version");
    }
    std::map<std::string, std::string> contents;
    for (const auto& c : manifest.at("components")) {
      const auto name = c.at("file").get<std::string>();
      if (name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
        throw Error(ErrorCode::BundleMismatch, "bad component name " + name);
      }
      auto bytes = read_file(dir / name);
      if (sha256_hex(bytes) != c.at("sha256").get<std::string>()) {
        throw Error(ErrorCode::BundleMismatch, name + " does not match its manifest hash");
      }
      contents.emplace(name, std::move(bytes));
    }
    auto component = [&](const std::string& name) -> const std::string& {
      auto it = contents.find(name);
      if (it == contents.end()) throw Error(ErrorCode::BundleMismatch, "bundle lacks " + name);
      return it->second;
    };

    auto config = config_from_json(json::parse(component("config.json")));

    const auto cj = json::parse(component("clusters.json"));
    expect_format(cj, "alertsieve.clusters");
    if (cj.at("cdist").get<int>() != config.clustering.cdist) {
      throw Error(ErrorCode::BundleMismatch, "clusters were built with a different cdist");
    }
    std::vector<Cluster> clusters;
    for (const auto& c : cj.at("clusters")) {
      Cluster cl;
      c.at("cluster_id").get_to(cl.cluster_id);
      cl.centroid = tlsh::parse_digest(c.at("centroid").get<std::string>());
      c.at("radius").get_to(cl.radius);
      c.at("member_count").get_to(cl.member_count);
      c.at("contaminated").get_to(cl.contaminated);
      clusters.push_back(cl);
    }

    std::istringstream profile_in(component("profiles.json"));
    auto loaded_profiles = load_profiles(profile_in);
    if (!(loaded_profiles.params == config.profiles)) {
      throw Error(ErrorCode::BundleMismatch, "profile parameters differ from the config");
    }
    FeatureSchema schema(loaded_profiles.feature_names);

    std::istringstream ann_in(component("ann.json"));
    auto index = AnnIndex::load(ann_in);
    if (!(index.params() == config.ann)) {
      throw Error(ErrorCode::BundleMismatch, "index parameters differ from the config");
    }

    std::istringstream freq_in(component("frequencies.json"));
    auto frequencies = FrequencyStore::load(freq_in);

    const auto wj = json::parse(component("weights.json"));
    expect_format(wj, "alertsieve.weights");
    ScoreWeights weights;
    wj.at("weights").get_to(weights.w);
    wj.at("decision_threshold").get_to(weights.decision_threshold);
    std::optional<double> auc;
    if (!wj.at("fitted_auc").is_null()) auc = wj.at("fitted_auc").get<double>();

    std::istringstream log_in(component("contamination.jsonl"));
    auto log = read_contamination_log(log_in);

    ModelBundle bundle(std::move(config), std::move(schema), std::move(clusters),
                       std::move(loaded_profiles.profiles), std::move(index), std::move(frequencies),
                       weights, auc);
    for (const auto& r : log) {
      if (!bundle.is_contaminated(r.cluster_id)) {
        throw Error(ErrorCode::BundleMismatch, "contamination log names a clean cluster");
      }
    }
    bundle.contamination_.restore_log(std::move(log));
    return bundle;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BundleMismatch, std::string("corrupt bundle: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io || e.code() == ErrorCode::BundleMismatch) throw;
    throw Error(ErrorCode::BundleMismatch, std::string("corrupt bundle: ") + e.what(), e.code());
  }
}

TrainResult train(std::span<const AlertRecord> alerts, const EngineConfig& config,
                  const FeatureSchema& schema, std::size_t workers) {
  config.validate();
  TrainReport report;
  report.alerts = alerts.size();

  std::vector<std::optional<PreparedAlert>> slots(alerts.size());
  parallel_for(alerts.size(), workers, [&](std::size_t i) {
    try {
      slots[i] = prepare(alerts[i]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UndigestibleAlert) throw;
    }
  });
  std::vector<PreparedAlert> prepared;
  prepared.reserve(alerts.size());
  for (auto& s : slots) {
    if (s) prepared.push_back(std::move(*s));
  }
  slots.clear();
  slots.shrink_to_fit();
  report.undigestible = alerts.size() - prepared.size();
  if (prepared.empty()) throw Error(ErrorCode::EmptyInput, "no digestible training alerts");

  std::vector<tlsh::Digest> digests;
  for (const auto& [d, n] : dedupe_digests(prepared)) digests.push_back(d);
  report.unique_digests = digests.size();
  auto model = hact_cluster(digests, config.clustering, workers);
  report.clusters = model.clusters.size();

  std::vector<int> cluster_ids(prepared.size());
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    cluster_ids[i] = *model.member_cluster(prepared[i].digest);
  }
  auto profiles = build_profiles(prepared, cluster_ids);
  for (const auto& [id, p] : profiles) report.supported_clusters += p.total_members >= config.profiles.min_support;

  auto index = AnnIndex::build(model.clusters, config.ann, workers);

  // Day by day: labeled alerts on a scoring route are looked up against the
  // store as it stood before their day, then the day is ingested.
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return prepared[a].source.timestamp_ms < prepared[b].source.timestamp_ms;
  });
  FrequencyStore store;
  std::vector<LabeledSample> samples;
  for (std::size_t begin = 0; begin < order.size();) {
    const auto day = FrequencyStore::day_of(prepared[order[begin]].source.timestamp_ms);
    std::size_t end = begin;
    std::vector<KeyedOccurrence> batch;
    while (end < order.size() &&
           FrequencyStore::day_of(prepared[order[end]].source.timestamp_ms) == day) {
      const auto& a = prepared[order[end]];
      batch.push_back({frequency_keys(a, cluster_ids[order[end]]), a.source.org_id,
                       a.source.device_id, a.source.timestamp_ms});
      ++end;
    }
    for (std::size_t i = begin; i < end; ++i) {
      const auto& a = prepared[order[i]];
      if (!a.source.label) continue;
      if (profiles.at(cluster_ids[order[i]]).total_members >= config.profiles.min_support) continue;
      const auto [fv, ctx] = store.lookup(batch[i - begin].keys, a.source.org_id, a.source.device_id);
      samples.push_back({fv, ctx, *a.source.label});
    }
    store.advance(day, batch);
    begin = end;
  }
  report.weight_samples = samples.size();

  ScoreWeights weights;
  weights.decision_threshold = config.decision_threshold;
  std::optional<double> fitted_auc;
  const bool both = std::any_of(samples.begin(), samples.end(),
                                [](const auto& s) { return s.label == Label::Malicious; }) &&
                    std::any_of(samples.begin(), samples.end(),
                                [](const auto& s) { return s.label == Label::False; });
  if (!config.fit_weights) {
    report.warnings.push_back("weight fitting disabled; uniform weights installed");
  } else if (!both) {
    report.warnings.push_back(std::string(to_string(ErrorCode::InsufficientLabeledData)) +
                              ": labeled scoring-route alerts lack one class; uniform weights installed");
  } else {
    auto fit = fit_weights(samples, config.decision_threshold, workers);
    weights = fit.weights;
    fitted_auc = fit.auc;
    report.fit = fit;
  }

  ModelBundle bundle(config, schema, std::move(model.clusters), std::move(profiles), std::move(index),
                     std::move(store), weights, fitted_auc);
  return {std::move(bundle), std::move(report)};
}

std::optional<int> locate(const ModelBundle& bundle, const PreparedAlert& alert) {
  const auto result = bundle.index().query(alert.digest, 1);
  if (result.neighbors.empty()) return std::nullopt;
  const auto& nearest = result.neighbors.front();
  const auto& params = bundle.config().clustering;
  const int limit = params.assign_by_radius ? bundle.find_cluster(nearest.cluster_id)->radius : params.cdist;
  if (nearest.distance > limit) return std::nullopt;
  return nearest.cluster_id;
}

std::vector<KeyedOccurrence> keyed_occurrences(const ModelBundle& bundle,
                                               std::span<const AlertRecord> alerts,
                                               std::size_t workers) {
  std::vector<std::optional<KeyedOccurrence>> slots(alerts.size());
  parallel_for(alerts.size(), workers, [&](std::size_t i) {
    try {
      const auto prepared = prepare(alerts[i]);
      slots[i] = KeyedOccurrence{frequency_keys(prepared, locate(bundle, prepared)), alerts[i].org_id,
                                 alerts[i].device_id, alerts[i].timestamp_ms};
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UndigestibleAlert) throw;
    }
  }, 16);
  std::vector<KeyedOccurrence> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  return out;
}

FrequencyStore updated_frequencies(const ModelBundle& bundle, std::span<const AlertRecord> alerts,
                                   std::size_t workers) {
  auto occurrences = keyed_occurrences(bundle, alerts, workers);
  std::stable_sort(occurrences.begin(), occurrences.end(),
                   [](const auto& a, const auto& b) { return a.timestamp_ms < b.timestamp_ms; });
  FrequencyStore store = bundle.frequencies();
  ingest_days(store, occurrences);
  return store;
}

std::vector<LabeledSample> weight_samples(const ModelBundle& bundle, std::span<const AlertRecord> alerts,
                                          std::size_t workers) {
  std::vector<std::optional<LabeledSample>> slots(alerts.size());
  const auto& config = bundle.config();
  parallel_for(alerts.size(), workers, [&](std::size_t i) {
    const auto& a = alerts[i];
    if (!a.label) return;
    std::optional<PreparedAlert> prepared;
    try {
      prepared = prepare(a);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UndigestibleAlert) throw;
      return;
    }
    const auto cluster_id = locate(bundle, *prepared);
    if (cluster_id && !bundle.is_contaminated(*cluster_id)) {
      auto p = bundle.profiles().find(*cluster_id);
      if (p != bundle.profiles().end() && p->second.total_members >= config.profiles.min_support) return;
    }
    const auto [fv, ctx] =
        bundle.frequencies().lookup(frequency_keys(*prepared, cluster_id), a.org_id, a.device_id);
    slots[i] = LabeledSample{fv, ctx, *a.label};
  }, 16);
  std::vector<LabeledSample> out;
  for (auto& s : slots) {
    if (s) out.push_back(*s);
  }
  return out;
}

std::vector<int> contaminate_from_feedback(ModelBundle& bundle, std::span<const AlertRecord> feedback,
                                           std::int64_t timestamp_ms, const std::string& reason) {
  std::vector<int> marked;
  for (const auto& a : feedback) {
    if (a.label != Label::Malicious) continue;
    std::optional<PreparedAlert> prepared;
    try {
      prepared = prepare(a);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UndigestibleAlert) throw;
      continue;
    }
    const auto cluster_id = locate(bundle, *prepared);
    if (cluster_id && bundle.mark_contaminated(*cluster_id, timestamp_ms, reason + " " + a.alert_id)) {
      marked.push_back(*cluster_id);
    }
  }
  std::sort(marked.begin(), marked.end());
  return marked;
}

TriageVerdict triage(const ModelBundle& bundle, const AlertRecord& alert, StageTimes* times) {
  const auto t0 = Clock::now();
  TriageVerdict v;
  std::optional<PreparedAlert> prepared;
  try {
    prepared = prepare(alert);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UndigestibleAlert) throw;
  }
  const auto t1 = Clock::now();
  auto t2 = t1;
  if (!prepared) {
    v = fail_open(alert.alert_id);
  } else {
    try {
      const auto& config = bundle.config();
      const auto cluster_id = locate(bundle, *prepared);
      t2 = Clock::now();

      v.alert_id = alert.alert_id;
      bool scored = true;
      if (cluster_id) {
        v.cluster_id = cluster_id;
        if (bundle.is_contaminated(*cluster_id)) {
          v.route = Route::ContaminatedScored;
        } else if (auto p = bundle.profiles().find(*cluster_id);
                   p != bundle.profiles().end() &&
                   p->second.total_members >= config.profiles.min_support) {
          auto report = check_outliers(*prepared, p->second, config.profiles, bundle.schema());
          scored = false;
          if (report.is_consistent()) {
            v.route = Route::ClusteredConsistent;
            v.decision = Decision::RemovedFromTriage;
          } else {
            v.route = Route::ClusteredOutlier;
            v.decision = Decision::RetainedForTriage;
            v.outlier_features = std::move(report.outlier_features);
          }
        } else {
          v.route = Route::UnclusteredScored;
        }
      } else {
        v.route = Route::UnclusteredScored;
      }
      if (scored) {
        const auto keys = frequency_keys(*prepared, v.cluster_id);
        const auto [fv, ctx] = bundle.frequencies().lookup(keys, alert.org_id, alert.device_id);
        const double s = score(fv, ctx, bundle.weights());
        v.anomaly_score = s;
        v.decision = s >= bundle.weights().decision_threshold ? Decision::RetainedForTriage
                                                              : Decision::RemovedFromTriage;
      }
    } catch (const Error&) {
      v = fail_open(alert.alert_id);
    }
  }
  const auto t3 = Clock::now();
  v.latency_micros = micros_between(t0, t3);
  if (times) *times = {micros_between(t0, t1), micros_between(t1, t2), micros_between(t2, t3)};
  return v;
}

std::vector<TriageVerdict> triage_batch(const ModelBundle& bundle, std::span<const AlertRecord> alerts,
                                        std::size_t workers) {
  std::vector<TriageVerdict> out(alerts.size());
  parallel_for(alerts.size(), workers, [&](std::size_t i) { out[i] = triage(bundle, alerts[i]); }, 16);
  return out;
}

StreamStats triage_stream(const ModelBundle& bundle, std::istream& in, std::ostream& out,
                          std::size_t workers) {
  const std::size_t batch_size = bundle.config().batch_size;
  BoundedQueue<std::vector<StreamItem>> queue(bundle.config().queue_batches);
  std::exception_ptr reader_error;

  const auto start = Clock::now();
  std::jthread reader([&] {
    try {
      AlertStreamReader reader(in, bundle.schema());
      std::vector<StreamItem> batch;
      while (auto item = reader.next()) {
        if (auto* record = std::get_if<AlertRecord>(&*item);
            record != nullptr && reader.schema() != bundle.schema()) {
          record->features = remap_features(record->features, reader.schema(), bundle.schema());
        }
        batch.push_back(std::move(*item));
        if (batch.size() == batch_size) {
          queue.push(std::move(batch));
          batch.clear();
        }
      }
      if (!batch.empty()) queue.push(std::move(batch));
    } catch (...) {
      reader_error = std::current_exception();
    }
    queue.close();
  });

  StreamStats stats;
  std::vector<std::int64_t> prepare_us, search_us, decide_us, total_us;
  while (auto batch = queue.pop()) {
    std::vector<std::string> lines(batch->size());
    std::vector<StageTimes> times(batch->size());
    std::vector<std::int64_t> totals(batch->size(), -1);
    parallel_for(batch->size(), workers, [&](std::size_t i) {
      const auto& item = (*batch)[i];
      if (const auto* bad = std::get_if<MalformedRecord>(&item)) {
        ordered_json j;
        j["line"] = bad->line_number;
        j["error"] = to_string(ErrorCode::MalformedRecord);
        j["reason"] = bad->reason;
        lines[i] = j.dump();
        return;
      }
      const auto verdict = triage(bundle, std::get<AlertRecord>(item), &times[i]);
      totals[i] = verdict.latency_micros;
      lines[i] = to_json_line(verdict);
    }, 8);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      out << lines[i] << '\n';
      if (totals[i] < 0) {
        ++stats.malformed;
        continue;
      }
      ++stats.alerts;
      prepare_us.push_back(times[i].prepare);
      search_us.push_back(times[i].search);
      decide_us.push_back(times[i].decide);
      total_us.push_back(totals[i]);
    }
  }
  reader.join();
  out.flush();
  if (reader_error) std::rethrow_exception(reader_error);

  stats.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  stats.alerts_per_second =
      stats.seconds > 0 ? static_cast<double>(stats.alerts + stats.malformed) / stats.seconds : 0.0;
  stats.prepare = summarize(std::move(prepare_us));
  stats.search = summarize(std::move(search_us));
  stats.decide = summarize(std::move(decide_us));
  stats.total = summarize(std::move(total_us));
  return stats;
}

std::string format_stream_stats(const StreamStats& s) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  out << "alerts\t" << s.alerts << "\nmalformed\t" << s.malformed << "\nseconds\t"
      << std::setprecision(3) << s.seconds << "\nalerts_per_second\t" << std::setprecision(1)
      << s.alerts_per_second << "\n";
  out << "stage\tp50_us\tp95_us\tp99_us\n";
  auto row = [&](const char* name, const LatencySummary& l) {
    out << name << '\t' << l.p50 << '\t' << l.p95 << '\t' << l.p99 << '\n';
  };
  row("prepare", s.prepare);
  row("search", s.search);
  row("decide", s.decide);
  row("total", s.total);
  return out.str();
}

}  // namespace alertsieve
