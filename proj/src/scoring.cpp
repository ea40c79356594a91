#include "alertsieve/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "alertsieve/error.hpp"
#include "alertsieve/parallel.hpp"

namespace alertsieve {
namespace {

constexpr const char* kStoreFormat = "alertsieve.frequencies";
constexpr int kStoreVersion = 1;
constexpr char kSep = '\x1f';

std::string join(const std::string& a, const std::string& b) {
  std::string out;
  out.reserve(a.size() + b.size() + 1);
  out += a;
  out += kSep;
  out += b;
  return out;
}

std::string join(const std::string& a, const std::string& b, const std::string& c) {
  return join(join(a, b), c);
}

std::uint64_t get(const std::unordered_map<std::string, std::uint64_t>& table,
                  const std::string& key) {
  auto it = table.find(key);
  return it == table.end() ? 0 : it->second;
}

// Adds delta to a cell, erasing it at zero. Returns (old, new).
std::pair<std::uint64_t, std::uint64_t> bump(std::unordered_map<std::string, std::uint64_t>& table,
                                             const std::string& key, std::int64_t delta) {
  auto& cell = table[key];
  const std::uint64_t before = cell;
  cell = static_cast<std::uint64_t>(static_cast<std::int64_t>(cell) + delta);
  const std::uint64_t after = cell;
  if (after == 0) table.erase(key);
  return {before, after};
}

// Weights are held in integer units of 1/300 so the uniform point (50 each)
// and both step sizes (15 and 3) are exact.
constexpr int kUnits = 300;
using Units = std::array<int, kScopeCount>;

}  // namespace

void ScoreWeights::validate() const {
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw Error(ErrorCode::InvalidArgument, "weights must be finite and non-negative");
    }
    sum += x;
  }
  if (!(sum > 0.0)) throw Error(ErrorCode::InvalidArgument, "weights sum to zero");
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "decision threshold must lie in (0, 1)");
  }
}

ScoreWeights ScoreWeights::normalized() const {
  validate();
  ScoreWeights out = *this;
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : out.w) x /= sum;
  return out;
}

double transform_frequency(double f) {
  if (!(f >= 0.0)) throw Error(ErrorCode::InvalidArgument, "frequency must be non-negative");
  return 1.0 / (1.0 + std::log1p(f));
}

std::array<double, kScopeCount> scaling_factors(const ScalingContext& ctx) {
  if (ctx.devices_with_alert < 1 || ctx.devices_with_alert > ctx.devices_in_org ||
      ctx.orgs_with_alert < 1 || ctx.orgs_with_alert > ctx.orgs_total) {
    throw Error(ErrorCode::DegenerateContext, "scaling context violates 1 <= n_o <= n_od or 1 <= n_g <= n_go");
  }
  const double org = std::log(static_cast<double>(ctx.devices_in_org) /
                              static_cast<double>(ctx.devices_with_alert));
  const double global =
      std::log(static_cast<double>(ctx.orgs_total) / static_cast<double>(ctx.orgs_with_alert));
  return {1.0, 1.0, org, org, global, global};
}

std::array<double, kScopeCount> score_terms(const FrequencyVector& fv, const ScalingContext& ctx) {
  const auto s = scaling_factors(ctx);
  std::array<double, kScopeCount> out{};
  for (std::size_t i = 0; i < kScopeCount; ++i) {
    out[i] = transform_frequency(static_cast<double>(fv.f[i])) * s[i];
  }
  return out;
}

double score(const FrequencyVector& fv, const ScalingContext& ctx, const ScoreWeights& weights) {
  const auto terms = score_terms(fv, ctx);
  double total = 0.0;
  for (std::size_t i = 0; i < kScopeCount; ++i) total += weights.w[i] * terms[i];
  return total;
}

double roc_auc(std::span<const ScoredLabel> scored) {
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scored[a].score < scored[b].score; });
  // Twice the rank sum of the positives, so tied half-ranks stay integral.
  std::uint64_t twice_rank_sum = 0;
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t tied_positives = 0;
    while (j < order.size() && scored[order[j]].score == scored[order[i]].score) {
      tied_positives += scored[order[j]].label == Label::Malicious;
      ++j;
    }
    // Ranks i+1..j average to (i+1+j)/2.
    twice_rank_sum += tied_positives * (i + 1 + j);
    positives += tied_positives;
    i = j;
  }
  const std::uint64_t negatives = scored.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::SingleClassData, "AUC needs both malicious and false labels");
  }
  const double u = static_cast<double>(twice_rank_sum) / 2.0 -
                   static_cast<double>(positives) * static_cast<double>(positives + 1) / 2.0;
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

WeightFit fit_weights(std::span<const LabeledSample> samples, double decision_threshold,
                      std::size_t workers) {
  std::vector<std::array<double, kScopeCount>> terms;
  terms.reserve(samples.size());
  bool any_positive = false, any_negative = false;
  for (const auto& s : samples) {
    terms.push_back(score_terms(s.fv, s.ctx));
    (s.label == Label::Malicious ? any_positive : any_negative) = true;
  }
  if (!any_positive || !any_negative) {
    throw Error(ErrorCode::SingleClassData, "weight fitting needs both labels");
  }

  std::map<Units, double> seen;
  auto auc_of = [&](const Units& u) {
    std::vector<ScoredLabel> scored(samples.size());
    for (std::size_t n = 0; n < samples.size(); ++n) {
      double total = 0.0;
      for (std::size_t i = 0; i < kScopeCount; ++i) total += u[i] * terms[n][i];
      scored[n] = {total / kUnits, samples[n].label};
    }
    return roc_auc(scored);
  };
  auto evaluate = [&](const std::vector<Units>& batch) {
    std::vector<Units> fresh;
    for (const auto& u : batch) {
      if (!seen.contains(u)) fresh.push_back(u);
    }
    std::sort(fresh.begin(), fresh.end());
    fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
    std::vector<double> results(fresh.size());
    parallel_for(fresh.size(), workers, [&](std::size_t i) { results[i] = auc_of(fresh[i]); }, 1);
    for (std::size_t i = 0; i < fresh.size(); ++i) seen.emplace(fresh[i], results[i]);
  };
  // Higher AUC first, then the lexicographically smaller weights.
  auto better = [&](const Units& a, const Units& b) {
    const double x = seen.at(a), y = seen.at(b);
    return x != y ? x > y : a < b;
  };
  auto ascend = [&](Units current, int step) {
    for (;;) {
      std::vector<Units> moves;
      for (std::size_t from = 0; from < kScopeCount; ++from) {
        if (current[from] < step) continue;
        for (std::size_t to = 0; to < kScopeCount; ++to) {
          if (to == from) continue;
          Units next = current;
          next[from] -= step;
          next[to] += step;
          moves.push_back(next);
        }
      }
      evaluate(moves);
      Units best = current;
      for (const auto& m : moves) {
        if (better(m, best)) best = m;
      }
      if (seen.at(best) <= seen.at(current)) return current;
      current = best;
    }
  };

  const Units uniform{50, 50, 50, 50, 50, 50};
  std::vector<Units> starts{uniform};
  for (std::size_t i = 0; i < kScopeCount; ++i) {
    Units vertex{};
    vertex[i] = kUnits;
    starts.push_back(vertex);
  }
  evaluate(starts);
  Units best = uniform;
  for (const auto& start : starts) {
    const Units found = ascend(ascend(start, 15), 3);
    if (better(found, best)) best = found;
  }

  WeightFit fit;
  for (std::size_t i = 0; i < kScopeCount; ++i) {
    fit.weights.w[i] = static_cast<double>(best[i]) / kUnits;
  }
  fit.weights.decision_threshold = decision_threshold;
  fit.weights.validate();
  fit.auc = seen.at(best);
  fit.uniform_auc = seen.at(uniform);
  fit.candidates_evaluated = seen.size();
  return fit;
}

FrequencyKeys frequency_keys(const PreparedAlert& alert, std::optional<int> cluster_id) {
  FrequencyKeys keys;
  keys.command = cluster_id ? "c:" + std::to_string(*cluster_id) : "d:" + alert.digest.render();
  keys.path = alert.parent_child_path;
  return keys;
}

std::int64_t FrequencyStore::day_of(std::int64_t timestamp_ms) noexcept {
  std::int64_t day = timestamp_ms / kDayMs;
  if (timestamp_ms % kDayMs < 0) --day;
  return day;
}

void FrequencyStore::apply(const Day& day, int sign) {
  for (const auto& [cell, n] : day.cells) {
    const auto& [command, path, org, device] = cell;
    const auto delta = static_cast<std::int64_t>(n) * sign;
    const auto command_org = join(command, org);
    const auto [device_before, device_after] = bump(window_[0], join(command, org, device), delta);
    if ((device_before == 0) != (device_after == 0)) {
      bump(devices_with_command_, command_org, device_after == 0 ? -1 : 1);
    }
    bump(window_[1], join(path, org, device), delta);
    const auto [org_before, org_after] = bump(window_[2], command_org, delta);
    if ((org_before == 0) != (org_after == 0)) {
      bump(orgs_with_command_, command, org_after == 0 ? -1 : 1);
    }
    bump(window_[3], join(path, org), delta);
    bump(window_[4], command, delta);
    bump(window_[5], path, delta);
  }
}

void FrequencyStore::rebuild() {
  for (auto& t : window_) t.clear();
  devices_with_command_.clear();
  orgs_with_command_.clear();
  for (const auto& d : days_) apply(d, 1);
}

void FrequencyStore::advance(std::int64_t day, std::span<const KeyedOccurrence> batch) {
  if (!empty() && day < end_day_) {
    throw Error(ErrorCode::OutOfOrderBatch,
                "day " + std::to_string(day) + " precedes the window end " + std::to_string(end_day_));
  }
  Day fresh;
  fresh.day = day;
  for (const auto& o : batch) {
    if (day_of(o.timestamp_ms) != day) {
      throw Error(ErrorCode::InvalidArgument, "occurrence timestamp lies outside the batch day");
    }
    ++fresh.cells[{o.keys.command, o.keys.path, o.org_id, o.device_id}];
  }
  for (const auto& o : batch) fleet_[o.org_id].insert(o.device_id);
  while (!days_.empty() && days_.front().day <= day - kWindowDays) {
    apply(days_.front(), -1);
    days_.pop_front();
  }
  apply(fresh, 1);
  days_.push_back(std::move(fresh));
  end_day_ = day + 1;
}

FrequencyStore FrequencyStore::advanced(std::int64_t day,
                                        std::span<const KeyedOccurrence> batch) const {
  FrequencyStore next = *this;
  next.advance(day, batch);
  return next;
}

std::uint64_t FrequencyStore::count(std::size_t scope, const FrequencyKeys& keys,
                                    const std::string& org_id,
                                    const std::string& device_id) const {
  switch (scope) {
    case 0: return get(window_[0], join(keys.command, org_id, device_id));
    case 1: return get(window_[1], join(keys.path, org_id, device_id));
    case 2: return get(window_[2], join(keys.command, org_id));
    case 3: return get(window_[3], join(keys.path, org_id));
    case 4: return get(window_[4], keys.command);
    case 5: return get(window_[5], keys.path);
    default: throw Error(ErrorCode::InvalidArgument, "scope out of range");
  }
}

std::pair<FrequencyVector, ScalingContext> FrequencyStore::lookup(
    const FrequencyKeys& keys, const std::string& org_id, const std::string& device_id) const {
  FrequencyVector fv;
  for (std::size_t s = 0; s < kScopeCount; ++s) fv.f[s] = count(s, keys, org_id, device_id);

  // The alert being scored counts as an occurrence on its own device and org.
  ScalingContext ctx;
  ctx.devices_with_alert = get(devices_with_command_, join(keys.command, org_id)) + (fv.f[0] == 0);
  ctx.orgs_with_alert = get(orgs_with_command_, keys.command) + (fv.f[2] == 0);
  auto org = fleet_.find(org_id);
  ctx.devices_in_org = org == fleet_.end() ? 1 : org->second.size() + !org->second.contains(device_id);
  ctx.orgs_total = fleet_.size() + (org == fleet_.end());
  return {fv, ctx};
}

void FrequencyStore::save(std::ostream& out) const {
  nlohmann::ordered_json j;
  j["format"] = kStoreFormat;
  j["version"] = kStoreVersion;
  j["window_days"] = kWindowDays;
  j["window_end_day"] = empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(end_day_);
  auto days = nlohmann::ordered_json::array();
  for (const auto& d : days_) {
    nlohmann::ordered_json entry;
    entry["day"] = d.day;
    auto cells = nlohmann::ordered_json::array();
    for (const auto& [cell, n] : d.cells) cells.push_back({cell[0], cell[1], cell[2], cell[3], n});
    entry["cells"] = std::move(cells);
    days.push_back(std::move(entry));
  }
  j["days"] = std::move(days);
  nlohmann::ordered_json fleet = nlohmann::ordered_json::object();
  for (const auto& [org, devices] : fleet_) fleet[org] = devices;
  j["fleet"] = std::move(fleet);
  out << j.dump() << '\n';
}

FrequencyStore FrequencyStore::load(std::istream& in) {
  FrequencyStore store;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != kStoreFormat || j.at("version") != kStoreVersion ||
        j.at("window_days") != kWindowDays) {
      throw Error(ErrorCode::BundleMismatch, "unsupported frequency store format");
    }
    if (!j.at("window_end_day").is_null()) store.end_day_ = j.at("window_end_day").get<std::int64_t>();
    for (const auto& entry : j.at("days")) {
      Day d;
      entry.at("day").get_to(d.day);
      if (store.empty() || d.day >= store.end_day_ || d.day < store.end_day_ - kWindowDays ||
          (!store.days_.empty() && d.day <= store.days_.back().day)) {
        throw Error(ErrorCode::BundleMismatch, "frequency store day outside its window");
      }
      for (const auto& c : entry.at("cells")) {
        d.cells[{c.at(0).get<std::string>(), c.at(1).get<std::string>(), c.at(2).get<std::string>(),
                 c.at(3).get<std::string>()}] = c.at(4).get<std::uint64_t>();
      }
      store.days_.push_back(std::move(d));
    }
    for (const auto& [org, devices] : j.at("fleet").items()) {
      store.fleet_[org] = devices.get<std::set<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BundleMismatch, std::string("corrupt frequency store: ") + e.what());
  }
  store.rebuild();
  return store;
}

void ingest_days(FrequencyStore& store, std::span<const KeyedOccurrence> occurrences) {
  if (occurrences.empty()) return;
  std::vector<std::size_t> order(occurrences.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return occurrences[a].timestamp_ms < occurrences[b].timestamp_ms;
  });
  const auto first = FrequencyStore::day_of(occurrences[order.front()].timestamp_ms);
  const auto last = FrequencyStore::day_of(occurrences[order.back()].timestamp_ms);
  std::size_t next = 0;
  for (auto day = first; day <= last; ++day) {
    std::vector<KeyedOccurrence> batch;
    while (next < order.size() && FrequencyStore::day_of(occurrences[order[next]].timestamp_ms) == day) {
      batch.push_back(occurrences[order[next++]]);
    }
    store.advance(day, batch);
  }
}

}  // namespace alertsieve
