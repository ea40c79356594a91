#include "alertsieve/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "alertsieve/error.hpp"
#include "alertsieve/parallel.hpp"

namespace alertsieve {
namespace {

constexpr int kCapped = std::numeric_limits<int>::max();

struct Edge {
  std::uint32_t a;
  std::uint32_t b;
  int distance;
};

// All pairs within `threshold`, ordered by (distance, a, b) with a < b.
// TLSH distance breaks the triangle inequality, so metric-tree pruning would
// drop pairs; the scan is exhaustive and split across workers by row.
std::vector<Edge> candidate_edges(std::span<const tlsh::Digest> digests, int threshold,
                                  std::size_t workers) {
  const std::size_t n = digests.size();
  std::vector<std::vector<Edge>> rows(n);
  parallel_for(n, workers, [&](std::size_t i) {
    auto& row = rows[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      const int d = tlsh::distance(digests[i], digests[j]);
      if (d <= threshold) {
        row.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), d});
      }
    }
  }, 16);

  // Counting sort by distance keeps the (a, b) order within each bucket.
  std::vector<std::size_t> offsets(static_cast<std::size_t>(threshold) + 2, 0);
  for (const auto& row : rows) {
    for (const auto& e : row) ++offsets[static_cast<std::size_t>(e.distance) + 1];
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<Edge> edges(offsets.back());
  for (auto& row : rows) {
    for (const auto& e : row) edges[offsets[static_cast<std::size_t>(e.distance)]++] = e;
    std::vector<Edge>().swap(row);
  }
  return edges;
}

struct Group {
  std::vector<std::uint32_t> members;  // ascending
  std::vector<int> eccentricity;       // kCapped once above cdist
  std::uint64_t stamp = 0;             // unique per membership state
};

class Agglomerator {
public:
  Agglomerator(std::span<const tlsh::Digest> digests, int cdist)
      : digests_(digests), cdist_(cdist), parent_(digests.size()), groups_(digests.size()) {
    std::iota(parent_.begin(), parent_.end(), 0U);
    for (std::uint32_t i = 0; i < groups_.size(); ++i) {
      groups_[i].members = {i};
      groups_[i].eccentricity = {0};
      groups_[i].stamp = i;
    }
    next_stamp_ = digests.size();
  }

  void offer(const Edge& e) {
    const std::uint32_t ra = find(e.a);
    const std::uint32_t rb = find(e.b);
    if (ra == rb) return;
    auto& ga = groups_[ra];
    auto& gb = groups_[rb];
    const auto key = std::minmax(ga.stamp, gb.stamp);
    const auto packed = (key.first << 32) ^ key.second;
    if (rejected_.count(packed) != 0) return;

    auto ecc_a = extend(ga, gb);
    auto ecc_b = extend(gb, ga);
    const bool feasible =
        std::any_of(ecc_a.begin(), ecc_a.end(), [](int v) { return v != kCapped; }) ||
        std::any_of(ecc_b.begin(), ecc_b.end(), [](int v) { return v != kCapped; });
    if (!feasible) {
      rejected_.insert(packed);
      return;
    }

    Group merged;
    merged.members.reserve(ga.members.size() + gb.members.size());
    merged.eccentricity.reserve(merged.members.capacity());
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < ga.members.size() || j < gb.members.size()) {
      const bool take_a =
          j == gb.members.size() || (i < ga.members.size() && ga.members[i] < gb.members[j]);
      if (take_a) {
        merged.members.push_back(ga.members[i]);
        merged.eccentricity.push_back(ecc_a[i++]);
      } else {
        merged.members.push_back(gb.members[j]);
        merged.eccentricity.push_back(ecc_b[j++]);
      }
    }
    merged.stamp = next_stamp_++;

    const std::uint32_t root = std::min(ra, rb);
    const std::uint32_t other = std::max(ra, rb);
    parent_[other] = root;
    groups_[root] = std::move(merged);
    groups_[other] = Group{};
  }

  ClusterModel finish(std::span<const tlsh::Digest> digests) {
    ClusterModel model;
    model.digests.assign(digests.begin(), digests.end());
    model.cluster_of.assign(digests.size(), -1);
    // Roots are the smallest member of their group, so scanning indices in
    // order numbers clusters by their smallest rendering.
    for (std::uint32_t i = 0; i < parent_.size(); ++i) {
      if (find(i) != i) continue;
      const auto& g = groups_[i];
      std::size_t best = 0;
      for (std::size_t k = 1; k < g.members.size(); ++k) {
        if (g.eccentricity[k] < g.eccentricity[best]) best = k;
      }
      Cluster c;
      c.cluster_id = static_cast<int>(model.clusters.size());
      c.centroid = digests[g.members[best]];
      c.radius = g.eccentricity[best];
      c.member_count = g.members.size();
      for (auto m : g.members) model.cluster_of[m] = c.cluster_id;
      model.clusters.push_back(c);
    }
    return model;
  }

private:
  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Eccentricities of `self` members once `other` joins.
  std::vector<int> extend(const Group& self, const Group& other) const {
    std::vector<int> out(self.eccentricity);
    for (std::size_t k = 0; k < out.size(); ++k) {
      if (out[k] == kCapped) continue;
      const auto& x = digests_[self.members[k]];
      for (auto y : other.members) {
        const int d = tlsh::distance(x, digests_[y]);
        if (d > cdist_) {
          out[k] = kCapped;
          break;
        }
        out[k] = std::max(out[k], d);
      }
    }
    return out;
  }

  std::span<const tlsh::Digest> digests_;
  int cdist_;
  std::vector<std::uint32_t> parent_;
  std::vector<Group> groups_;
  std::unordered_set<std::uint64_t> rejected_;
  std::uint64_t next_stamp_ = 0;
};

std::vector<tlsh::Digest> unique_sorted(std::span<const tlsh::Digest> digests) {
  std::vector<tlsh::Digest> out(digests.begin(), digests.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ClusterModel agglomerate(std::span<const tlsh::Digest> sorted, std::span<const Edge> edges,
                         int cdist) {
  Agglomerator agg(sorted, cdist);
  for (const auto& e : edges) {
    if (e.distance > cdist) break;
    agg.offer(e);
  }
  return agg.finish(sorted);
}

double entropy_bits(std::vector<std::uint32_t>& codes) {
  if (codes.empty()) return 0.0;
  std::sort(codes.begin(), codes.end());
  const double total = static_cast<double>(codes.size());
  double h = 0.0;
  for (std::size_t i = 0; i < codes.size();) {
    std::size_t j = i;
    while (j < codes.size() && codes[j] == codes[i]) ++j;
    const double p = static_cast<double>(j - i) / total;
    h -= p * std::log2(p);
    i = j;
  }
  return h;
}

}  // namespace

void ClusterParams::validate() const {
  if (cdist <= 0) throw Error(ErrorCode::InvalidArgument, "cdist must be positive");
  if (sweep_begin <= 0 || sweep_step <= 0 || sweep_end < sweep_begin) {
    throw Error(ErrorCode::InvalidArgument, "sweep range must be positive and ascending");
  }
}

std::vector<int> ClusterParams::sweep_values() const {
  validate();
  std::vector<int> out;
  for (int c = sweep_begin; c <= sweep_end; c += sweep_step) out.push_back(c);
  return out;
}

std::optional<int> ClusterModel::member_cluster(const tlsh::Digest& d) const {
  auto it = std::lower_bound(digests.begin(), digests.end(), d);
  if (it == digests.end() || *it != d) return std::nullopt;
  return cluster_of[static_cast<std::size_t>(it - digests.begin())];
}

DigestCounts dedupe_digests(std::span<const PreparedAlert> alerts) {
  DigestCounts counts;
  for (const auto& a : alerts) ++counts[a.digest];
  return counts;
}

ClusterModel hact_cluster(std::span<const tlsh::Digest> digests, const ClusterParams& params,
                          std::size_t workers) {
  params.validate();
  if (digests.empty()) throw Error(ErrorCode::EmptyInput, "no digests to cluster");
  const auto sorted = unique_sorted(digests);
  const auto edges = candidate_edges(sorted, params.cdist, workers);
  return agglomerate(sorted, edges, params.cdist);
}

std::optional<int> assign(const tlsh::Digest& digest, std::span<const Cluster> clusters,
                          int threshold) {
  std::optional<int> best;
  int best_distance = kCapped;
  for (const auto& c : clusters) {
    const int d = tlsh::distance(digest, c.centroid);
    if (d < best_distance || (d == best_distance && best && c.cluster_id < *best)) {
      best_distance = d;
      best = c.cluster_id;
    }
  }
  if (!best || best_distance > threshold) return std::nullopt;
  return best;
}

std::optional<int> assign(const tlsh::Digest& digest, std::span<const Cluster> clusters,
                          const ClusterParams& params) {
  if (!params.assign_by_radius) return assign(digest, clusters, params.cdist);
  std::optional<int> best;
  int best_distance = kCapped;
  for (const auto& c : clusters) {
    const int d = tlsh::distance(digest, c.centroid);
    if (d > c.radius) continue;
    if (d < best_distance || (d == best_distance && c.cluster_id < *best)) {
      best_distance = d;
      best = c.cluster_id;
    }
  }
  return best;
}

void FeatureSource::add(const tlsh::Digest& digest, const SecurityFeatureSet& features) {
  Row row{};
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    auto& table = codes_[f];
    auto [it, inserted] =
        table.try_emplace(features[f], static_cast<std::uint32_t>(table.size()));
    row[f] = it->second;
  }
  rows_[digest].push_back(row);
}

void FeatureSource::add(std::span<const PreparedAlert> alerts) {
  for (const auto& a : alerts) add(a.digest, a.source.features);
}

const std::vector<FeatureSource::Row>* FeatureSource::rows(const tlsh::Digest& digest) const {
  auto it = rows_.find(digest);
  return it == rows_.end() ? nullptr : &it->second;
}

double mean_feature_entropy(const ClusterModel& model, const FeatureSource& features) {
  std::vector<std::vector<std::size_t>> members(model.clusters.size());
  for (std::size_t i = 0; i < model.digests.size(); ++i) {
    members[static_cast<std::size_t>(model.cluster_of[i])].push_back(i);
  }
  double weighted = 0.0;
  double weight = 0.0;
  std::vector<std::uint32_t> codes;
  for (std::size_t c = 0; c < members.size(); ++c) {
    std::vector<const std::vector<FeatureSource::Row>*> sources;
    for (auto i : members[c]) {
      if (const auto* r = features.rows(model.digests[i]); r != nullptr) sources.push_back(r);
    }
    if (sources.empty()) continue;
    double sum = 0.0;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      codes.clear();
      for (const auto* rows : sources) {
        for (const auto& row : *rows) codes.push_back(row[f]);
      }
      sum += entropy_bits(codes);
    }
    const double w = static_cast<double>(model.clusters[c].member_count);
    weighted += w * sum / static_cast<double>(kFeatureCount);
    weight += w;
  }
  return weight > 0.0 ? weighted / weight : 0.0;
}

std::vector<SweepPoint> sweep_cdist(std::span<const tlsh::Digest> digests,
                                    const FeatureSource& features, const ClusterParams& params,
                                    std::size_t workers) {
  const auto values = params.sweep_values();
  if (digests.empty()) throw Error(ErrorCode::EmptyInput, "no digests to sweep");
  const auto sorted = unique_sorted(digests);
  // One edge list at the widest threshold serves every sweep value.
  const auto edges = candidate_edges(sorted, values.back(), workers);

  std::vector<SweepPoint> points;
  for (int cdist : values) {
    const auto model = agglomerate(sorted, edges, cdist);
    SweepPoint p;
    p.cdist = cdist;
    p.n_clusters = model.clusters.size();
    p.mean_feature_entropy = mean_feature_entropy(model, features);
    points.push_back(p);
  }

  auto normalize = [&](auto get, auto set) {
    double lo = get(points.front());
    double hi = lo;
    for (const auto& p : points) {
      lo = std::min(lo, get(p));
      hi = std::max(hi, get(p));
    }
    for (auto& p : points) set(p, hi > lo ? (get(p) - lo) / (hi - lo) : 0.0);
  };
  normalize([](const SweepPoint& p) { return static_cast<double>(p.n_clusters); },
            [](SweepPoint& p, double v) { p.n_clusters_normalized = v; });
  normalize([](const SweepPoint& p) { return p.mean_feature_entropy; },
            [](SweepPoint& p, double v) { p.entropy_normalized = v; });
  return points;
}

std::string format_sweep(std::span<const SweepPoint> points) {
  std::ostringstream out;
  out << "cdist\tn_clusters\tmean_feature_entropy\tn_clusters_normalized\tentropy_normalized\n";
  out.precision(6);
  out << std::fixed;
  for (const auto& p : points) {
    out << p.cdist << '\t' << p.n_clusters << '\t' << p.mean_feature_entropy << '\t'
        << p.n_clusters_normalized << '\t' << p.entropy_normalized << '\n';
  }
  return out.str();
}

}  // namespace alertsieve
