#include "alertsieve/ann_index.hpp"

#include <algorithm>
#include <array>
#include <istream>
#include <ostream>
#include <queue>

#include <json.hpp>

#include "alertsieve/error.hpp"
#include "alertsieve/parallel.hpp"
#include "alertsieve/rng.hpp"

namespace alertsieve {
namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kFormatName = "alertsieve.ann";

thread_local std::uint64_t t_distance_count = 0;

struct Entry {
  int distance;
  std::uint32_t node;
  bool fresh;  // not yet used in a local join
};

bool closer(int da, std::uint32_t a, int db, std::uint32_t b) {
  return da != db ? da < db : a < b;
}

// Fixed-capacity neighbor list kept sorted by (distance, node).
class NeighborList {
public:
  explicit NeighborList(std::size_t capacity = 0) : capacity_(capacity) {
    entries_.reserve(capacity);
  }

  bool insert(int distance, std::uint32_t node) {
    if (entries_.size() == capacity_) {
      const auto& worst = entries_.back();
      if (!closer(distance, node, worst.distance, worst.node)) return false;
    }
    for (const auto& e : entries_) {
      if (e.node == node) return false;
    }
    auto pos = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) {
      return closer(distance, node, e.distance, e.node);
    });
    entries_.insert(pos, Entry{distance, node, true});
    if (entries_.size() > capacity_) entries_.pop_back();
    return true;
  }

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

private:
  std::size_t capacity_;
  std::vector<Entry> entries_;
};

// Keeps `limit` items of v chosen by a seeded partial shuffle, in index order.
void sample_in_place(std::vector<std::uint32_t>& v, std::size_t limit, Rng& rng) {
  if (v.size() <= limit) return;
  for (std::size_t i = 0; i < limit; ++i) std::swap(v[i], v[i + rng.below(v.size() - i)]);
  v.resize(limit);
  std::sort(v.begin(), v.end());
}

struct Proposal {
  std::uint32_t a;
  std::uint32_t b;
  int distance;
};

std::vector<std::uint32_t> pick_entries(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::uint32_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<std::uint32_t>(i);
  Rng rng(derive_seed(seed, 0xE27));
  count = std::min(count, n);
  for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.below(n - i)]);
  all.resize(count);
  return all;
}

constexpr std::size_t kLshBuckets = 8;
constexpr std::size_t kLshWindow = 8;

// Candidate neighbors from bit-sampling hashes of the bucket codes: per
// table, nodes are ordered by (key, node) and each node takes up to
// kLshWindow nodes on either side that share its key.
std::vector<std::vector<std::uint32_t>> lsh_candidates(const std::vector<AnnIndex::Node>& nodes,
                                                       std::size_t tables, std::uint64_t seed,
                                                       std::size_t workers) {
  const std::size_t n = nodes.size();
  std::vector<std::vector<std::uint32_t>> out(n);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> keyed(n);
  for (std::size_t t = 0; t < tables; ++t) {
    Rng rng(derive_seed(seed, 0x15B000 + t));
    std::array<std::size_t, kLshBuckets> picks{};
    for (auto& p : picks) p = rng.below(4 * tlsh::kBodyBytes);
    parallel_for(n, workers, [&](std::size_t i) {
      std::uint32_t key = 0;
      for (auto p : picks) key = (key << 2) | ((nodes[i].centroid.body_byte(p / 4) >> (2 * (p % 4))) & 3u);
      keyed[i] = {key, static_cast<std::uint32_t>(i)};
    }, 1024);
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t r = 0; r < n; ++r) {
      const auto [key, v] = keyed[r];
      for (std::size_t s = r + 1; s < n && s <= r + kLshWindow && keyed[s].first == key; ++s) {
        out[v].push_back(keyed[s].second);
        out[keyed[s].second].push_back(v);
      }
    }
  }
  parallel_for(n, workers, [&](std::size_t i) {
    std::sort(out[i].begin(), out[i].end());
    out[i].erase(std::unique(out[i].begin(), out[i].end()), out[i].end());
  }, 256);
  return out;
}

void sort_result(std::vector<Neighbor>& v) {
  std::sort(v.begin(), v.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.cluster_id < b.cluster_id;
  });
}

}  // namespace

void AnnParams::validate() const {
  if (k_build == 0) throw Error(ErrorCode::InvalidArgument, "k_build must be positive");
  if (!(sample_rate > 0.0 && sample_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "sample_rate must lie in (0, 1]");
  }
  if (!(convergence >= 0.0)) throw Error(ErrorCode::InvalidArgument, "convergence must be >= 0");
  if (entry_points == 0) throw Error(ErrorCode::InvalidArgument, "entry_points must be positive");
}

AnnIndex AnnIndex::build(std::span<const Cluster> clusters, const AnnParams& params,
                         std::size_t workers) {
  params.validate();
  if (clusters.empty()) throw Error(ErrorCode::EmptyIndex, "cannot index zero clusters");
  AnnIndex index;
  index.params_ = params;
  const std::size_t n = clusters.size();
  for (const auto& c : clusters) index.nodes_.push_back({c.cluster_id, c.centroid});
  const auto& nodes = index.nodes_;
  auto dist = [&](std::uint32_t a, std::uint32_t b) {
    return tlsh::distance(nodes[a].centroid, nodes[b].centroid);
  };

  const std::size_t k = std::min(params.k_build, n - 1);
  std::vector<NeighborList> lists(n, NeighborList(k));

  if (k > 0) {
    parallel_for(n, workers, [&](std::size_t i) {
      Rng rng(derive_seed(params.seed, i));
      auto& list = lists[i];
      while (list.entries().size() < k) {
        auto j = static_cast<std::uint32_t>(rng.below(n - 1));
        if (j >= i) ++j;
        list.insert(dist(static_cast<std::uint32_t>(i), j), j);
      }
    });
    if (params.lsh_tables > 0) {
      const auto candidates = lsh_candidates(nodes, params.lsh_tables, params.seed, workers);
      parallel_for(n, workers, [&](std::size_t i) {
        for (auto j : candidates[i]) lists[i].insert(dist(static_cast<std::uint32_t>(i), j), j);
      }, 64);
    }

    const auto sample_size =
        std::max<std::size_t>(1, static_cast<std::size_t>(params.sample_rate * static_cast<double>(k)));
    std::vector<std::vector<std::uint32_t>> fresh(n), stale(n);
    for (std::size_t iter = 0; iter < params.iterations; ++iter) {
      for (std::size_t v = 0; v < n; ++v) {
        fresh[v].clear();
        stale[v].clear();
        Rng rng(derive_seed(params.seed, (iter + 1) * 0x100000000ULL + v));
        std::vector<std::uint32_t> fresh_slots;
        auto& entries = lists[v].entries();
        for (std::uint32_t s = 0; s < entries.size(); ++s) {
          if (entries[s].fresh) {
            fresh_slots.push_back(s);
          } else {
            stale[v].push_back(entries[s].node);
          }
        }
        sample_in_place(fresh_slots, sample_size, rng);
        for (auto s : fresh_slots) {
          fresh[v].push_back(entries[s].node);
          entries[s].fresh = false;
        }
      }
      // Reverse neighbors, sampled the same way.
      std::vector<std::vector<std::uint32_t>> fresh_rev(n), stale_rev(n);
      for (std::uint32_t v = 0; v < n; ++v) {
        for (auto u : fresh[v]) fresh_rev[u].push_back(v);
        for (auto u : stale[v]) stale_rev[u].push_back(v);
      }
      for (std::size_t v = 0; v < n; ++v) {
        Rng rng(derive_seed(params.seed, (iter + 1) * 0x100000000ULL + n + v));
        sample_in_place(fresh_rev[v], sample_size, rng);
        sample_in_place(stale_rev[v], sample_size, rng);
        auto merge = [](std::vector<std::uint32_t>& into, const std::vector<std::uint32_t>& from) {
          into.insert(into.end(), from.begin(), from.end());
          std::sort(into.begin(), into.end());
          into.erase(std::unique(into.begin(), into.end()), into.end());
        };
        merge(fresh[v], fresh_rev[v]);
        merge(stale[v], stale_rev[v]);
      }

      // Local joins: distances computed in parallel per chunk of nodes,
      // updates applied in node order so the result ignores scheduling.
      std::size_t updates = 0;
      constexpr std::size_t kChunk = 1024;
      std::vector<std::vector<Proposal>> proposals(kChunk);
      for (std::size_t begin = 0; begin < n; begin += kChunk) {
        const std::size_t end = std::min(n, begin + kChunk);
        parallel_for(end - begin, workers, [&](std::size_t off) {
          const std::size_t v = begin + off;
          auto& out = proposals[off];
          out.clear();
          const auto& nf = fresh[v];
          const auto& ns = stale[v];
          for (std::size_t a = 0; a < nf.size(); ++a) {
            for (std::size_t b = a + 1; b < nf.size(); ++b) {
              out.push_back({nf[a], nf[b], dist(nf[a], nf[b])});
            }
            for (auto s : ns) {
              if (s != nf[a]) out.push_back({nf[a], s, dist(nf[a], s)});
            }
          }
        }, 8);
        for (std::size_t off = 0; off < end - begin; ++off) {
          for (const auto& p : proposals[off]) {
            updates += lists[p.a].insert(p.distance, p.b) ? 1 : 0;
            updates += lists[p.b].insert(p.distance, p.a) ? 1 : 0;
          }
        }
      }
      if (static_cast<double>(updates) < params.convergence * static_cast<double>(n * k)) break;
    }
  }

  index.graph_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& e : lists[i].entries()) index.graph_[i].push_back(e.node);
  }
  index.entries_ = pick_entries(n, params.entry_points, params.seed);
  index.derive_search_graph();
  return index;
}

void AnnIndex::derive_search_graph() {
  const std::size_t n = nodes_.size();
  exact_.clear();
  for (std::uint32_t v = 0; v < n; ++v) exact_.try_emplace(nodes_[v].centroid, v);
  std::vector<std::vector<std::pair<int, std::uint32_t>>> reverse(n);
  for (std::uint32_t v = 0; v < n; ++v) {
    for (auto u : graph_[v]) {
      reverse[u].push_back({tlsh::distance(nodes_[u].centroid, nodes_[v].centroid), v});
    }
  }
  // Forward and reverse edges, pruned so that a candidate closer to an
  // already kept neighbor than to v is skipped; skipped edges backfill up to
  // k_build. Keeps long links between otherwise isolated groups.
  search_graph_.assign(n, {});
  for (std::size_t v = 0; v < n; ++v) {
    auto& candidates = reverse[v];
    for (auto u : graph_[v]) {
      candidates.push_back({tlsh::distance(nodes_[u].centroid, nodes_[v].centroid), u});
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    auto& adj = search_graph_[v];
    std::vector<std::uint32_t> skipped;
    for (const auto& [d, u] : candidates) {
      if (adj.size() >= 2 * params_.k_build) break;
      const bool covered = std::any_of(adj.begin(), adj.end(), [&](std::uint32_t r) {
        return tlsh::distance(nodes_[u].centroid, nodes_[r].centroid) < d;
      });
      (covered ? skipped : adj).push_back(u);
    }
    for (auto u : skipped) {
      if (adj.size() >= params_.k_build) break;
      adj.push_back(u);
    }
  }
  // A node nobody links to could never be reached; hang it off its nearest
  // neighbor.
  std::vector<bool> linked(n, false);
  for (const auto& adj : search_graph_) {
    for (auto u : adj) linked[u] = true;
  }
  for (std::uint32_t v = 0; v < n; ++v) {
    if (!linked[v] && !graph_[v].empty()) search_graph_[graph_[v].front()].push_back(v);
  }
}

QueryResult AnnIndex::query(const tlsh::Digest& q, std::size_t k) const {
  QueryResult result;
  if (k == 0 || nodes_.empty()) return result;
  const std::size_t width = std::max(k, params_.queue_width == 0 ? 3 * k : params_.queue_width);

  std::vector<std::uint64_t> visited((nodes_.size() + 63) / 64, 0);
  auto mark = [&](std::uint32_t i) {
    auto& word = visited[i >> 6];
    const std::uint64_t bit = 1ULL << (i & 63);
    if (word & bit) return false;
    word |= bit;
    return true;
  };
  using Item = std::pair<int, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> frontier;  // nearest on top
  std::priority_queue<Item> best;                                         // farthest on top
  std::uint64_t evaluated = 0;
  auto consider = [&](std::uint32_t i) {
    if (!mark(i)) return;
    const int d = tlsh::distance(q, nodes_[i].centroid);
    ++evaluated;
    const Item item{d, i};
    if (best.size() < width || item < best.top()) {
      frontier.push(item);
      best.push(item);
      if (best.size() > width) best.pop();
    }
  };
  if (auto it = exact_.find(q); it != exact_.end()) consider(it->second);
  for (auto e : entries_) consider(e);
  while (!frontier.empty()) {
    const Item current = frontier.top();
    frontier.pop();
    if (best.size() >= width && best.top() < current) break;
    for (auto u : search_graph_[current.second]) consider(u);
  }
  t_distance_count += evaluated;

  std::vector<Neighbor> found;
  while (!best.empty()) {
    found.push_back({nodes_[best.top().second].cluster_id, best.top().first});
    best.pop();
  }
  sort_result(found);
  if (found.size() > k) found.resize(k);
  result.neighbors = std::move(found);
  return result;
}

std::vector<QueryResult> AnnIndex::query_batch(std::span<const tlsh::Digest> queries,
                                               std::size_t k, std::size_t workers) const {
  std::vector<QueryResult> out(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) { out[i] = query(queries[i], k); }, 16);
  return out;
}

std::uint64_t AnnIndex::thread_distance_count() noexcept { return t_distance_count; }

AnnIndex AnnIndex::with_queue_width(std::size_t width) const {
  AnnIndex copy = *this;
  copy.params_.queue_width = width;
  return copy;
}

void AnnIndex::save(std::ostream& out) const {
  nlohmann::ordered_json j;
  j["format"] = kFormatName;
  j["version"] = kFormatVersion;
  j["params"] = {{"k_build", params_.k_build},
                 {"iterations", params_.iterations},
                 {"sample_rate", params_.sample_rate},
                 {"convergence", params_.convergence},
                 {"queue_width", params_.queue_width},
                 {"entry_points", params_.entry_points},
                 {"lsh_tables", params_.lsh_tables},
                 {"seed", params_.seed}};
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& n : nodes_) nodes.push_back({n.cluster_id, n.centroid.render()});
  j["nodes"] = std::move(nodes);
  j["graph"] = graph_;
  j["entry_points"] = entries_;
  out << j.dump() << '\n';
}

AnnIndex AnnIndex::load(std::istream& in) {
  AnnIndex index;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != kFormatName || j.at("version") != kFormatVersion) {
      throw Error(ErrorCode::BundleMismatch, "unsupported ANN index format");
    }
    const auto& p = j.at("params");
    p.at("k_build").get_to(index.params_.k_build);
    p.at("iterations").get_to(index.params_.iterations);
    p.at("sample_rate").get_to(index.params_.sample_rate);
    p.at("convergence").get_to(index.params_.convergence);
    p.at("queue_width").get_to(index.params_.queue_width);
    p.at("entry_points").get_to(index.params_.entry_points);
    p.at("lsh_tables").get_to(index.params_.lsh_tables);
    p.at("seed").get_to(index.params_.seed);
    for (const auto& n : j.at("nodes")) {
      index.nodes_.push_back({n.at(0).get<int>(), tlsh::parse_digest(n.at(1).get<std::string>())});
    }
    j.at("graph").get_to(index.graph_);
    j.at("entry_points").get_to(index.entries_);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BundleMismatch, std::string("corrupt ANN index: ") + e.what());
  }
  const std::size_t n = index.nodes_.size();
  bool ok = n > 0 && index.graph_.size() == n && !index.entries_.empty();
  for (const auto& adj : index.graph_) {
    ok = ok && adj.size() <= index.params_.k_build;
    for (auto u : adj) ok = ok && u < n;
  }
  for (auto e : index.entries_) ok = ok && e < n;
  if (!ok) throw Error(ErrorCode::BundleMismatch, "ANN index references invalid nodes");
  index.derive_search_graph();
  return index;
}

QueryResult linear_search(std::span<const Cluster> clusters, const tlsh::Digest& q, std::size_t k) {
  std::vector<Neighbor> all;
  all.reserve(clusters.size());
  for (const auto& c : clusters) all.push_back({c.cluster_id, tlsh::distance(q, c.centroid)});
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.distance != b.distance ? a.distance < b.distance
                                                      : a.cluster_id < b.cluster_id;
                    });
  // Copy out so the result does not keep the full scan's capacity.
  return QueryResult{std::vector<Neighbor>(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep))};
}

double measure_recall(const AnnIndex& index, std::span<const Cluster> clusters,
                      std::span<const tlsh::Digest> queries, std::size_t k, std::size_t workers) {
  if (queries.empty()) throw Error(ErrorCode::InvalidArgument, "recall needs at least one query");
  const auto approx = index.query_batch(queries, k, workers);
  std::vector<double> per_query(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) {
    const auto exact = linear_search(clusters, queries[i], k);
    if (exact.neighbors.empty()) {
      per_query[i] = 1.0;
      return;
    }
    // Any node tied with the exact k-th distance is an equally valid answer,
    // so a hit is an ANN result no farther than that distance.
    const int kth = exact.neighbors.back().distance;
    std::size_t hits = 0;
    for (const auto& a : approx[i].neighbors) hits += a.distance <= kth ? 1 : 0;
    per_query[i] = static_cast<double>(std::min(hits, exact.neighbors.size())) /
                   static_cast<double>(exact.neighbors.size());
  }, 16);
  double sum = 0.0;
  for (double r : per_query) sum += r;
  return sum / static_cast<double>(per_query.size());
}

}  // namespace alertsieve
