#include "alertsieve/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "alertsieve/error.hpp"
#include "alertsieve/rng.hpp"

namespace alertsieve {
namespace {

const std::vector<std::string> kSyllables = {
    "ab", "ac", "al", "an", "ar", "ba", "be", "bo", "ca", "ce", "co", "da", "de", "di",
    "do", "el", "en", "er", "ex", "fa", "fi", "ga", "ge", "ha", "he", "in", "is", "ka",
    "ko", "la", "le", "li", "lo", "ma", "me", "mi", "mo", "na", "ne", "no", "or", "pa",
    "pe", "po", "ra", "re", "ri", "ro", "sa", "se", "si", "so", "ta", "te", "ti", "to",
    "un", "up", "va", "ve", "vi", "wa", "we", "xa", "yo", "za", "zu", "qu", "sh", "th"};

const std::vector<std::string> kSystemBinaries = {
    "cmd.exe",      "powershell.exe", "rundll32.exe", "regsvr32.exe", "schtasks.exe",
    "reg.exe",      "wmic.exe",       "msiexec.exe",  "net.exe",      "sc.exe",
    "certutil.exe", "mshta.exe",      "cscript.exe",  "wscript.exe",  "bitsadmin.exe",
    "svchost.exe",  "taskkill.exe",   "netsh.exe",    "conhost.exe",  "explorer.exe"};

const std::vector<std::string> kParents = {
    R"(C:\Windows\explorer.exe)",
    R"(C:\Windows\System32\services.exe)",
    R"(C:\Windows\System32\svchost.exe)",
    R"(C:\Windows\System32\cmd.exe)",
    R"(C:\Windows\System32\WindowsPowerShell\v1.0\powershell.exe)",
    R"(C:\Windows\System32\taskeng.exe)",
    R"(C:\Windows\System32\wbem\WmiPrvSE.exe)",
    "/usr/sbin/cron",
    "/bin/bash",
    "/usr/lib/systemd/systemd"};

std::string word(Rng& rng, std::size_t min_syllables = 2, std::size_t max_syllables = 4) {
  const std::size_t n = min_syllables + rng.below(max_syllables - min_syllables + 1);
  std::string w;
  for (std::size_t i = 0; i < n; ++i) w += rng.pick(kSyllables);
  return w;
}

std::string capitalized(Rng& rng) {
  auto w = word(rng);
  w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

std::string hex(Rng& rng, std::size_t n) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += kHex[rng.below(16)];
  return s;
}

std::string number(Rng& rng) { return std::to_string(rng.below(100000)); }

enum class TokenKind { Flag, Option, Path, Url, Number, Guid, Quoted };

std::string token(Rng& rng, TokenKind kind, bool windows) {
  switch (kind) {
    case TokenKind::Flag:
      return (windows ? (rng.chance(0.5) ? "/" : "-") : "--") + word(rng, 1, 3);
    case TokenKind::Option:
      return "--" + word(rng, 1, 3) + "=" + word(rng, 1, 3);
    case TokenKind::Path:
      if (windows) {
        return R"(C:\Users\)" + word(rng, 2, 3) + R"(\AppData\Local\)" + capitalized(rng) +
               "\\" + word(rng) + (rng.chance(0.5) ? ".dat" : ".log");
      }
      return "/var/lib/" + word(rng) + "/" + word(rng) + ".conf";
    case TokenKind::Url:
      return "https://" + word(rng) + "." + word(rng, 1, 2) + ".com/" + word(rng) + "/" +
             word(rng);
    case TokenKind::Number:
      return number(rng);
    case TokenKind::Guid:
      return "{" + hex(rng, 8) + "-" + hex(rng, 4) + "-" + hex(rng, 4) + "-" + hex(rng, 4) +
             "-" + hex(rng, 12) + "}";
    case TokenKind::Quoted:
      return "\"" + word(rng) + " " + word(rng) + "\"";
  }
  return {};
}

TokenKind random_kind(Rng& rng) {
  return static_cast<TokenKind>(rng.below(7));
}

struct FamilyBase {
  bool windows = true;
  std::string process_path;
  std::string parent_path;
  std::vector<std::string> args;
};

FamilyBase make_family(Rng& rng) {
  FamilyBase f;
  f.windows = rng.chance(0.8);
  if (f.windows) {
    if (rng.chance(0.5)) {
      f.process_path = R"(C:\Windows\System32\)" + rng.pick(kSystemBinaries);
    } else {
      f.process_path = R"(C:\Program Files\)" + capitalized(rng) + "\\" + capitalized(rng) +
                       "\\" + word(rng) + ".exe";
    }
  } else {
    f.process_path = (rng.chance(0.5) ? "/usr/bin/" : "/opt/" + word(rng) + "/bin/") + word(rng);
  }
  f.parent_path = rng.pick(kParents);
  const std::size_t n_args = 12 + rng.below(10);
  for (std::size_t i = 0; i < n_args; ++i) f.args.push_back(token(rng, random_kind(rng), f.windows));
  return f;
}

std::string join_command(const std::string& exe, const std::vector<std::string>& args) {
  std::string out = exe.find(' ') != std::string::npos ? "\"" + exe + "\"" : exe;
  for (const auto& a : args) {
    out += ' ';
    out += a;
  }
  return out;
}

// Named features get plausible value pools; the rest use generic codes.
std::vector<std::string> value_pool(std::size_t feature, const CommandTemplate& t, Rng& rng) {
  switch (feature) {
    case 0: return {"T1059", "T1053", "T1218", "T1047", "T1105", "T1112", "T1569", "none"};
    case 1:
    case 6: return {"trusted", "common", "unknown", "rare", "suspicious"};
    case 2:
    case 7: return {"none", "uac_bypass", "token_duplication", "elevated"};
    case 3:
    case 8: return {"signed_valid", "unsigned", "signed_invalid", "signed_expired"};
    case 4: return {t.process_path, t.process_path + ".bak", "C:\\Temp\\" + word(rng) + ".exe"};
    case 9: return {t.parent_path, "C:\\Windows\\System32\\userinit.exe", "/sbin/init"};
    case 5:
    case 10: return {"SYSTEM", "LOCAL SERVICE", "NETWORK SERVICE", "admin", "user"};
    default: {
      std::vector<std::string> pool;
      for (int i = 0; i < 8; ++i) pool.push_back("c" + std::to_string(feature) + "_" + std::to_string(i));
      return pool;
    }
  }
}

struct FeatureProfile {
  std::array<std::string, kFeatureCount> dominant;
  std::array<std::vector<std::string>, kFeatureCount> alternates;
};

FeatureProfile make_feature_profile(const CommandTemplate& t, std::size_t n_alternates, Rng& rng) {
  FeatureProfile p;
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    auto pool = value_pool(f, t, rng);
    // Partial Fisher-Yates: dominant first, then alternates.
    const std::size_t take = std::min(pool.size(), n_alternates + 1);
    for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    if (f == 4) std::swap(pool[0], *std::find(pool.begin(), pool.end(), t.process_path));
    if (f == 9) std::swap(pool[0], *std::find(pool.begin(), pool.end(), t.parent_path));
    p.dominant[f] = pool[0];
    p.alternates[f].assign(pool.begin() + 1, pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return p;
}

struct Footprint {
  std::vector<std::size_t> orgs;
  std::size_t devices = 1;  // per org
  std::size_t offset = 0;
};

std::string org_name(std::size_t o) {
  auto digits = std::to_string(o);
  return "org" + std::string(3 - std::min<std::size_t>(3, digits.size()), '0') + digits;
}

std::string device_name(std::size_t o, std::size_t d) {
  return org_name(o) + "-dev" + std::string(4 - std::min<std::size_t>(4, std::to_string(d).size()), '0') +
         std::to_string(d);
}

nlohmann::ordered_json truth_json(const TruthRecord& t) {
  nlohmann::ordered_json j;
  j["alert_id"] = t.alert_id;
  j["template_id"] = t.template_id;
  j["anomaly"] = to_string(t.anomaly);
  if (!t.planted_feature.empty()) j["planted_feature"] = t.planted_feature;
  j["expected_route"] = t.expected_route;
  return j;
}

}  // namespace

void GeneratorSpec::validate() const {
  auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidSpec, why); };
  if (n_templates == 0) bad("n_templates must be positive");
  if (templates_per_family == 0) bad("templates_per_family must be positive");
  if (n_orgs == 0 || devices_per_org == 0) bad("fleet must have at least one device");
  if (days <= 0) bad("days must be positive");
  if (start_ms <= 0) bad("start_ms must be positive");
  for (double p : {mutation_rate, feature_outlier_rate, rare_unclustered_rate, label_fraction}) {
    if (!(p >= 0.0 && p <= 1.0)) bad("rates must lie in [0, 1]");
  }
  if (feature_outlier_rate + rare_unclustered_rate > 1.0) bad("anomaly rates exceed 1");
  if (!(dominant_share > 0.0 && dominant_share <= 1.0)) bad("dominant_share must lie in (0, 1]");
  if (dominant_share < 1.0 && alternate_values == 0) bad("alternate_values must be positive");
  if (mutation_rate > 0.0 && variants_per_template == 0) bad("mutation needs variants");
  if (!(popularity_skew >= 0.0)) bad("popularity_skew must be non-negative");
}

std::vector<CommandTemplate> make_templates(std::size_t n, std::size_t per_family,
                                            std::size_t variants, std::uint64_t seed) {
  if (per_family == 0) throw Error(ErrorCode::InvalidSpec, "templates_per_family must be positive");
  std::vector<CommandTemplate> out;
  out.reserve(n);
  for (std::size_t family = 0; out.size() < n; ++family) {
    Rng rng(derive_seed(seed, family));
    const FamilyBase base = make_family(rng);
    const bool proxied = rng.chance(0.03);
    for (std::size_t k = 0; k < per_family && out.size() < n; ++k) {
      CommandTemplate t;
      t.template_id = static_cast<int>(out.size());
      t.family_id = static_cast<int>(family);
      t.process_path = base.process_path;
      t.parent_path = base.parent_path;
      auto args = base.args;
      // Siblings differ from the family base in one or two arguments.
      const std::size_t edits = 1 + rng.below(2);
      for (std::size_t e = 0; e < edits; ++e) {
        const auto kind = random_kind(rng);
        if (rng.chance(0.3)) {
          args.insert(args.begin() + static_cast<std::ptrdiff_t>(rng.below(args.size() + 1)),
                      token(rng, kind, base.windows));
        } else {
          args[rng.below(args.size())] = token(rng, kind, base.windows);
        }
      }
      if (proxied) {
        t.kind = rng.chance(0.5) ? InitiatorKind::ScheduledTask : InitiatorKind::DesktopLaunch;
        t.process_path += "." + std::to_string(k);
      } else {
        t.command_line = join_command(base.process_path, args);
      }
      // Variants rewrite a couple of characters inside one argument, the
      // way counters and session ids drift between runs.
      for (std::size_t v = 0; v < variants && !proxied; ++v) {
        auto varied = args;
        auto& slot = varied[rng.below(varied.size())];
        for (int c = 0; c < 2; ++c) slot[rng.below(slot.size())] = "0123456789abcdef"[rng.below(16)];
        t.variants.push_back(join_command(base.process_path, varied));
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::string random_command_line(std::uint64_t seed) {
  Rng rng(seed);
  FamilyBase f = make_family(rng);
  for (int i = 0; i < 3; ++i) f.args.push_back(token(rng, TokenKind::Guid, f.windows));
  return join_command(f.process_path, f.args);
}

std::string_view to_string(PlantedAnomaly kind) noexcept {
  switch (kind) {
    case PlantedAnomaly::None: return "none";
    case PlantedAnomaly::FeatureOutlier: return "feature_outlier";
    case PlantedAnomaly::RareUnclustered: return "rare_unclustered";
  }
  return "none";
}

Corpus generate_corpus(const GeneratorSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto templates = make_templates(spec.n_templates, spec.templates_per_family,
                                        spec.variants_per_template, derive_seed(seed, 1));

  Rng setup(derive_seed(seed, 2));
  std::vector<FeatureProfile> profiles;
  std::vector<Footprint> footprints;
  for (const auto& t : templates) {
    profiles.push_back(make_feature_profile(t, spec.alternate_values, setup));
    Footprint fp;
    const std::size_t n_orgs = 1 + setup.below(spec.n_orgs);
    std::vector<std::size_t> all(spec.n_orgs);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < n_orgs; ++i) std::swap(all[i], all[i + setup.below(all.size() - i)]);
    fp.orgs.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_orgs));
    std::sort(fp.orgs.begin(), fp.orgs.end());
    fp.devices = 1 + setup.below(spec.devices_per_org);
    fp.offset = setup.below(spec.devices_per_org);
    footprints.push_back(std::move(fp));
  }

  // Zipf popularity over a seeded permutation of template ids.
  std::vector<std::size_t> rank(templates.size());
  std::iota(rank.begin(), rank.end(), 0);
  for (std::size_t i = rank.size(); i > 1; --i) std::swap(rank[i - 1], rank[setup.below(i)]);
  std::vector<double> cumulative(templates.size());
  double total = 0.0;
  for (std::size_t r = 0; r < rank.size(); ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), spec.popularity_skew);
    cumulative[r] = total;
  }
  std::vector<bool> outlier_host(templates.size(), false);
  for (std::size_t r = 0; r < rank.size(); ++r) {
    const double share = (1.0 / std::pow(static_cast<double>(r + 1), spec.popularity_skew)) / total;
    outlier_host[rank[r]] =
        share * static_cast<double>(spec.n_alerts) >= static_cast<double>(spec.outlier_min_template_alerts);
  }
  const bool any_host = std::find(outlier_host.begin(), outlier_host.end(), true) != outlier_host.end();

  struct Draft {
    AlertRecord record;
    TruthRecord truth;
  };
  std::vector<Draft> drafts;
  drafts.reserve(spec.n_alerts);
  Rng rng(derive_seed(seed, 3));
  constexpr std::int64_t kDayMs = 86400000;
  for (std::size_t i = 0; i < spec.n_alerts; ++i) {
    Draft d;
    auto& r = d.record;
    r.timestamp_ms = spec.start_ms + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(spec.days))) * kDayMs +
                     static_cast<std::int64_t>(rng.below(kDayMs));

    const double roll = rng.unit();
    PlantedAnomaly anomaly = PlantedAnomaly::None;
    if (roll < spec.rare_unclustered_rate) {
      anomaly = PlantedAnomaly::RareUnclustered;
    } else if (roll < spec.rare_unclustered_rate + spec.feature_outlier_rate && any_host) {
      anomaly = PlantedAnomaly::FeatureOutlier;
    }

    if (anomaly == PlantedAnomaly::RareUnclustered) {
      r.command_line = random_command_line(rng.next());
      r.parent_path = rng.pick(kParents);
      r.process_path = r.command_line.substr(0, r.command_line.find(' '));
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        r.features[f] = "c" + std::to_string(f) + "_" + std::to_string(rng.below(8));
      }
      const std::size_t org = rng.below(spec.n_orgs);
      r.org_id = org_name(org);
      r.device_id = device_name(org, rng.below(spec.devices_per_org));
      d.truth.expected_route = "UnclusteredScored";
    } else {
      std::size_t tid;
      do {
        const double u = rng.unit() * total;
        const auto r_idx = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        tid = rank[std::min(r_idx, rank.size() - 1)];
      } while (anomaly == PlantedAnomaly::FeatureOutlier && !outlier_host[tid]);
      const auto& t = templates[tid];
      d.truth.template_id = t.template_id;
      r.initiator_kind = t.kind;
      r.parent_path = t.parent_path;
      r.process_path = t.process_path;
      r.command_line = t.command_line;
      if (anomaly == PlantedAnomaly::None && !t.variants.empty() && rng.chance(spec.mutation_rate)) {
        r.command_line = rng.pick(t.variants);
      }
      const auto& profile = profiles[tid];
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        r.features[f] = profile.alternates[f].empty() || rng.chance(spec.dominant_share)
                            ? profile.dominant[f]
                            : rng.pick(profile.alternates[f]);
      }
      const auto& fp = footprints[tid];
      const std::size_t org = fp.orgs[rng.below(fp.orgs.size())];
      r.org_id = org_name(org);
      r.device_id = device_name(org, (fp.offset + rng.below(fp.devices)) % spec.devices_per_org);
      d.truth.expected_route = "ClusteredConsistent";
      if (anomaly == PlantedAnomaly::FeatureOutlier) {
        const std::size_t f = rng.below(kFeatureCount);
        r.features[f] = "rare_" + hex(rng, 12);
        d.truth.planted_feature = FeatureSchema::standard().name(f);
        d.truth.expected_route = "ClusteredOutlier";
      }
    }
    d.truth.anomaly = anomaly;
    if (rng.chance(spec.label_fraction)) {
      r.label = anomaly == PlantedAnomaly::None ? Label::False : Label::Malicious;
    }
    drafts.push_back(std::move(d));
  }

  std::stable_sort(drafts.begin(), drafts.end(), [](const Draft& a, const Draft& b) {
    return a.record.timestamp_ms < b.record.timestamp_ms;
  });
  Corpus corpus;
  corpus.alerts.reserve(drafts.size());
  corpus.truth.reserve(drafts.size());
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    char id[24];
    std::snprintf(id, sizeof id, "a%08zu", i);
    drafts[i].record.alert_id = id;
    drafts[i].truth.alert_id = id;
    corpus.alerts.push_back(std::move(drafts[i].record));
    corpus.truth.push_back(std::move(drafts[i].truth));
  }
  return corpus;
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  const auto& schema = FeatureSchema::standard();
  out << schema_header_line(schema) << '\n';
  for (const auto& a : corpus.alerts) out << to_json_line(a, schema) << '\n';
}

void write_truth(std::ostream& out, const Corpus& corpus) {
  for (const auto& t : corpus.truth) out << truth_json(t).dump() << '\n';
}

std::vector<TruthRecord> read_truth(std::istream& in) {
  std::vector<TruthRecord> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TruthRecord t;
      t.alert_id = j.at("alert_id").get<std::string>();
      t.template_id = j.at("template_id").get<int>();
      const auto kind = j.at("anomaly").get<std::string>();
      if (kind == "feature_outlier") {
        t.anomaly = PlantedAnomaly::FeatureOutlier;
      } else if (kind == "rare_unclustered") {
        t.anomaly = PlantedAnomaly::RareUnclustered;
      } else if (kind != "none") {
        throw Error(ErrorCode::MalformedRecord, "unknown anomaly kind " + kind);
      }
      t.planted_feature = j.value("planted_feature", "");
      t.expected_route = j.at("expected_route").get<std::string>();
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedRecord,
                  "truth line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace alertsieve
