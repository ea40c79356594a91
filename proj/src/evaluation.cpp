#include "alertsieve/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "alertsieve/error.hpp"

namespace alertsieve {
namespace {

Label label_of(const AlertRecord& r) {
  if (!r.label) throw Error(ErrorCode::InvalidArgument, "alert " + r.alert_id + " has no label");
  return *r.label;
}

// Copies per alert, parallel to `labeled`.
std::vector<std::size_t> multiplicities(std::span<const AlertRecord> labeled,
                                        const ClassCounts& targets) {
  const auto counts = class_counts(labeled);
  auto plan = [](std::size_t n, std::size_t target, const char* cls) {
    if (target < n) {
      throw Error(ErrorCode::ImpossibleTarget, std::string(cls) + " target " + std::to_string(target) +
                                                   " is below the " + std::to_string(n) + " alerts present");
    }
    if (n == 0) return std::pair<std::size_t, std::size_t>{0, 0};
    return std::pair<std::size_t, std::size_t>{target / n, target % n};
  };
  const auto [mal_each, mal_extra] = plan(counts.malicious, targets.malicious, "malicious");
  const auto [false_each, false_extra] = plan(counts.false_alerts, targets.false_alerts, "false");

  std::vector<std::size_t> out(labeled.size());
  std::size_t mal_seen = 0, false_seen = 0;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (label_of(labeled[i]) == Label::Malicious) {
      out[i] = mal_each + (mal_seen++ < mal_extra ? 1 : 0);
    } else {
      out[i] = false_each + (false_seen++ < false_extra ? 1 : 0);
    }
  }
  return out;
}

}  // namespace

ClassCounts class_counts(std::span<const AlertRecord> labeled) {
  ClassCounts c;
  for (const auto& r : labeled) {
    if (label_of(r) == Label::Malicious) {
      ++c.malicious;
    } else {
      ++c.false_alerts;
    }
  }
  return c;
}

ClassCounts targets_from_factors(const ClassCounts& counts, double malicious_factor,
                                 double false_factor) {
  if (!(malicious_factor >= 1.0) || !(false_factor >= 1.0)) {
    throw Error(ErrorCode::ImpossibleTarget, "duplication factors must be at least 1");
  }
  return {static_cast<std::size_t>(std::llround(static_cast<double>(counts.malicious) * malicious_factor)),
          static_cast<std::size_t>(std::llround(static_cast<double>(counts.false_alerts) * false_factor))};
}

std::vector<AlertRecord> bias_correct(std::span<const AlertRecord> labeled, const ClassCounts& targets) {
  const auto copies = multiplicities(labeled, targets);
  std::vector<AlertRecord> out;
  out.reserve(targets.malicious + targets.false_alerts);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    for (std::size_t k = 0; k < copies[i]; ++k) {
      out.push_back(labeled[i]);
      if (k > 0) out.back().alert_id += "#dup" + std::to_string(k);
    }
  }
  return out;
}

EvalReport report_from_confusion(const Confusion& c) {
  const auto malicious = c.malicious_retained + c.malicious_removed;
  const auto false_total = c.false_retained + c.false_removed;
  if (malicious == 0 || false_total == 0) {
    throw Error(ErrorCode::SingleClassData, "evaluation needs both malicious and false alerts");
  }
  EvalReport r;
  r.confusion = c;
  r.recall_malicious = static_cast<double>(c.malicious_retained) / static_cast<double>(malicious);
  r.false_removal_rate = static_cast<double>(c.false_removed) / static_cast<double>(false_total);
  const double base = static_cast<double>(malicious) / static_cast<double>(false_total);
  if (c.false_retained == 0) {
    r.snr_improvement = c.malicious_retained > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  } else {
    r.snr_improvement =
        static_cast<double>(c.malicious_retained) / static_cast<double>(c.false_retained) / base;
  }
  return r;
}

EvalReport evaluate(const ModelBundle& bundle, std::span<const AlertRecord> labeled,
                    const std::optional<ClassCounts>& targets, std::size_t workers) {
  std::vector<std::size_t> copies;
  if (targets) {
    copies = multiplicities(labeled, *targets);
  } else {
    (void)class_counts(labeled);
    copies.assign(labeled.size(), 1);
  }
  const auto verdicts = triage_batch(bundle, labeled, workers);
  Confusion c;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const bool retained = verdicts[i].decision == Decision::RetainedForTriage;
    if (*labeled[i].label == Label::Malicious) {
      (retained ? c.malicious_retained : c.malicious_removed) += copies[i];
    } else {
      (retained ? c.false_retained : c.false_removed) += copies[i];
    }
  }
  return report_from_confusion(c);
}

std::string format_eval(const EvalReport& r, const std::string& title) {
  const auto& c = r.confusion;
  std::ostringstream out;
  out << title << '\n';
  out << "class\tretained\tremoved\ttotal\n";
  out << "malicious\t" << c.malicious_retained << '\t' << c.malicious_removed << '\t'
      << c.malicious_retained + c.malicious_removed << '\n';
  out << "false\t" << c.false_retained << '\t' << c.false_removed << '\t'
      << c.false_retained + c.false_removed << '\n';
  out << std::fixed << std::setprecision(2);
  out << "malicious_recall_pct\t" << 100.0 * r.recall_malicious << '\n';
  out << "false_removal_pct\t" << 100.0 * r.false_removal_rate << '\n';
  out << std::setprecision(3) << "snr_improvement\t" << r.snr_improvement << '\n';
  return out.str();
}

}  // namespace alertsieve
