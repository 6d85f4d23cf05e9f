#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "errors.hpp"
#include "io_util.hpp"

namespace mdbert {

void PredictionSet::validate() const {
  if (scores.size() != docs * classes || labels.size() != docs * classes)
    throw ShapeError("predictions: matrix sizes do not match docs x classes");
  for (auto l : labels)
    if (l > 1) throw DataError("predictions: labels must be 0 or 1");
  for (double s : scores)
    if (!std::isfinite(s)) throw DataError("predictions: non-finite score");
}

namespace {

// Midrank AUC over one score/label column.
std::optional<double> binary_auc(const std::vector<std::pair<double, bool>>& items) {
  std::size_t positives = 0;
  for (const auto& [_, y] : items) positives += y;
  const std::size_t negatives = items.size() - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return items[a].first < items[b].first; });

  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[order[j]].first == items[order[i]].first) ++j;
    const double midrank = 0.5 * double(i + 1 + j);  // ranks are 1-based
    for (std::size_t t = i; t < j; ++t)
      if (items[order[t]].second) rank_sum_pos += midrank;
    i = j;
  }
  return (rank_sum_pos - 0.5 * double(positives) * double(positives + 1)) /
         (double(positives) * double(negatives));
}

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

double f1_from_counts(const Counts& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * double(c.tp) / double(denom);
}

}  // namespace

double auc_roc(const PredictionSet& preds, Averaging mode, std::size_t* skipped) {
  preds.validate();
  if (skipped) *skipped = 0;
  if (mode == Averaging::Micro) {
    std::vector<std::pair<double, bool>> items;
    items.reserve(preds.scores.size());
    for (std::size_t i = 0; i < preds.scores.size(); ++i)
      items.emplace_back(preds.scores[i], preds.labels[i] != 0);
    const auto auc = binary_auc(items);
    if (!auc) throw DataError("auc: needs at least one positive and one negative");
    return *auc;
  }
  double sum = 0;
  std::size_t counted = 0;
  for (std::size_t l = 0; l < preds.classes; ++l) {
    std::vector<std::pair<double, bool>> items;
    items.reserve(preds.docs);
    for (std::size_t d = 0; d < preds.docs; ++d) items.emplace_back(preds.score(d, l), preds.positive(d, l));
    if (const auto auc = binary_auc(items)) {
      sum += *auc;
      ++counted;
    } else if (skipped) {
      ++*skipped;
    }
  }
  if (counted == 0) throw DataError("auc: no class has both polarities");
  return sum / double(counted);
}

double f1_score(const PredictionSet& preds, double threshold, Averaging mode) {
  preds.validate();
  if (threshold <= 0 || threshold >= 1) throw UsageError("f1: threshold must be in (0, 1)");
  if (mode == Averaging::Micro) {
    Counts c;
    for (std::size_t i = 0; i < preds.scores.size(); ++i) {
      const bool pred = preds.scores[i] > threshold;
      const bool truth = preds.labels[i] != 0;
      if (pred && truth) ++c.tp;
      else if (pred) ++c.fp;
      else if (truth) ++c.fn;
    }
    return f1_from_counts(c);
  }
  double sum = 0;
  for (std::size_t l = 0; l < preds.classes; ++l) {
    Counts c;
    for (std::size_t d = 0; d < preds.docs; ++d) {
      const bool pred = preds.score(d, l) > threshold;
      const bool truth = preds.positive(d, l);
      if (pred && truth) ++c.tp;
      else if (pred) ++c.fp;
      else if (truth) ++c.fn;
    }
    sum += f1_from_counts(c);
  }
  return preds.classes == 0 ? 0.0 : sum / double(preds.classes);
}

double precision_at_k(const PredictionSet& preds, std::size_t k) {
  preds.validate();
  if (k == 0 || k > preds.classes) throw UsageError("precision@k: k must be in [1, classes]");
  std::size_t hits = 0;  // integer accumulation keeps document order irrelevant
  std::vector<std::size_t> order(preds.classes);
  for (std::size_t d = 0; d < preds.docs; ++d) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return preds.score(d, a) > preds.score(d, b);
    });
    for (std::size_t i = 0; i < k; ++i)
      if (preds.positive(d, order[i])) ++hits;
  }
  return preds.docs == 0 ? 0.0 : double(hits) / (double(preds.docs) * double(k));
}

double macro_average_precision(const PredictionSet& preds, std::size_t* skipped) {
  preds.validate();
  if (skipped) *skipped = 0;
  double sum = 0;
  std::size_t counted = 0;
  std::vector<std::size_t> order(preds.docs);
  for (std::size_t l = 0; l < preds.classes; ++l) {
    std::size_t positives = 0;
    for (std::size_t d = 0; d < preds.docs; ++d) positives += preds.positive(d, l);
    if (positives == 0) {
      if (skipped) ++*skipped;
      continue;
    }
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return preds.score(a, l) > preds.score(b, l);
    });
    // Sweep distinct score thresholds in descending order; at each one,
    // precision over everything predicted so far and recall over positives.
    double ap = 0, prev_recall = 0;
    std::size_t tp = 0, predicted = 0, i = 0;
    while (i < preds.docs) {
      std::size_t j = i;
      while (j < preds.docs && preds.score(order[j], l) == preds.score(order[i], l)) ++j;
      for (std::size_t t = i; t < j; ++t) {
        ++predicted;
        if (preds.positive(order[t], l)) ++tp;
      }
      const double precision = double(tp) / double(predicted);
      const double recall = double(tp) / double(positives);
      ap += (recall - prev_recall) * precision;
      prev_recall = recall;
      i = j;
    }
    sum += ap;
    ++counted;
  }
  if (counted == 0) throw DataError("average precision: no class has a positive");
  return sum / double(counted);
}

double accuracy(const PredictionSet& preds) {
  preds.validate();
  if (preds.docs == 0) throw DataError("accuracy: empty prediction set");
  std::size_t correct = 0;
  for (std::size_t d = 0; d < preds.docs; ++d) {
    std::size_t positives = 0, truth = 0;
    for (std::size_t l = 0; l < preds.classes; ++l)
      if (preds.positive(d, l)) {
        ++positives;
        truth = l;
      }
    if (positives != 1)
      throw DataError("accuracy: document " + std::to_string(d) + " is not single-label");
    std::size_t best = 0;
    for (std::size_t l = 1; l < preds.classes; ++l)
      if (preds.score(d, l) > preds.score(d, best)) best = l;
    if (best == truth) ++correct;
  }
  return double(correct) / double(preds.docs);
}

MetricReport evaluate_predictions(const PredictionSet& preds, const std::vector<std::string>& class_names,
                                  double threshold, const std::vector<std::size_t>& k_values) {
  preds.validate();
  MetricReport report;
  report.auc_micro = auc_roc(preds, Averaging::Micro);
  report.auc_macro = auc_roc(preds, Averaging::Macro, &report.auc_classes_skipped);
  report.f1_micro = f1_score(preds, threshold, Averaging::Micro);
  report.f1_macro = f1_score(preds, threshold, Averaging::Macro);
  report.ap_macro = macro_average_precision(preds, &report.ap_classes_skipped);
  for (std::size_t k : k_values)
    if (k >= 1 && k <= preds.classes) report.p_at_k[k] = precision_at_k(preds, k);

  bool single_label = true;
  for (std::size_t d = 0; d < preds.docs && single_label; ++d) {
    std::size_t positives = 0;
    for (std::size_t l = 0; l < preds.classes; ++l) positives += preds.positive(d, l);
    single_label = positives == 1;
  }
  if (single_label && preds.docs > 0) report.accuracy = accuracy(preds);

  for (std::size_t l = 0; l < preds.classes; ++l) {
    PerClassRow row;
    row.name = l < class_names.size() ? class_names[l] : "class" + std::to_string(l);
    std::vector<std::pair<double, bool>> items;
    Counts c;
    std::size_t positives = 0;
    for (std::size_t d = 0; d < preds.docs; ++d) {
      items.emplace_back(preds.score(d, l), preds.positive(d, l));
      positives += preds.positive(d, l);
      const bool pred = preds.score(d, l) > threshold;
      if (pred && preds.positive(d, l)) ++c.tp;
      else if (pred) ++c.fp;
      else if (preds.positive(d, l)) ++c.fn;
    }
    row.support = positives;
    row.auc = binary_auc(items);
    row.f1 = f1_from_counts(c);
    if (positives > 0) {
      PredictionSet single;
      single.docs = preds.docs;
      single.classes = 1;
      for (std::size_t d = 0; d < preds.docs; ++d) {
        single.scores.push_back(preds.score(d, l));
        single.labels.push_back(preds.positive(d, l) ? 1 : 0);
      }
      row.average_precision = macro_average_precision(single);
    }
    report.per_class.push_back(std::move(row));
  }
  return report;
}

std::string metric_summary_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "metric,value\n";
  os << "auc_macro," << format_double(report.auc_macro) << '\n';
  os << "auc_micro," << format_double(report.auc_micro) << '\n';
  os << "f1_macro," << format_double(report.f1_macro) << '\n';
  os << "f1_micro," << format_double(report.f1_micro) << '\n';
  for (const auto& [k, v] : report.p_at_k) os << "p_at_" << k << ',' << format_double(v) << '\n';
  os << "ap_macro," << format_double(report.ap_macro) << '\n';
  if (report.accuracy) os << "accuracy," << format_double(*report.accuracy) << '\n';
  os << "auc_classes_skipped," << report.auc_classes_skipped << '\n';
  os << "ap_classes_skipped," << report.ap_classes_skipped << '\n';
  return os.str();
}

std::string metric_per_class_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "class,auc,f1,ap,support,skipped\n";
  for (const auto& row : report.per_class) {
    os << row.name << ',';
    if (row.auc) os << format_double(*row.auc);
    os << ',' << format_double(row.f1) << ',';
    if (row.average_precision) os << format_double(*row.average_precision);
    os << ',' << row.support << ',' << (row.auc && row.average_precision ? 0 : 1) << '\n';
  }
  return os.str();
}

}  // namespace mdbert
