#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mdbert {

// Scores and binary labels for D documents over L classes, row-major.
struct PredictionSet {
  std::size_t docs = 0;
  std::size_t classes = 0;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;

  double score(std::size_t d, std::size_t l) const { return scores[d * classes + l]; }
  bool positive(std::size_t d, std::size_t l) const { return labels[d * classes + l] != 0; }
  void validate() const;
};

enum class Averaging { Micro, Macro };

// Rank-based AUC with midrank tie correction. Micro flattens every
// (document, class) pair; macro averages per-class AUCs over classes that
// have both polarities, reporting how many were skipped.
double auc_roc(const PredictionSet& preds, Averaging mode, std::size_t* skipped = nullptr);

// Positive prediction means score strictly above the threshold. Macro
// averages per-class F1 over all classes with 0/0 counted as 0.
double f1_score(const PredictionSet& preds, double threshold, Averaging mode);

// Mean over documents of the fraction of top-K classes that are true;
// score ties broken toward the lower class index.
double precision_at_k(const PredictionSet& preds, std::size_t k);

// Mean over classes with at least one positive of the threshold-sweep
// average precision sum (R_i - R_{i-1}) * P_i.
double macro_average_precision(const PredictionSet& preds, std::size_t* skipped = nullptr);

// Fraction of documents whose argmax score hits the single true class.
double accuracy(const PredictionSet& preds);

struct PerClassRow {
  std::string name;
  std::optional<double> auc;
  double f1 = 0;
  std::optional<double> average_precision;
  std::size_t support = 0;
};

struct MetricReport {
  double auc_macro = 0, auc_micro = 0;
  double f1_macro = 0, f1_micro = 0;
  std::map<std::size_t, double> p_at_k;
  double ap_macro = 0;
  std::optional<double> accuracy;  // single-label tasks only
  std::size_t auc_classes_skipped = 0;
  std::size_t ap_classes_skipped = 0;
  std::vector<PerClassRow> per_class;
};

MetricReport evaluate_predictions(const PredictionSet& preds, const std::vector<std::string>& class_names,
                                  double threshold, const std::vector<std::size_t>& k_values);

std::string metric_summary_csv(const MetricReport& report);
std::string metric_per_class_csv(const MetricReport& report);

}  // namespace mdbert
