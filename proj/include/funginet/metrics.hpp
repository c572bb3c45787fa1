#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace funginet {

// Binary predictions with poisonous (=1) as the positive class. Scores are
// positive-class probabilities; predicted labels follow the argmax rule with
// ties at 0.5 resolved to positive.
struct PredictionSet {
  std::vector<int> labels;      // ground truth in {0,1}
  std::vector<double> scores;   // p(poisonous)
  std::vector<int> predicted;   // derived; fill via predict_labels()
};

void predict_labels(PredictionSet& p);

// Counts are doubles so that elementwise means across repeats stay exact for
// single reports and well defined for averages.
struct Confusion {
  double tp = 0, fp = 0, tn = 0, fn = 0;
  double total() const { return tp + fp + tn + fn; }
};

Confusion confusion(const PredictionSet& p);

struct ClassificationMetrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

// Zero denominators yield 0 for the affected metric.
ClassificationMetrics classification_metrics(const Confusion& c);

// Tie-aware Mann-Whitney AUC via average ranks; equals
// (concordant + 0.5 * tied) / (n_pos * n_neg). Requires both classes present.
double auc(const PredictionSet& p);

struct MetricsReport {
  double accuracy = 0, auc = 0, precision = 0, recall = 0, f1 = 0;
  std::size_t count = 0;
  Confusion confusion;
};

MetricsReport compute_report(const PredictionSet& p);

// Elementwise arithmetic mean over the metric fields (confusion included).
MetricsReport mean_report(std::span<const MetricsReport> reports);

// CSV with header Model,Accuracy,AUC,Precision,Recall,F1; three decimals;
// rows in the provided order.
std::string emit_report(const std::vector<std::pair<std::string, MetricsReport>>& reports);

}  // namespace funginet
