#include "funginet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace funginet {

void predict_labels(PredictionSet& p) {
  p.predicted.resize(p.scores.size());
  for (std::size_t i = 0; i < p.scores.size(); ++i) {
    p.predicted[i] = p.scores[i] >= 0.5 ? 1 : 0;
  }
}

Confusion confusion(const PredictionSet& p) {
  if (p.labels.empty()) throw std::invalid_argument("confusion: empty prediction set");
  if (p.labels.size() != p.predicted.size()) {
    throw std::invalid_argument("confusion: labels and predictions differ in length");
  }
  Confusion c;
  for (std::size_t i = 0; i < p.labels.size(); ++i) {
    bool truth = p.labels[i] == 1;
    bool pred = p.predicted[i] == 1;
    if (truth && pred)
      c.tp += 1;
    else if (!truth && pred)
      c.fp += 1;
    else if (!truth && !pred)
      c.tn += 1;
    else
      c.fn += 1;
  }
  return c;
}

ClassificationMetrics classification_metrics(const Confusion& c) {
  ClassificationMetrics m;
  double total = c.total();
  if (total <= 0) throw std::invalid_argument("classification_metrics: empty counts");
  m.accuracy = (c.tp + c.tn) / total;
  m.precision = (c.tp + c.fp) > 0 ? c.tp / (c.tp + c.fp) : 0.0;
  m.recall = (c.tp + c.fn) > 0 ? c.tp / (c.tp + c.fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

double auc(const PredictionSet& p) {
  if (p.labels.size() != p.scores.size()) {
    throw std::invalid_argument("auc: labels and scores differ in length");
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : p.labels) (y == 1 ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("AUC undefined for single-class labels");
  }
  for (double s : p.scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("auc: non-finite score");
  }

  std::vector<std::size_t> order(p.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p.scores[a] < p.scores[b]; });

  // Average ranks over tie groups, then the Mann-Whitney U statistic.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && p.scores[order[j]] == p.scores[order[i]]) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (p.labels[order[k]] == 1) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsReport compute_report(const PredictionSet& p) {
  MetricsReport r;
  r.confusion = confusion(p);
  ClassificationMetrics m = classification_metrics(r.confusion);
  r.accuracy = m.accuracy;
  r.precision = m.precision;
  r.recall = m.recall;
  r.f1 = m.f1;
  r.auc = auc(p);
  r.count = p.labels.size();
  return r;
}

MetricsReport mean_report(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw std::invalid_argument("mean_report: no reports");
  MetricsReport mean;
  for (const MetricsReport& r : reports) {
    mean.accuracy += r.accuracy;
    mean.auc += r.auc;
    mean.precision += r.precision;
    mean.recall += r.recall;
    mean.f1 += r.f1;
    mean.confusion.tp += r.confusion.tp;
    mean.confusion.fp += r.confusion.fp;
    mean.confusion.tn += r.confusion.tn;
    mean.confusion.fn += r.confusion.fn;
    mean.count += r.count;
  }
  double n = static_cast<double>(reports.size());
  mean.accuracy /= n;
  mean.auc /= n;
  mean.precision /= n;
  mean.recall /= n;
  mean.f1 /= n;
  mean.confusion.tp /= n;
  mean.confusion.fp /= n;
  mean.confusion.tn /= n;
  mean.confusion.fn /= n;
  mean.count = static_cast<std::size_t>(static_cast<double>(mean.count) / n + 0.5);
  return mean;
}

std::string emit_report(const std::vector<std::pair<std::string, MetricsReport>>& reports) {
  std::string out = "Model,Accuracy,AUC,Precision,Recall,F1\n";
  char buf[64];
  for (const auto& [name, r] : reports) {
    out += name;
    for (double v : {r.accuracy, r.auc, r.precision, r.recall, r.f1}) {
      std::snprintf(buf, sizeof(buf), ",%.3f", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace funginet
