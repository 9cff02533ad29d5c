#include "raeid/metrics.hpp"

#include <cmath>

#include "json.hpp"

namespace raeid {

namespace {

void check_pairs(std::span<const int> preds, std::span<const int> truths) {
  if (preds.size() != truths.size()) throw DataError("metrics: length mismatch");
  if (preds.empty()) throw DataError("metrics: no samples");
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 1) throw ConfigError("confusion matrix needs at least one class");
}

ConfusionMatrix ConfusionMatrix::from_pairs(std::span<const int> preds,
                                            std::span<const int> truths, int num_classes) {
  check_pairs(preds, truths);
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(preds[i], truths[i]);
  return cm;
}

void ConfusionMatrix::add(int pred, int truth) {
  if (pred < 0 || pred >= k_ || truth < 0 || truth >= k_) {
    throw DataError("metrics: class id out of range");
  }
  ++counts_[truth * k_ + pred];
}

long ConfusionMatrix::total() const {
  long t = 0;
  for (long c : counts_) t += c;
  return t;
}

long ConfusionMatrix::truth_support(int c) const {
  long s = 0;
  for (int p = 0; p < k_; ++p) s += count(c, p);
  return s;
}

long ConfusionMatrix::predicted_count(int c) const {
  long s = 0;
  for (int t = 0; t < k_; ++t) s += count(t, c);
  return s;
}

std::vector<std::vector<long>> ConfusionMatrix::rows() const {
  std::vector<std::vector<long>> out(k_);
  for (int t = 0; t < k_; ++t) {
    for (int p = 0; p < k_; ++p) out[t].push_back(count(t, p));
  }
  return out;
}

double accuracy(const ConfusionMatrix& cm) {
  const long n = cm.total();
  if (n == 0) throw DataError("metrics: no samples");
  long diag = 0;
  for (int c = 0; c < cm.num_classes(); ++c) diag += cm.count(c, c);
  return static_cast<double>(diag) / static_cast<double>(n);
}

double f1_for_class(const ConfusionMatrix& cm, int c) {
  const double tp = static_cast<double>(cm.count(c, c));
  const double pred = static_cast<double>(cm.predicted_count(c));
  const double support = static_cast<double>(cm.truth_support(c));
  // F1 = 2TP / (predicted + actual); avoids undefined precision/recall.
  const double denom = pred + support;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

double f1(const ConfusionMatrix& cm, F1Average avg) {
  const long n = cm.total();
  if (n == 0) throw DataError("metrics: no samples");
  double acc = 0.0;
  for (int c = 0; c < cm.num_classes(); ++c) {
    const double w = avg == F1Average::Macro
                         ? 1.0 / cm.num_classes()
                         : static_cast<double>(cm.truth_support(c)) / static_cast<double>(n);
    acc += w * f1_for_class(cm, c);
  }
  return acc;
}

double mcc(const ConfusionMatrix& cm) {
  const int k = cm.num_classes();
  const double s = static_cast<double>(cm.total());
  if (s == 0.0) throw DataError("metrics: no samples");
  double c = 0.0, pt = 0.0, pp = 0.0, tt = 0.0;
  for (int i = 0; i < k; ++i) {
    c += static_cast<double>(cm.count(i, i));
    const double p = static_cast<double>(cm.predicted_count(i));
    const double t = static_cast<double>(cm.truth_support(i));
    pt += p * t;
    pp += p * p;
    tt += t * t;
  }
  const double denom = std::sqrt((s * s - pp) * (s * s - tt));
  return denom == 0.0 ? 0.0 : (c * s - pt) / denom;
}

double accuracy(std::span<const int> preds, std::span<const int> truths) {
  check_pairs(preds, truths);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == truths[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double f1(std::span<const int> preds, std::span<const int> truths, F1Average avg,
          int num_classes) {
  return f1(ConfusionMatrix::from_pairs(preds, truths, num_classes), avg);
}

double mcc(std::span<const int> preds, std::span<const int> truths, int num_classes) {
  return mcc(ConfusionMatrix::from_pairs(preds, truths, num_classes));
}

std::vector<int> to_indices(std::span<const Label> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (Label l : labels) out.push_back(label_index(l));
  return out;
}

std::string metrics_report_json(const ConfusionMatrix& cm) {
  nlohmann::ordered_json j;
  j["acc"] = accuracy(cm);
  j["f1_weighted"] = f1(cm, F1Average::Weighted);
  j["f1_macro"] = f1(cm, F1Average::Macro);
  j["mcc"] = mcc(cm);
  j["confusion"] = cm.rows();
  return j.dump(2);
}

}  // namespace raeid
