#pragma once

// Classification metrics over integer class ids 0..k-1. For movement labels
// the order is (Rise, Fall, Neutral).

#include <span>
#include <string>
#include <vector>

#include "raeid/common.hpp"

namespace raeid {

/// Rows are truth, columns are prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);
  static ConfusionMatrix from_pairs(std::span<const int> preds, std::span<const int> truths,
                                    int num_classes);

  void add(int pred, int truth);
  int num_classes() const { return k_; }
  long count(int truth, int pred) const { return counts_[truth * k_ + pred]; }
  long total() const;
  long truth_support(int c) const;
  long predicted_count(int c) const;
  std::vector<std::vector<long>> rows() const;

 private:
  int k_;
  std::vector<long> counts_;
};

enum class F1Average { Weighted, Macro };

double accuracy(const ConfusionMatrix& cm);
/// Per-class F1; 0 when precision and recall are both undefined or zero.
double f1_for_class(const ConfusionMatrix& cm, int c);
/// Macro averages over all k classes; weighted uses truth support as weights.
double f1(const ConfusionMatrix& cm, F1Average avg);
/// Multiclass (Gorodkin) MCC; 0 when the denominator vanishes.
double mcc(const ConfusionMatrix& cm);

double accuracy(std::span<const int> preds, std::span<const int> truths);
double f1(std::span<const int> preds, std::span<const int> truths, F1Average avg,
          int num_classes = kNumPolicyLabels);
double mcc(std::span<const int> preds, std::span<const int> truths,
           int num_classes = kNumPolicyLabels);

std::vector<int> to_indices(std::span<const Label> labels);

/// `{"acc":..,"f1_weighted":..,"f1_macro":..,"mcc":..,"confusion":[[..]]}`
std::string metrics_report_json(const ConfusionMatrix& cm);

}  // namespace raeid
