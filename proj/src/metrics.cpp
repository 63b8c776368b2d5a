#include "veilprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace veilprobe {

namespace {
void check_two_classes(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ValidationError("scores and labels differ in length");
  long pos = 0, neg = 0;
  for (int y : labels) (y == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw ValidationError("metric needs both classes present (pos=" + std::to_string(pos) +
                          ", neg=" + std::to_string(neg) + ")");
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("non-finite score in metric input");
}
}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_two_classes(scores, labels);
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Average ranks over ties, then the Mann-Whitney identity.
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg_rank;
    i = j + 1;
  }
  double rank_sum_pos = 0;
  long n_pos = 0, n_neg = 0;
  for (size_t k = 0; k < n; ++k) {
    if (labels[k] == 1) {
      rank_sum_pos += ranks[k];
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double tpr_at_fpr(const std::vector<double>& scores, const std::vector<int>& labels,
                  double fpr_cap) {
  check_two_classes(scores, labels);
  long n_pos = 0, n_neg = 0;
  for (int y : labels) (y == 1 ? n_pos : n_neg)++;

  // Candidate thresholds: midpoints between adjacent distinct scores plus
  // sentinels below/above everything.
  std::vector<double> distinct = scores;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> thresholds;
  thresholds.push_back(distinct.front() - 1.0);
  for (size_t i = 0; i + 1 < distinct.size(); ++i)
    thresholds.push_back((distinct[i] + distinct[i + 1]) / 2.0);
  thresholds.push_back(distinct.back() + 1.0);

  double best = 0.0;
  for (double thr : thresholds) {
    long tp = 0, fp = 0;
    for (size_t k = 0; k < scores.size(); ++k) {
      if (scores[k] > thr) {
        if (labels[k] == 1) ++tp;
        else ++fp;
      }
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
    if (fpr <= fpr_cap) best = std::max(best, static_cast<double>(tp) / n_pos);
  }
  return best;
}

std::vector<DocumentScore> aggregate_documents(
    const std::map<std::string, double>& sentence_scores,
    const std::map<std::string, std::vector<std::string>>& groups) {
  std::vector<DocumentScore> out;
  for (const auto& [doc_id, ids] : groups) {
    double total = 0;
    int count = 0;
    for (const auto& id : ids) {
      auto it = sentence_scores.find(id);
      if (it != sentence_scores.end()) {
        total += it->second;
        ++count;
      }
    }
    if (count == 0) {
      std::cerr << "warning: document '" << doc_id << "' has no scored sentences, skipped\n";
      continue;
    }
    out.push_back({doc_id, total / count, count});
  }
  return out;
}

MetricReport make_report(const std::string& method, const std::string& level,
                         const std::vector<double>& scores, const std::vector<int>& labels) {
  MetricReport report;
  report.method = method;
  report.level = level;
  report.auc = auc(scores, labels);
  report.tpr_at_5fpr = tpr_at_fpr(scores, labels, 0.05);
  for (int y : labels) (y == 1 ? report.n_pos : report.n_neg)++;
  return report;
}

}  // namespace veilprobe
