#pragma once

#include <map>
#include <string>
#include <vector>

#include "veilprobe/errors.hpp"

namespace veilprobe {

struct MetricReport {
  std::string method;
  std::string level = "sentence";  // or "document"
  double auc = 0.0;
  double tpr_at_5fpr = 0.0;
  long n_pos = 0;
  long n_neg = 0;
};

struct DocumentScore {
  std::string doc_id;
  double score = 0.0;
  int n_sentences = 0;
};

// Probability that a random positive outscores a random negative, ties 1/2.
// Rank-statistic implementation; agrees with the O(n^2) pairwise definition.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Max TPR over thresholds whose empirical FPR <= fpr_cap. Thresholds realized
// at score midpoints; a sample is predicted positive when score > threshold.
double tpr_at_fpr(const std::vector<double>& scores, const std::vector<int>& labels,
                  double fpr_cap = 0.05);

// Unweighted mean of sentence scores per document. Groups with no scored
// sentences are skipped (with a note on stderr).
std::vector<DocumentScore> aggregate_documents(
    const std::map<std::string, double>& sentence_scores,
    const std::map<std::string, std::vector<std::string>>& groups);

MetricReport make_report(const std::string& method, const std::string& level,
                         const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace veilprobe
