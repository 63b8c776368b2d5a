#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "veilprobe/backends.hpp"

namespace veilprobe {

struct TokenImportance {
  int position = 0;
  std::string token;
  double score = 0.0;
};

struct PerturbationPlan {
  std::string record_id;
  std::vector<int> selected_positions;          // sorted ascending
  std::map<int, std::string> originals;         // position -> original token
  std::map<int, std::string> replacements;      // position -> substitute
  double gamma_percent = 10.0;
};

struct OverlapReport {
  std::vector<double> per_text_overlap;
  double mean_overlap = 0.0;
  double baseline_expectation = 0.0;
};

using Divergence = std::function<double(const std::vector<double>&, const std::vector<double>&)>;

// Total variation distance; bounded in [0,1].
double tv_distance(const std::vector<double>& p, const std::vector<double>& q);

// Occlusion attribution: the score of token i is the mean, over up to
// `max_eval_positions` positions after i, of the divergence between the
// proxy's next-token distribution with and without token i in the context.
std::vector<TokenImportance> attribute_tokens(const std::string& text,
                                              std::shared_ptr<Backend> proxy_backend,
                                              const Divergence& divergence = tv_distance,
                                              int max_eval_positions = 8);

// Elementwise arithmetic mean across proxies; all lists must share one
// tokenization length.
std::vector<TokenImportance> aggregate_importance(
    const std::vector<std::vector<TokenImportance>>& per_proxy);

// Projects scores given over one tokenization onto another by char-span
// overlap weighting. Tokens of `target` with no overlapping source span
// score 0.
std::vector<double> align_scores_by_span(const std::vector<Token>& source_tokens,
                                         const std::vector<double>& source_scores,
                                         const std::vector<Token>& target_tokens);

class SynonymSource {
 public:
  virtual ~SynonymSource() = default;
  virtual std::optional<std::string> synonym(const std::string& token) const = 0;
};

class LexiconSynonyms : public SynonymSource {
 public:
  explicit LexiconSynonyms(std::map<std::string, std::vector<std::string>> lexicon)
      : lexicon_(std::move(lexicon)) {}
  std::optional<std::string> synonym(const std::string& token) const override;

 private:
  std::map<std::string, std::vector<std::string>> lexicon_;
};

// Nearest neighbor in the proxy's distributional space: each word's vector is
// the proxy's next-token distribution given that word alone. Excludes the
// word itself, specials, and non-alphabetic candidates.
class DistributionalSynonyms : public SynonymSource {
 public:
  explicit DistributionalSynonyms(std::shared_ptr<Backend> proxy);
  std::optional<std::string> synonym(const std::string& token) const override;

 private:
  std::shared_ptr<Backend> proxy_;
  std::vector<std::string> candidates_;
};

class ChainSynonyms : public SynonymSource {
 public:
  explicit ChainSynonyms(std::vector<std::shared_ptr<SynonymSource>> sources)
      : sources_(std::move(sources)) {}
  std::optional<std::string> synonym(const std::string& token) const override;

 private:
  std::vector<std::shared_ptr<SynonymSource>> sources_;
};

struct PerturbationResult {
  PerturbationPlan plan;
  std::string perturbed_text;
};

// Replaces the top-gamma% positions by score (at least one) with synonyms,
// leaving every other byte of the text identical. `tokens` supplies char
// spans from the authority tokenizer and must match `importances` by position.
PerturbationResult select_and_substitute(const std::string& text,
                                         const std::vector<Token>& tokens,
                                         const std::vector<TokenImportance>& importances,
                                         double gamma_percent, const SynonymSource& synonyms,
                                         const std::string& record_id = "");

// Splices the plan's originals back in; inverse of select_and_substitute.
std::string invert_plan(const std::string& perturbed_text, const std::vector<Token>& tokens,
                        const PerturbationPlan& plan);

enum class OverlapKind { jaccard, intersection_over_k };

// Jaccard |A∩B| / |A∪B| by default; empty union is defined as 0.
double overlap_rate(const std::set<int>& a, const std::set<int>& b, int n_tokens,
                    OverlapKind kind = OverlapKind::jaccard);

// Monte-Carlo expectation of the overlap of two independent uniform k-of-n
// selections.
double expected_random_overlap(int n_tokens, int k, int trials, uint64_t seed,
                               OverlapKind kind = OverlapKind::jaccard);

OverlapReport make_overlap_report(const std::vector<double>& per_text_overlap,
                                  double baseline_expectation);

}  // namespace veilprobe
