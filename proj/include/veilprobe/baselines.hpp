#pragma once

#include <memory>
#include <string>
#include <vector>

#include "veilprobe/backends.hpp"
#include "veilprobe/perturber.hpp"

namespace veilprobe {

struct ScoreRecord {
  std::string method;
  std::string record_id;
  double score = 0.0;  // oriented member-high for every method
};

// Mean token log-likelihood; higher = more member-like.
double ppl_score(const TokenScoreTrace& trace);

// Likelihood ratio original vs lowercased: exp(mean lp) / exp(mean lp lower).
// A model that knows the original casing scores above 1.
double lowercase_score(const TokenScoreTrace& trace, const TokenScoreTrace& trace_lower);

// DEFLATE-compressed byte size of the text.
size_t zlib_compressed_size(const std::string& text);

// Mean token log-likelihood divided by the compressed size.
double zlib_score(const std::string& text, const TokenScoreTrace& trace);

// Mean of the lowest ceil(k% * n) token log-likelihoods.
double min_k_score(const TokenScoreTrace& trace, double k_percent);

// Min-K with per-position normalization: (lp - mu_t) / sigma_t where mu_t and
// sigma_t are the mean and standard deviation of log-probabilities under the
// position's predicted distribution. One-hot positions contribute 0.
double min_k_pp_score(const TokenScoreTrace& trace, double k_percent);

// Mean logprob of the text minus the mean over synonym-substituted neighbors.
// Neighbors use the perturber's substitution with randomized position scores.
double neighbor_score(const std::string& text, std::shared_ptr<Backend> backend, int n_neighbors,
                      const SynonymSource& synonyms, uint64_t seed, double gamma_percent = 10.0);

// The 16 aggregated score features, in their published order.
struct FeatureAggVector {
  static constexpr int kDim = 16;
  std::array<double, kDim> values{};

  static const std::vector<std::string>& names();
};

FeatureAggVector compute_feature_agg(const std::string& text, const TokenScoreTrace& trace);

// L2-regularized logistic model fit on labeled support vectors with a
// deterministic full-batch solver; scores are member log-odds.
std::vector<double> feature_agg_scores(
    const std::vector<std::pair<FeatureAggVector, int>>& support,
    const std::vector<FeatureAggVector>& detect);

enum class ConsistencyMetric { token_jaccard, embedding_cosine };

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual std::vector<double> embed(const std::string& text) const = 0;  // unit vector
};

// Mean pairwise similarity across the sampled suffixes.
double consistency_indicator(const std::vector<std::string>& suffixes,
                             ConsistencyMetric metric = ConsistencyMetric::token_jaccard,
                             const TextEmbedder* embedder = nullptr);

// Mean cosine similarity between the prefix embedding and each suffix embedding.
double semantic_shift_indicator(const std::string& prefix,
                                const std::vector<std::string>& suffixes,
                                const TextEmbedder& embedder);

}  // namespace veilprobe
