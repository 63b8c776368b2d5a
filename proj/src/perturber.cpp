#include "veilprobe/perturber.hpp"

#include <algorithm>
#include <cmath>

#include "veilprobe/util.hpp"

namespace veilprobe {

double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ValidationError("tv_distance over mismatched supports");
  double acc = 0;
  for (size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

std::vector<TokenImportance> attribute_tokens(const std::string& text,
                                              std::shared_ptr<Backend> proxy_backend,
                                              const Divergence& divergence,
                                              int max_eval_positions) {
  if (!proxy_backend->capabilities().can_score_tokens)
    throw CapabilityError("proxy '" + proxy_backend->capabilities().name +
                          "' cannot score tokens; attribution needs a scoring backend");
  std::vector<Token> tokens = proxy_backend->tokenize(text);
  const int n = static_cast<int>(tokens.size());
  if (n < 2)
    throw ValidationError("degenerate input: attribution needs at least two tokens, got " +
                          std::to_string(n));

  auto context_of = [&](int upto, int skip) {
    // Tokens [0, upto) joined, optionally skipping one position.
    std::string ctx;
    for (int t = 0; t < upto; ++t) {
      if (t == skip) continue;
      if (!ctx.empty()) ctx += ' ';
      ctx += tokens[static_cast<size_t>(t)].text;
    }
    return ctx;
  };

  // Full-context distributions are shared across occlusions; compute once.
  std::vector<std::vector<double>> full_dists(static_cast<size_t>(n) + 1);
  for (int j = 1; j <= n; ++j)
    full_dists[static_cast<size_t>(j)] = proxy_backend->next_token_distribution(context_of(j, -1));

  std::vector<TokenImportance> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int last = std::min(n, i + max_eval_positions);
    double total = 0;
    int count = 0;
    for (int j = i + 1; j <= last; ++j) {
      std::vector<double> occluded = proxy_backend->next_token_distribution(context_of(j, i));
      total += divergence(full_dists[static_cast<size_t>(j)], occluded);
      ++count;
    }
    const double score = count > 0 ? total / count : 0.0;
    if (!std::isfinite(score)) throw NumericError("non-finite attribution score");
    out.push_back({i, tokens[static_cast<size_t>(i)].text, score});
  }
  return out;
}

std::vector<TokenImportance> aggregate_importance(
    const std::vector<std::vector<TokenImportance>>& per_proxy) {
  if (per_proxy.empty()) throw ValidationError("no proxy scores to aggregate");
  const size_t n = per_proxy[0].size();
  for (const auto& scores : per_proxy)
    if (scores.size() != n)
      throw ValidationError("tokenization mismatch across proxies: " + std::to_string(n) +
                            " vs " + std::to_string(scores.size()) + " tokens");
  std::vector<TokenImportance> out = per_proxy[0];
  for (size_t i = 0; i < n; ++i) {
    double sum = 0;
    for (const auto& scores : per_proxy) sum += scores[i].score;
    out[i].score = sum / static_cast<double>(per_proxy.size());
  }
  return out;
}

std::vector<double> align_scores_by_span(const std::vector<Token>& source_tokens,
                                         const std::vector<double>& source_scores,
                                         const std::vector<Token>& target_tokens) {
  if (source_tokens.size() != source_scores.size())
    throw ValidationError("source tokens and scores differ in length");
  std::vector<double> out(target_tokens.size(), 0.0);
  for (size_t t = 0; t < target_tokens.size(); ++t) {
    double weighted = 0, weight = 0;
    for (size_t s = 0; s < source_tokens.size(); ++s) {
      const size_t lo = std::max(target_tokens[t].begin, source_tokens[s].begin);
      const size_t hi = std::min(target_tokens[t].end, source_tokens[s].end);
      if (hi > lo) {
        const double w = static_cast<double>(hi - lo);
        weighted += w * source_scores[s];
        weight += w;
      }
    }
    out[t] = weight > 0 ? weighted / weight : 0.0;
  }
  return out;
}

std::optional<std::string> LexiconSynonyms::synonym(const std::string& token) const {
  auto it = lexicon_.find(token);
  if (it == lexicon_.end()) return std::nullopt;
  for (const auto& candidate : it->second)
    if (candidate != token && !candidate.empty()) return candidate;
  return std::nullopt;
}

DistributionalSynonyms::DistributionalSynonyms(std::shared_ptr<Backend> proxy)
    : proxy_(std::move(proxy)) {
  for (const auto& word : proxy_->vocab()) {
    const bool alphabetic =
        !word.empty() && std::all_of(word.begin(), word.end(), [](unsigned char c) {
          return std::isalpha(c) != 0;
        });
    if (alphabetic) candidates_.push_back(word);
  }
}

std::optional<std::string> DistributionalSynonyms::synonym(const std::string& token) const {
  if (candidates_.size() < 2) return std::nullopt;
  const std::vector<double> anchor = proxy_->next_token_distribution(token);
  double best = -2.0;
  std::string best_word;
  for (const auto& word : candidates_) {
    if (word == token) continue;
    const std::vector<double> vec = proxy_->next_token_distribution(word);
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < vec.size(); ++i) {
      dot += anchor[i] * vec[i];
      na += anchor[i] * anchor[i];
      nb += vec[i] * vec[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    const double cos = denom > 0 ? dot / denom : 0.0;
    if (cos > best) {
      best = cos;
      best_word = word;
    }
  }
  if (best_word.empty()) return std::nullopt;
  return best_word;
}

std::optional<std::string> ChainSynonyms::synonym(const std::string& token) const {
  for (const auto& source : sources_) {
    auto result = source->synonym(token);
    if (result) return result;
  }
  return std::nullopt;
}

PerturbationResult select_and_substitute(const std::string& text,
                                         const std::vector<Token>& tokens,
                                         const std::vector<TokenImportance>& importances,
                                         double gamma_percent, const SynonymSource& synonyms,
                                         const std::string& record_id) {
  if (tokens.size() != importances.size())
    throw ValidationError("token/importance length mismatch for '" + record_id + "'");
  if (tokens.empty()) throw ValidationError("cannot perturb empty token list");
  if (gamma_percent <= 0 || gamma_percent > 100)
    throw ValidationError("gamma_percent must lie in (0, 100]");

  const int n = static_cast<int>(tokens.size());
  // At least one token is always perturbed so the delta cannot be degenerate.
  const int k = std::max(1, static_cast<int>(std::floor(gamma_percent / 100.0 * n)));

  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double sa = importances[static_cast<size_t>(a)].score;
    const double sb = importances[static_cast<size_t>(b)].score;
    if (sa != sb) return sa > sb;
    return a < b;  // ties to the lower position
  });

  PerturbationPlan plan;
  plan.record_id = record_id;
  plan.gamma_percent = gamma_percent;
  plan.selected_positions.assign(order.begin(), order.begin() + k);
  std::sort(plan.selected_positions.begin(), plan.selected_positions.end());

  std::vector<int> missing;
  for (int pos : plan.selected_positions) {
    const std::string& original = tokens[static_cast<size_t>(pos)].text;
    auto replacement = synonyms.synonym(original);
    if (!replacement || *replacement == original) {
      missing.push_back(pos);
      continue;
    }
    plan.originals[pos] = original;
    plan.replacements[pos] = *replacement;
  }
  if (!missing.empty()) {
    std::string positions;
    for (int pos : missing) positions += (positions.empty() ? "" : ", ") + std::to_string(pos);
    throw ValidationError("no synonym available for positions [" + positions + "] in '" +
                          record_id + "'");
  }

  // Splice right-to-left so earlier spans stay valid.
  std::string perturbed = text;
  for (auto it = plan.replacements.rbegin(); it != plan.replacements.rend(); ++it) {
    const Token& tok = tokens[static_cast<size_t>(it->first)];
    perturbed.replace(tok.begin, tok.end - tok.begin, it->second);
  }
  return {std::move(plan), std::move(perturbed)};
}

std::string invert_plan(const std::string& perturbed_text, const std::vector<Token>& tokens,
                        const PerturbationPlan& plan) {
  // Recompute spans in the perturbed string: positions before/after selected
  // spans shift by the replacement length deltas, left to right.
  std::string restored = perturbed_text;
  long shift = 0;
  for (int pos : plan.selected_positions) {
    const Token& tok = tokens[static_cast<size_t>(pos)];
    const std::string& replacement = plan.replacements.at(pos);
    const std::string& original = plan.originals.at(pos);
    const size_t begin = static_cast<size_t>(static_cast<long>(tok.begin) + shift);
    restored.replace(begin, replacement.size(), original);
    shift += static_cast<long>(original.size()) - static_cast<long>(replacement.size());
  }
  return restored;
}

double overlap_rate(const std::set<int>& a, const std::set<int>& b, int n_tokens,
                    OverlapKind kind) {
  for (int x : a)
    if (x < 0 || x >= n_tokens) throw ValidationError("selection index out of range");
  for (int x : b)
    if (x < 0 || x >= n_tokens) throw ValidationError("selection index out of range");
  std::vector<int> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  if (kind == OverlapKind::jaccard) {
    std::vector<int> uni;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
    if (uni.empty()) return 0.0;
    return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
  }
  const size_t k = std::max(a.size(), b.size());
  if (k == 0) return 0.0;
  return static_cast<double>(inter.size()) / static_cast<double>(k);
}

double expected_random_overlap(int n_tokens, int k, int trials, uint64_t seed, OverlapKind kind) {
  if (k <= 0 || k > n_tokens) throw ValidationError("invalid selection size for overlap baseline");
  std::mt19937_64 rng(seed);
  double total = 0;
  for (int t = 0; t < trials; ++t) {
    auto pick = [&]() {
      auto idx = sample_without_replacement(static_cast<size_t>(n_tokens),
                                            static_cast<size_t>(k), rng);
      return std::set<int>(idx.begin(), idx.end());
    };
    std::set<int> sel_a = pick();
    std::set<int> sel_b = pick();
    total += overlap_rate(sel_a, sel_b, n_tokens, kind);
  }
  return total / trials;
}

OverlapReport make_overlap_report(const std::vector<double>& per_text_overlap,
                                  double baseline_expectation) {
  OverlapReport report;
  report.per_text_overlap = per_text_overlap;
  report.baseline_expectation = baseline_expectation;
  double sum = 0;
  for (double x : per_text_overlap) sum += x;
  report.mean_overlap = per_text_overlap.empty() ? 0.0 : sum / per_text_overlap.size();
  return report;
}

}  // namespace veilprobe
