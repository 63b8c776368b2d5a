#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "veilprobe/backends.hpp"

namespace veilprobe {

// Word-level causal language model: an interpolated n-gram with a smoothed
// lower-order base distribution. Memorized counts are layered on top of the
// base, scaled by a repetition factor (the memorization knob the synthetic
// benchmark turns). Fully deterministic; serves as both the desk-scale target
// LM and the proxy family.
class NgramLm {
 public:
  struct Config {
    int order = 4;        // context length = order - 1
    int base_order = 2;   // base model context length = base_order - 1
    double alpha = 1.0;   // weight of the base distribution inside the mixture
    double base_alpha = 0.5;  // add-alpha smoothing toward uniform in the base
  };

  static constexpr int kEos = 0;
  static constexpr int kBos = 1;
  static constexpr int kUnk = 2;

  NgramLm() = default;
  explicit NgramLm(Config config) : config_(config) {}

  // Vocabulary is fixed up front from a corpus sample; unseen words map to <unk>.
  void fit_vocab(const std::vector<std::string>& texts);
  // Base distribution counts, typically from a held-out corpus sample.
  void fit_base(const std::vector<std::string>& texts);
  // Adds `repetitions` copies of each text's n-gram counts to the memorized layer.
  void memorize(const std::vector<std::string>& texts, int repetitions);

  const Config& config() const { return config_; }
  size_t vocab_size() const { return id_to_word_.size(); }
  const std::vector<std::string>& vocab_words() const { return id_to_word_; }

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  // P(next | context), a proper distribution over the whole vocabulary.
  std::vector<double> next_distribution(const std::vector<int>& context) const;

  // Teacher-forced per-token log-likelihoods of the (bos-padded) text,
  // including the terminal <eos> when `include_eos` is set.
  std::vector<double> token_logprobs(const std::vector<int>& ids, bool include_eos) const;

  // Mean per-token negative log-likelihood over a set of texts.
  double mean_nll(const std::vector<std::string>& texts) const;

  // Samples until <eos> or max_new tokens. temperature == 0 is greedy argmax
  // (ties to the lowest id).
  std::vector<int> complete_ids(const std::vector<int>& prefix, int max_new, double temperature,
                                uint64_t seed) const;

  void save(const std::filesystem::path& path) const;
  static NgramLm load(const std::filesystem::path& path);

 private:
  uint64_t context_key(const std::vector<int>& ids, size_t end, int width) const;
  double base_prob(const std::vector<int>& context, int word) const;

  Config config_;
  std::vector<std::string> id_to_word_;
  std::unordered_map<std::string, int> word_to_id_;

  // context key -> (word -> count)
  std::unordered_map<uint64_t, std::unordered_map<int, double>> base_counts_;
  std::unordered_map<uint64_t, double> base_totals_;
  std::unordered_map<uint64_t, std::unordered_map<int, double>> memo_counts_;
  std::unordered_map<uint64_t, double> memo_totals_;
};

// Backend view over an NgramLm: full capabilities (complete + score).
class NgramBackend : public Backend {
 public:
  NgramBackend(NgramLm lm, std::string name) : lm_(std::move(lm)), name_(std::move(name)) {}

  BackendCapabilities capabilities() const override { return {true, true, name_}; }
  CompletionResponse complete(const CompletionRequest& request) override;
  TokenScoreTrace score_tokens(const std::string& text) override;
  std::vector<double> next_token_distribution(const std::string& context) override;
  std::vector<Token> tokenize(const std::string& text) const override {
    return whitespace_tokenize(text);
  }
  std::vector<std::string> vocab() const override { return lm_.vocab_words(); }

  const NgramLm& lm() const { return lm_; }

 private:
  NgramLm lm_;
  std::string name_;
};

}  // namespace veilprobe
