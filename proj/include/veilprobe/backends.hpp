#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "veilprobe/errors.hpp"

namespace veilprobe {

struct CompletionRequest {
  std::string prefix;
  int n_samples = 1;
  int max_new_tokens = 512;
  double temperature = 1.0;
  std::optional<uint64_t> seed;

  void validate() const {
    if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
    if (max_new_tokens < 1) throw ValidationError("max_new_tokens must be >= 1");
    if (temperature < 0) throw ValidationError("temperature must be >= 0");
    if (prefix.empty()) throw ValidationError("prefix must be non-empty");
  }

  // Canonical cache-key material; latency and transport details excluded.
  std::string cache_key_material(const std::string& backend_id) const;
};

struct CompletionResponse {
  std::vector<std::string> suffixes;  // |suffixes| == n_samples
  std::string backend_id;
  double latency_ms = 0.0;
};

struct Token {
  std::string text;
  size_t begin = 0;  // char span in the source text
  size_t end = 0;
};

struct TokenScoreTrace {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;                     // nats, teacher-forced
  std::vector<std::vector<double>> vocab_dists;     // optional, per position

  void validate() const {
    if (tokens.size() != logprobs.size())
      throw ValidationError("trace token/logprob count mismatch");
    if (!vocab_dists.empty() && vocab_dists.size() != tokens.size())
      throw ValidationError("trace vocab_dists count mismatch");
    for (const auto& dist : vocab_dists) {
      double sum = 0;
      for (double p : dist) sum += p;
      if (std::abs(sum - 1.0) > 1e-6)
        throw ValidationError("vocabulary distribution does not sum to 1");
    }
  }
};

struct BackendCapabilities {
  bool can_complete = false;
  bool can_score_tokens = false;
  std::string name;
};

// Target and proxy model abstraction. Completion is the only capability the
// detection pipeline needs from the target; token scoring exists for proxies
// and grey-box baselines. Implementations must be safe for concurrent calls.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendCapabilities capabilities() const = 0;

  virtual CompletionResponse complete(const CompletionRequest& request) {
    (void)request;
    throw CapabilityError("backend '" + capabilities().name + "' cannot complete");
  }
  virtual TokenScoreTrace score_tokens(const std::string& text) {
    (void)text;
    throw CapabilityError("backend '" + capabilities().name + "' cannot score tokens");
  }
  virtual std::vector<double> next_token_distribution(const std::string& context) {
    (void)context;
    throw CapabilityError("backend '" + capabilities().name + "' cannot score tokens");
  }
  // Tokenization of a scoring backend; spans index into the input text.
  virtual std::vector<Token> tokenize(const std::string& text) const {
    (void)text;
    throw CapabilityError("backend '" + capabilities().name + "' has no tokenizer");
  }
  virtual std::vector<std::string> vocab() const {
    throw CapabilityError("backend '" + capabilities().name + "' has no vocabulary");
  }
};

// Whitespace word tokens with char spans. Shared by the toy LMs and the
// perturber's span splicing.
std::vector<Token> whitespace_tokenize(const std::string& text);

// Deterministic completion-only mock: suffixes are a pure function of
// (prefix, seed, sample index). No scoring capabilities.
class MockCompletionBackend : public Backend {
 public:
  explicit MockCompletionBackend(std::string name = "mock") : name_(std::move(name)) {}
  BackendCapabilities capabilities() const override { return {true, false, name_}; }
  CompletionResponse complete(const CompletionRequest& request) override;

 private:
  std::string name_;
};

// Scoring-only toy emitting the uniform distribution at every position.
class UniformScoringBackend : public Backend {
 public:
  explicit UniformScoringBackend(int vocab_size, std::string name = "uniform")
      : vocab_size_(vocab_size), name_(std::move(name)) {}
  BackendCapabilities capabilities() const override { return {false, true, name_}; }
  TokenScoreTrace score_tokens(const std::string& text) override;
  std::vector<double> next_token_distribution(const std::string& context) override;
  std::vector<Token> tokenize(const std::string& text) const override {
    return whitespace_tokenize(text);
  }
  std::vector<std::string> vocab() const override;

 private:
  int vocab_size_;
  std::string name_;
};

double perplexity(const TokenScoreTrace& trace);

}  // namespace veilprobe
