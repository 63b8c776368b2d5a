#include "veilprobe/backends.hpp"

#include <cstdio>

#include "veilprobe/util.hpp"

namespace veilprobe {

std::string CompletionRequest::cache_key_material(const std::string& backend_id) const {
  char temp[40];
  std::snprintf(temp, sizeof(temp), "%.17g", temperature);
  std::string material = backend_id;
  material += '\x1f';
  material += prefix;
  material += '\x1f';
  material += std::to_string(n_samples);
  material += '\x1f';
  material += std::to_string(max_new_tokens);
  material += '\x1f';
  material += temp;
  material += '\x1f';
  material += seed ? std::to_string(*seed) : std::string("-");
  return material;
}

std::vector<Token> whitespace_tokenize(const std::string& text) {
  std::vector<Token> tokens;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    size_t begin = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    tokens.push_back({text.substr(begin, i - begin), begin, i});
  }
  return tokens;
}

CompletionResponse MockCompletionBackend::complete(const CompletionRequest& request) {
  request.validate();
  static const char* words[] = {"alpha", "bravo",  "cedar", "delta", "ember", "frost",
                                "grove", "harbor", "iris",  "jade",  "krill", "lumen",
                                "motif", "nadir",  "onyx",  "prism"};
  constexpr int n_words = 16;
  CompletionResponse response;
  response.backend_id = name_;
  response.suffixes.reserve(static_cast<size_t>(request.n_samples));
  const uint64_t base = request.seed.value_or(0);
  for (int s = 0; s < request.n_samples; ++s) {
    uint64_t h = fnv1a64(request.prefix, derive_seed(base, "mock/" + std::to_string(s)));
    std::mt19937_64 rng(h);
    const int len = 4 + static_cast<int>(rng() % 9);
    std::vector<std::string> out;
    for (int t = 0; t < std::min(len, request.max_new_tokens); ++t)
      out.push_back(words[rng() % n_words]);
    response.suffixes.push_back(join(out, " "));
  }
  return response;
}

TokenScoreTrace UniformScoringBackend::score_tokens(const std::string& text) {
  TokenScoreTrace trace;
  const double lp = -std::log(static_cast<double>(vocab_size_));
  for (const auto& tok : whitespace_tokenize(text)) {
    trace.tokens.push_back(tok.text);
    trace.logprobs.push_back(lp);
    trace.vocab_dists.emplace_back(vocab_size_, 1.0 / vocab_size_);
  }
  trace.validate();
  return trace;
}

std::vector<double> UniformScoringBackend::next_token_distribution(const std::string&) {
  return std::vector<double>(vocab_size_, 1.0 / vocab_size_);
}

std::vector<std::string> UniformScoringBackend::vocab() const {
  std::vector<std::string> v;
  for (int i = 0; i < vocab_size_; ++i) v.push_back("w" + std::to_string(i));
  return v;
}

double perplexity(const TokenScoreTrace& trace) {
  if (trace.logprobs.empty()) throw ValidationError("empty trace");
  double sum = 0;
  for (double lp : trace.logprobs) sum += lp;
  return std::exp(-sum / static_cast<double>(trace.logprobs.size()));
}

}  // namespace veilprobe
