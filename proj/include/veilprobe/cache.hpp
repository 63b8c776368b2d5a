#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <mutex>

#include "veilprobe/backends.hpp"

namespace veilprobe {

// Response cache around any completion backend. Keys are a content hash of
// (backend_id, prefix, n_samples, max_new_tokens, temperature, seed); files
// live at <dir>/<backend_id>/<hash>.json and replay byte-for-byte. Writes are
// serialized per key.
class CachingBackend : public Backend {
 public:
  CachingBackend(std::shared_ptr<Backend> inner, std::filesystem::path cache_dir);

  BackendCapabilities capabilities() const override { return inner_->capabilities(); }
  CompletionResponse complete(const CompletionRequest& request) override;
  TokenScoreTrace score_tokens(const std::string& text) override { return inner_->score_tokens(text); }
  std::vector<double> next_token_distribution(const std::string& context) override {
    return inner_->next_token_distribution(context);
  }
  std::vector<Token> tokenize(const std::string& text) const override {
    return inner_->tokenize(text);
  }
  std::vector<std::string> vocab() const override { return inner_->vocab(); }

  std::filesystem::path cache_path(const CompletionRequest& request) const;
  size_t hits() const { return hits_; }
  size_t misses() const { return misses_; }

 private:
  std::shared_ptr<Backend> inner_;
  std::filesystem::path dir_;
  std::array<std::mutex, 64> key_locks_;
  std::atomic<size_t> hits_{0};
  std::atomic<size_t> misses_{0};
};

}  // namespace veilprobe
