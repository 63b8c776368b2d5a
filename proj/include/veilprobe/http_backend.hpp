#pragma once

#include <string>

#include "veilprobe/backends.hpp"

namespace veilprobe {

// Generic completion-over-HTTP backend. POSTs a JSON body
// {"prompt","max_tokens","n","temperature"[,"seed"]} to the configured path
// and expects {"choices":[{"text":...},...]} or {"suffixes":[...]} back.
// Bearer token read from VEILPROBE_API_KEY when present. Retries transport
// failures with exponential backoff before giving up.
class HttpBackend : public Backend {
 public:
  struct Options {
    std::string host;            // e.g. "http://localhost:8080"
    std::string path = "/v1/completions";
    std::string name = "http";
    std::string api_key_env = "VEILPROBE_API_KEY";
    int max_attempts = 3;
    int initial_backoff_ms = 100;
    int timeout_seconds = 120;
  };

  explicit HttpBackend(Options options) : options_(std::move(options)) {}

  BackendCapabilities capabilities() const override { return {true, false, options_.name}; }
  CompletionResponse complete(const CompletionRequest& request) override;

  const Options& options() const { return options_; }

 private:
  Options options_;
};

}  // namespace veilprobe
