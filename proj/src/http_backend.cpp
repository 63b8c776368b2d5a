#include "veilprobe/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace veilprobe {

CompletionResponse HttpBackend::complete(const CompletionRequest& request) {
  request.validate();

  nlohmann::json body = {{"prompt", request.prefix},
                         {"max_tokens", request.max_new_tokens},
                         {"n", request.n_samples},
                         {"temperature", request.temperature}};
  if (request.seed) body["seed"] = *request.seed;

  httplib::Headers headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  std::string last_error;
  int backoff_ms = options_.initial_backoff_ms;
  const auto start = std::chrono::steady_clock::now();

  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    httplib::Client client(options_.host);
    client.set_read_timeout(options_.timeout_seconds, 0);
    client.set_connection_timeout(options_.timeout_seconds, 0);

    auto res = client.Post(options_.path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 500 || res->status == 429) {
      last_error = "server error: HTTP " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw BackendError(options_.name + ": HTTP " + std::to_string(res->status) + " " +
                         res->body.substr(0, 200));
    } else {
      nlohmann::json doc = nlohmann::json::parse(res->body, nullptr, false);
      if (doc.is_discarded())
        throw BackendError(options_.name + ": response is not JSON");
      CompletionResponse response;
      response.backend_id = options_.name;
      if (doc.contains("choices")) {
        for (const auto& choice : doc["choices"])
          response.suffixes.push_back(choice.value("text", ""));
      } else if (doc.contains("suffixes")) {
        response.suffixes = doc["suffixes"].get<std::vector<std::string>>();
      }
      if (static_cast<int>(response.suffixes.size()) != request.n_samples)
        throw BackendError(options_.name + ": expected " + std::to_string(request.n_samples) +
                           " suffixes, got " + std::to_string(response.suffixes.size()));
      response.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
              .count();
      return response;
    }
    if (attempt < options_.max_attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
  }
  throw BackendError(options_.name + ": failed after " + std::to_string(options_.max_attempts) +
                     " attempts (" + last_error + ")");
}

}  // namespace veilprobe
