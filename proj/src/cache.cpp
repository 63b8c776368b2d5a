#include "veilprobe/cache.hpp"

#include <json.hpp>

#include "veilprobe/util.hpp"

namespace veilprobe {

CachingBackend::CachingBackend(std::shared_ptr<Backend> inner, std::filesystem::path cache_dir)
    : inner_(std::move(inner)), dir_(std::move(cache_dir)) {}

std::filesystem::path CachingBackend::cache_path(const CompletionRequest& request) const {
  const std::string backend_id = inner_->capabilities().name;
  const uint64_t key = fnv1a64(request.cache_key_material(backend_id));
  return dir_ / backend_id / (hex64(key) + ".json");
}

CompletionResponse CachingBackend::complete(const CompletionRequest& request) {
  request.validate();
  const std::filesystem::path path = cache_path(request);
  const uint64_t key = fnv1a64(path.string());
  std::mutex& lock = key_locks_[key % key_locks_.size()];

  {
    std::lock_guard<std::mutex> guard(lock);
    if (std::filesystem::exists(path)) {
      nlohmann::json doc = nlohmann::json::parse(read_file(path), nullptr, false);
      if (!doc.is_discarded() && doc.contains("suffixes")) {
        ++hits_;
        CompletionResponse response;
        response.suffixes = doc["suffixes"].get<std::vector<std::string>>();
        response.backend_id = doc["backend_id"].get<std::string>();
        response.latency_ms = 0.0;
        return response;
      }
    }
  }

  CompletionResponse response = inner_->complete(request);
  ++misses_;
  nlohmann::json doc = {{"backend_id", response.backend_id}, {"suffixes", response.suffixes}};
  const std::string bytes = doc.dump();
  {
    std::lock_guard<std::mutex> guard(lock);
    if (!std::filesystem::exists(path)) write_file(path, bytes);
  }
  return response;
}

}  // namespace veilprobe
