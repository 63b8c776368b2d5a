#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "veilprobe/backends.hpp"
#include "veilprobe/corpus.hpp"

namespace veilprobe {

enum class Variant { original, perturbed };

inline const char* variant_name(Variant v) {
  return v == Variant::original ? "original" : "perturbed";
}

struct SuffixPair {
  std::string record_id;
  Variant variant = Variant::original;
  int sample_index = 0;
  std::string prefix;
  std::string suffix;  // completion only, stored verbatim
};

struct SamplingConfig {
  int n_samples = 3;
  int max_new_tokens = 512;
  double temperature = 1.0;
  uint64_t seed = 0;

  void validate() const {
    if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
    if (max_new_tokens < 1) throw ValidationError("max_new_tokens must be >= 1");
    if (temperature < 0) throw ValidationError("temperature must be >= 0");
  }
};

struct PairSet {
  std::vector<SuffixPair> pairs;
  std::string target_backend_id;
  SamplingConfig sampling_config;
  int schema_version = 1;

  // Suffixes of one record/variant ordered by sample index.
  std::vector<std::string> suffixes_for(const std::string& record_id, Variant variant) const;
  const SuffixPair* find(const std::string& record_id, Variant variant, int sample_index) const;
};

// Requests n_samples completions per record, bounded-parallel across records,
// and assembles results in (record order, sample index) order. `variant_texts`
// supplies the prefix per record id: the record's own text for the original
// variant, the perturbed text otherwise. On backend failure the pairs built
// so far are persisted to `partial_path` (when set) before the error
// propagates, so a rerun against a caching backend resumes where it stopped.
PairSet sample_pairs(const RecordSet& records,
                     const std::map<std::string, std::string>& variant_texts, Variant variant,
                     std::shared_ptr<Backend> backend, const SamplingConfig& config,
                     int parallel_width = 4,
                     const std::filesystem::path& partial_path = {});

void save_pairs(const PairSet& pairs, const std::filesystem::path& path);
PairSet load_pairs(const std::filesystem::path& path);

}  // namespace veilprobe
