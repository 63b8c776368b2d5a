#include "veilprobe/sampler.hpp"

#include <atomic>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "veilprobe/jsonl.hpp"
#include "veilprobe/util.hpp"

namespace veilprobe {

std::vector<std::string> PairSet::suffixes_for(const std::string& record_id,
                                               Variant variant) const {
  std::vector<const SuffixPair*> matches;
  for (const auto& p : pairs)
    if (p.record_id == record_id && p.variant == variant) matches.push_back(&p);
  std::sort(matches.begin(), matches.end(),
            [](const SuffixPair* a, const SuffixPair* b) { return a->sample_index < b->sample_index; });
  std::vector<std::string> out;
  for (const auto* p : matches) out.push_back(p->suffix);
  return out;
}

const SuffixPair* PairSet::find(const std::string& record_id, Variant variant,
                                int sample_index) const {
  for (const auto& p : pairs)
    if (p.record_id == record_id && p.variant == variant && p.sample_index == sample_index)
      return &p;
  return nullptr;
}

PairSet sample_pairs(const RecordSet& records,
                     const std::map<std::string, std::string>& variant_texts, Variant variant,
                     std::shared_ptr<Backend> backend, const SamplingConfig& config,
                     int parallel_width, const std::filesystem::path& partial_path) {
  config.validate();
  if (!backend->capabilities().can_complete)
    throw CapabilityError("backend '" + backend->capabilities().name + "' cannot complete");

  PairSet out;
  out.target_backend_id = backend->capabilities().name;
  out.sampling_config = config;

  struct Cell {
    size_t record_index;
    bool done = false;
    std::vector<std::string> suffixes;
    std::string prefix;
  };
  std::vector<Cell> cells;
  for (size_t i = 0; i < records.records.size(); ++i) {
    const auto& rec = records.records[i];
    auto it = variant_texts.find(rec.id);
    if (it == variant_texts.end())
      throw ValidationError("no prefix text supplied for record '" + rec.id + "'");
    if (trim(it->second).empty())
      throw ValidationError("empty prefix text for record '" + rec.id + "'");
    cells.push_back({i, false, {}, it->second});
  }

  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_lock;

  auto worker = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= cells.size() || failed.load()) return;
      Cell& cell = cells[i];
      CompletionRequest request;
      request.prefix = cell.prefix;
      request.n_samples = config.n_samples;
      request.max_new_tokens = config.max_new_tokens;
      request.temperature = config.temperature;
      // Per-record seed keeps samples independent and replayable.
      request.seed = derive_seed(config.seed, records.records[cell.record_index].id + "/" +
                                                  variant_name(variant));
      try {
        CompletionResponse response = backend->complete(request);
        cell.suffixes = response.suffixes;
        cell.done = true;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> guard(error_lock);
        if (first_error.empty()) first_error = e.what();
        failed.store(true);
        return;
      }
    }
  };

  const int width = std::max(1, std::min<int>(parallel_width, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int w = 0; w < width; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  // Deterministic assembly in (record order, sample index) order.
  for (const Cell& cell : cells) {
    if (!cell.done) continue;
    const auto& rec = records.records[cell.record_index];
    for (int s = 0; s < config.n_samples; ++s) {
      SuffixPair pair;
      pair.record_id = rec.id;
      pair.variant = variant;
      pair.sample_index = s;
      pair.prefix = cell.prefix;
      pair.suffix = cell.suffixes[static_cast<size_t>(s)];
      out.pairs.push_back(std::move(pair));
    }
  }

  if (failed.load()) {
    if (!partial_path.empty()) save_pairs(out, partial_path);
    throw BackendError("sampling aborted after backend failure (" + first_error + "); " +
                       std::to_string(out.pairs.size()) + " pairs persisted, rerun to resume");
  }
  return out;
}

void save_pairs(const PairSet& pairs, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  json header = {{"schema_version", pairs.schema_version},
                 {"target_backend_id", pairs.target_backend_id},
                 {"n_samples", pairs.sampling_config.n_samples},
                 {"max_new_tokens", pairs.sampling_config.max_new_tokens},
                 {"temperature", pairs.sampling_config.temperature},
                 {"seed", pairs.sampling_config.seed}};
  out << header.dump() << "\n";
  for (const auto& p : pairs.pairs) {
    json row = {{"id", p.record_id},
                {"variant", variant_name(p.variant)},
                {"sample", p.sample_index},
                {"prefix", p.prefix},
                {"suffix", p.suffix}};
    out << row.dump() << "\n";
  }
}

PairSet load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  PairSet out;
  std::string line;
  long line_no = 0;
  long byte_offset = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    long line_start = byte_offset;
    byte_offset += static_cast<long>(line.size()) + 1;
    if (trim(line).empty()) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded())
      throw ParseError(path.string() + ": malformed pair file at line " + std::to_string(line_no) +
                           " (byte offset " + std::to_string(line_start) + ")",
                       line_no, line_start);
    if (!have_header) {
      if (!obj.contains("schema_version"))
        throw ParseError(path.string() + ": missing header line", line_no, line_start);
      const int version = obj["schema_version"].get<int>();
      if (version != 1)
        throw ValidationError(path.string() + ": unsupported pair schema version " +
                              std::to_string(version));
      out.schema_version = version;
      out.target_backend_id = obj.value("target_backend_id", "");
      out.sampling_config.n_samples = obj.value("n_samples", 1);
      out.sampling_config.max_new_tokens = obj.value("max_new_tokens", 512);
      out.sampling_config.temperature = obj.value("temperature", 1.0);
      out.sampling_config.seed = obj.value("seed", uint64_t{0});
      have_header = true;
      continue;
    }
    SuffixPair pair;
    pair.record_id = obj.at("id").get<std::string>();
    pair.variant = obj.at("variant").get<std::string>() == "perturbed" ? Variant::perturbed
                                                                       : Variant::original;
    pair.sample_index = obj.at("sample").get<int>();
    pair.prefix = obj.at("prefix").get<std::string>();
    pair.suffix = obj.at("suffix").get<std::string>();
    if (pair.sample_index < 0 || pair.sample_index >= out.sampling_config.n_samples)
      throw ValidationError(path.string() + ": sample index out of range at line " +
                            std::to_string(line_no));
    out.pairs.push_back(std::move(pair));
  }
  if (!have_header) throw ParseError(path.string() + ": empty pair file, no header", 1, 0);
  return out;
}

}  // namespace veilprobe
