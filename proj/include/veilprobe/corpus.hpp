#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace veilprobe {

enum class Label { nonmember = 0, member = 1, unknown = 2 };

inline const char* label_name(Label l) {
  switch (l) {
    case Label::member: return "member";
    case Label::nonmember: return "nonmember";
    default: return "unknown";
  }
}

struct TextRecord {
  std::string id;
  std::string text;
  Label label = Label::unknown;
  std::optional<std::string> doc_id;
  std::optional<int> length_bucket;
};

struct RecordSet {
  std::vector<TextRecord> records;
  std::string provenance;
  int schema_version = 1;

  const TextRecord* find(const std::string& id) const {
    for (const auto& r : records)
      if (r.id == id) return &r;
    return nullptr;
  }
  size_t size() const { return records.size(); }
};

struct SupportSplit {
  RecordSet support;  // labeled, both classes present
  RecordSet detect;   // everything else, unknown labels allowed
  uint64_t seed = 0;
};

enum class CorpusFormat { jsonl, csv };

// Loads records in file order. Rows need `id` and `text`; `label` (0/1) and
// `doc_id` are optional. Malformed rows raise ParseError naming the line,
// duplicate ids raise ValidationError.
RecordSet load_records(const std::filesystem::path& path, CorpusFormat format);

// Infers the format from the extension (.jsonl/.csv).
RecordSet load_records(const std::filesystem::path& path);

void save_records(const RecordSet& records, const std::filesystem::path& path);

// Picks n_support labeled records balanced to within one between classes
// (the odd seat goes to `member`, alphabetically first), deterministic per
// seed. Everything else lands in detect.
SupportSplit split_support(const RecordSet& records, int n_support, uint64_t seed);

// Groups record ids by doc_id; records without one form singleton groups
// keyed by their own id. Every id appears in exactly one group.
std::map<std::string, std::vector<std::string>> group_documents(const RecordSet& records);

// Assigns each record the smallest configured bucket that is >= its token
// count (or the largest bucket if the text exceeds all of them). `count_tokens`
// is supplied by the caller, normally the mapping model's tokenizer.
void assign_length_buckets(RecordSet& records, const std::vector<int>& buckets,
                           const std::function<int(const std::string&)>& count_tokens);

}  // namespace veilprobe
