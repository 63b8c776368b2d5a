#include "veilprobe/corpus.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "veilprobe/jsonl.hpp"
#include "veilprobe/util.hpp"

namespace veilprobe {

namespace {

Label label_from_json(const json& v, long line_no) {
  if (v.is_number_integer()) {
    int n = v.get<int>();
    if (n == 0) return Label::nonmember;
    if (n == 1) return Label::member;
    throw ParseError("label must be 0 or 1 at line " + std::to_string(line_no), line_no);
  }
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "member" || s == "1") return Label::member;
    if (s == "nonmember" || s == "0") return Label::nonmember;
    if (s == "unknown" || s.empty()) return Label::unknown;
  }
  throw ParseError("unrecognized label at line " + std::to_string(line_no), line_no);
}

void validate_and_append(RecordSet& set, TextRecord rec, std::set<std::string>& seen,
                         long line_no) {
  if (rec.id.empty())
    throw ValidationError("empty id at line " + std::to_string(line_no));
  if (trim(rec.text).empty())
    throw ValidationError("record '" + rec.id + "' has empty text (line " +
                          std::to_string(line_no) + ")");
  if (!seen.insert(rec.id).second)
    throw ValidationError("duplicate id '" + rec.id + "' at line " + std::to_string(line_no));
  set.records.push_back(std::move(rec));
}

// Minimal RFC-4180 CSV row reader: quoted fields, doubled quotes, embedded
// separators. Newlines inside quotes are not supported; rows are lines.
std::vector<std::string> parse_csv_row(const std::string& line, long line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c == '\r' && i + 1 == line.size()) {
      // drop trailing CR
    } else {
      cur += c;
    }
  }
  if (in_quotes)
    throw ParseError("unterminated quote at line " + std::to_string(line_no), line_no);
  fields.push_back(cur);
  return fields;
}

RecordSet load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  RecordSet set;
  set.provenance = path.string();
  std::string line;
  long line_no = 0;
  std::vector<std::string> header;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = parse_csv_row(line, line_no);
    if (header.empty()) {
      header = fields;
      continue;
    }
    if (fields.size() != header.size())
      throw ParseError("row has " + std::to_string(fields.size()) + " fields, header has " +
                           std::to_string(header.size()) + " at line " + std::to_string(line_no),
                       line_no);
    TextRecord rec;
    bool has_id = false, has_text = false;
    for (size_t i = 0; i < header.size(); ++i) {
      const std::string& key = header[i];
      const std::string& val = fields[i];
      if (key == "id") {
        rec.id = val;
        has_id = true;
      } else if (key == "text") {
        rec.text = val;
        has_text = true;
      } else if (key == "label") {
        if (!trim(val).empty()) rec.label = label_from_json(json(val), line_no);
      } else if (key == "doc_id") {
        if (!val.empty()) rec.doc_id = val;
      }
    }
    if (!has_id || !has_text)
      throw ParseError("row missing id or text column at line " + std::to_string(line_no),
                       line_no);
    validate_and_append(set, std::move(rec), seen, line_no);
  }
  return set;
}

RecordSet load_jsonl(const std::filesystem::path& path) {
  RecordSet set;
  set.provenance = path.string();
  std::set<std::string> seen;
  for_each_jsonl(path, [&](long line_no, const json& obj) {
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("text"))
      throw ParseError("row missing id or text at line " + std::to_string(line_no), line_no);
    TextRecord rec;
    rec.id = obj.at("id").get<std::string>();
    rec.text = obj.at("text").get<std::string>();
    if (obj.contains("label") && !obj.at("label").is_null())
      rec.label = label_from_json(obj.at("label"), line_no);
    if (obj.contains("doc_id") && !obj.at("doc_id").is_null())
      rec.doc_id = obj.at("doc_id").get<std::string>();
    if (obj.contains("length_bucket") && !obj.at("length_bucket").is_null())
      rec.length_bucket = obj.at("length_bucket").get<int>();
    validate_and_append(set, std::move(rec), seen, line_no);
  });
  return set;
}

}  // namespace

RecordSet load_records(const std::filesystem::path& path, CorpusFormat format) {
  return format == CorpusFormat::jsonl ? load_jsonl(path) : load_csv(path);
}

RecordSet load_records(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".csv") return load_records(path, CorpusFormat::csv);
  return load_records(path, CorpusFormat::jsonl);
}

void save_records(const RecordSet& records, const std::filesystem::path& path) {
  std::vector<json> rows;
  rows.reserve(records.records.size());
  for (const auto& r : records.records) {
    json obj = {{"id", r.id}, {"text", r.text}};
    if (r.label != Label::unknown) obj["label"] = (r.label == Label::member) ? 1 : 0;
    if (r.doc_id) obj["doc_id"] = *r.doc_id;
    if (r.length_bucket) obj["length_bucket"] = *r.length_bucket;
    rows.push_back(std::move(obj));
  }
  write_jsonl(path, rows);
}

SupportSplit split_support(const RecordSet& records, int n_support, uint64_t seed) {
  if (n_support < 2) throw ValidationError("n_support must be >= 2 to cover both classes");
  std::vector<size_t> members, nonmembers;
  for (size_t i = 0; i < records.records.size(); ++i) {
    if (records.records[i].label == Label::member) members.push_back(i);
    else if (records.records[i].label == Label::nonmember) nonmembers.push_back(i);
  }
  // Balanced within one; the odd seat goes to `member` (first alphabetically).
  const int want_member = (n_support + 1) / 2;
  const int want_nonmember = n_support / 2;
  if (static_cast<int>(members.size()) < want_member ||
      static_cast<int>(nonmembers.size()) < want_nonmember) {
    throw ValidationError(
        "insufficient labeled records for support split: need " + std::to_string(want_member) +
        " members and " + std::to_string(want_nonmember) + " nonmembers, have " +
        std::to_string(members.size()) + " and " + std::to_string(nonmembers.size()));
  }

  auto pick = [&](std::vector<size_t>& pool, int count, std::string_view tag) {
    auto order = shuffled_indices(pool.size(), derive_seed(seed, tag));
    std::vector<size_t> chosen(order.begin(), order.begin() + count);
    std::vector<size_t> out;
    for (size_t k : chosen) out.push_back(pool[k]);
    return out;
  };
  auto chosen_members = pick(members, want_member, "split/member");
  auto chosen_nonmembers = pick(nonmembers, want_nonmember, "split/nonmember");

  std::set<size_t> in_support(chosen_members.begin(), chosen_members.end());
  in_support.insert(chosen_nonmembers.begin(), chosen_nonmembers.end());

  SupportSplit out;
  out.seed = seed;
  out.support.provenance = records.provenance + "#support";
  out.detect.provenance = records.provenance + "#detect";
  for (size_t i = 0; i < records.records.size(); ++i) {
    if (in_support.count(i)) out.support.records.push_back(records.records[i]);
    else out.detect.records.push_back(records.records[i]);
  }
  return out;
}

std::map<std::string, std::vector<std::string>> group_documents(const RecordSet& records) {
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& r : records.records) {
    const std::string key = r.doc_id ? *r.doc_id : r.id;
    groups[key].push_back(r.id);
  }
  return groups;
}

void assign_length_buckets(RecordSet& records, const std::vector<int>& buckets,
                           const std::function<int(const std::string&)>& count_tokens) {
  if (buckets.empty()) throw ValidationError("no length buckets configured");
  std::vector<int> sorted = buckets;
  std::sort(sorted.begin(), sorted.end());
  for (auto& r : records.records) {
    const int n = count_tokens(r.text);
    int chosen = sorted.back();
    for (int b : sorted) {
      if (n <= b) {
        chosen = b;
        break;
      }
    }
    r.length_bucket = chosen;
  }
}

}  // namespace veilprobe
