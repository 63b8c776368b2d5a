#include "veilprobe/tokenizer.hpp"

#include <algorithm>
#include <map>

#include "veilprobe/backends.hpp"

namespace veilprobe {

namespace {
const char* kSpecials[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

std::vector<std::string> pieces_of(const std::string& text, Tokenizer::Mode mode) {
  std::vector<std::string> out;
  if (mode == Tokenizer::Mode::word) {
    for (const auto& tok : whitespace_tokenize(text)) out.push_back(tok.text);
  } else {
    // UTF-8 aware character split; multibyte sequences stay intact.
    size_t i = 0;
    while (i < text.size()) {
      size_t len = 1;
      const unsigned char c = static_cast<unsigned char>(text[i]);
      if ((c & 0xE0) == 0xC0) len = 2;
      else if ((c & 0xF0) == 0xE0) len = 3;
      else if ((c & 0xF8) == 0xF0) len = 4;
      len = std::min(len, text.size() - i);
      out.push_back(text.substr(i, len));
      i += len;
    }
  }
  return out;
}
}  // namespace

Tokenizer Tokenizer::fit(const std::vector<std::string>& corpus, Mode mode, int max_vocab) {
  if (max_vocab <= 4) throw ValidationError("tokenizer vocabulary cap too small");
  std::map<std::string, long> freq;
  for (const auto& text : corpus)
    for (const auto& piece : pieces_of(text, mode)) ++freq[piece];

  std::vector<std::pair<std::string, long>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;  // stable tie order
  });

  Tokenizer tok;
  tok.mode_ = mode;
  for (const char* s : kSpecials) {
    tok.piece_to_id_[s] = static_cast<int>(tok.id_to_piece_.size());
    tok.id_to_piece_.emplace_back(s);
  }
  for (const auto& [piece, count] : ranked) {
    if (static_cast<int>(tok.id_to_piece_.size()) >= max_vocab) break;
    tok.piece_to_id_[piece] = static_cast<int>(tok.id_to_piece_.size());
    tok.id_to_piece_.push_back(piece);
  }
  return tok;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& piece : pieces_of(text, mode_)) {
    auto it = piece_to_id_.find(piece);
    ids.push_back(it == piece_to_id_.end() ? kUnk : it->second);
  }
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::vector<std::string> parts;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    parts.push_back(id_to_piece_.at(static_cast<size_t>(id)));
  }
  std::string sep = mode_ == Mode::word ? " " : "";
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

nlohmann::json Tokenizer::to_json() const {
  return {{"mode", mode_ == Mode::word ? "word" : "character"}, {"pieces", id_to_piece_}};
}

Tokenizer Tokenizer::from_json(const nlohmann::json& doc) {
  Tokenizer tok;
  tok.mode_ = doc.at("mode").get<std::string>() == "word" ? Mode::word : Mode::character;
  tok.id_to_piece_ = doc.at("pieces").get<std::vector<std::string>>();
  for (size_t i = 0; i < tok.id_to_piece_.size(); ++i)
    tok.piece_to_id_[tok.id_to_piece_[i]] = static_cast<int>(i);
  return tok;
}

}  // namespace veilprobe
