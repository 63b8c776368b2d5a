#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "veilprobe/errors.hpp"

namespace veilprobe {

// Self-contained corpus-fitted tokenizer for the mapping model. Character
// mode suits arbitrary text; word mode keeps sequences short for word-like
// corpora. Vocabulary is capped by frequency; everything else maps to <unk>.
class Tokenizer {
 public:
  enum class Mode { character, word };

  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Tokenizer() = default;

  static Tokenizer fit(const std::vector<std::string>& corpus, Mode mode, int max_vocab = 512);

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;
  int vocab_size() const { return static_cast<int>(id_to_piece_.size()); }
  Mode mode() const { return mode_; }

  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& doc);

 private:
  Mode mode_ = Mode::character;
  std::vector<std::string> id_to_piece_;
  std::unordered_map<std::string, int> piece_to_id_;
};

}  // namespace veilprobe
