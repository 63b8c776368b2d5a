#include "veilprobe/ngram_lm.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "veilprobe/util.hpp"

namespace veilprobe {

namespace {
constexpr const char* kSpecials[] = {"<eos>", "<bos>", "<unk>"};
}

void NgramLm::fit_vocab(const std::vector<std::string>& texts) {
  id_to_word_.clear();
  word_to_id_.clear();
  for (const char* s : kSpecials) {
    word_to_id_[s] = static_cast<int>(id_to_word_.size());
    id_to_word_.emplace_back(s);
  }
  for (const auto& text : texts) {
    for (const auto& tok : whitespace_tokenize(text)) {
      if (!word_to_id_.count(tok.text)) {
        word_to_id_[tok.text] = static_cast<int>(id_to_word_.size());
        id_to_word_.push_back(tok.text);
      }
    }
  }
}

std::vector<int> NgramLm::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& tok : whitespace_tokenize(text)) {
    auto it = word_to_id_.find(tok.text);
    ids.push_back(it == word_to_id_.end() ? kUnk : it->second);
  }
  return ids;
}

std::string NgramLm::decode(const std::vector<int>& ids) const {
  std::vector<std::string> words;
  for (int id : ids)
    if (id != kBos && id != kEos) words.push_back(id_to_word_.at(static_cast<size_t>(id)));
  return join(words, " ");
}

uint64_t NgramLm::context_key(const std::vector<int>& ids, size_t end, int width) const {
  // Hash of the last `width` ids before position `end`, bos-padded on the left.
  uint64_t h = 0xcbf29ce484222325ull ^ static_cast<uint64_t>(width) * 0x9e3779b97f4a7c15ull;
  for (int k = width; k >= 1; --k) {
    long pos = static_cast<long>(end) - k;
    int id = pos < 0 ? kBos : ids[static_cast<size_t>(pos)];
    h ^= static_cast<uint64_t>(id) + 0x9e3779b9;
    h *= 0x100000001b3ull;
  }
  return h;
}

void NgramLm::fit_base(const std::vector<std::string>& texts) {
  if (id_to_word_.empty()) throw ValidationError("fit_vocab must run before fit_base");
  const int width = config_.base_order - 1;
  for (const auto& text : texts) {
    std::vector<int> ids = encode(text);
    ids.push_back(kEos);
    for (size_t t = 0; t < ids.size(); ++t) {
      uint64_t key = context_key(ids, t, width);
      base_counts_[key][ids[t]] += 1.0;
      base_totals_[key] += 1.0;
    }
  }
}

void NgramLm::memorize(const std::vector<std::string>& texts, int repetitions) {
  if (id_to_word_.empty()) throw ValidationError("fit_vocab must run before memorize");
  if (repetitions <= 0) return;
  const int width = config_.order - 1;
  for (const auto& text : texts) {
    std::vector<int> ids = encode(text);
    ids.push_back(kEos);
    for (size_t t = 0; t < ids.size(); ++t) {
      uint64_t key = context_key(ids, t, width);
      memo_counts_[key][ids[t]] += static_cast<double>(repetitions);
      memo_totals_[key] += static_cast<double>(repetitions);
    }
  }
}

double NgramLm::base_prob(const std::vector<int>& context, int word) const {
  const int width = config_.base_order - 1;
  uint64_t key = context_key(context, context.size(), width);
  const double v = static_cast<double>(vocab_size());
  auto tot = base_totals_.find(key);
  double total = tot == base_totals_.end() ? 0.0 : tot->second;
  double count = 0.0;
  if (tot != base_totals_.end()) {
    const auto& row = base_counts_.at(key);
    auto it = row.find(word);
    if (it != row.end()) count = it->second;
  }
  return (count + config_.base_alpha / v) / (total + config_.base_alpha);
}

std::vector<double> NgramLm::next_distribution(const std::vector<int>& context) const {
  const size_t v = vocab_size();
  if (v == 0) throw ValidationError("model has no vocabulary");
  const int width = config_.order - 1;
  uint64_t key = context_key(context, context.size(), width);

  std::vector<double> dist(v, 0.0);
  auto tot = memo_totals_.find(key);
  const double memo_total = tot == memo_totals_.end() ? 0.0 : tot->second;
  const double denom = memo_total + config_.alpha;

  for (size_t w = 0; w < v; ++w)
    dist[w] = config_.alpha * base_prob(context, static_cast<int>(w)) / denom;
  if (memo_total > 0) {
    for (const auto& [word, count] : memo_counts_.at(key))
      dist[static_cast<size_t>(word)] += count / denom;
  }
  // <bos> is never emitted; fold its sliver into <unk> to keep the sum exact.
  dist[kUnk] += dist[kBos];
  dist[kBos] = 0.0;
  return dist;
}

std::vector<double> NgramLm::token_logprobs(const std::vector<int>& ids, bool include_eos) const {
  std::vector<int> seq = ids;
  if (include_eos) seq.push_back(kEos);
  std::vector<double> out;
  std::vector<int> context;
  for (size_t t = 0; t < seq.size(); ++t) {
    std::vector<double> dist = next_distribution(context);
    out.push_back(std::log(std::max(dist[static_cast<size_t>(seq[t])], 1e-300)));
    context.push_back(seq[t]);
  }
  return out;
}

double NgramLm::mean_nll(const std::vector<std::string>& texts) const {
  double total = 0;
  size_t count = 0;
  for (const auto& text : texts) {
    for (double lp : token_logprobs(encode(text), /*include_eos=*/true)) {
      total -= lp;
      ++count;
    }
  }
  if (count == 0) throw ValidationError("mean_nll over empty corpus");
  return total / static_cast<double>(count);
}

std::vector<int> NgramLm::complete_ids(const std::vector<int>& prefix, int max_new,
                                       double temperature, uint64_t seed) const {
  std::vector<int> context = prefix;
  std::vector<int> out;
  std::mt19937_64 rng(seed);
  for (int t = 0; t < max_new; ++t) {
    std::vector<double> dist = next_distribution(context);
    int chosen;
    if (temperature <= 0.0) {
      chosen = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    } else {
      // p^(1/T) renormalized; T == 1 reduces to the raw distribution.
      std::vector<double> weights(dist.size());
      double sum = 0;
      for (size_t i = 0; i < dist.size(); ++i) {
        weights[i] = dist[i] > 0 ? std::pow(dist[i], 1.0 / temperature) : 0.0;
        sum += weights[i];
      }
      double u = uniform_real(rng) * sum;
      chosen = static_cast<int>(dist.size()) - 1;
      double acc = 0;
      for (size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u <= acc) {
          chosen = static_cast<int>(i);
          break;
        }
      }
    }
    if (chosen == kEos) break;
    out.push_back(chosen);
    context.push_back(chosen);
  }
  return out;
}

void NgramLm::save(const std::filesystem::path& path) const {
  nlohmann::json doc;
  doc["schema_version"] = 1;
  doc["kind"] = "ngram_lm";
  doc["config"] = {{"order", config_.order},
                   {"base_order", config_.base_order},
                   {"alpha", config_.alpha},
                   {"base_alpha", config_.base_alpha}};
  doc["vocab"] = id_to_word_;
  auto dump_layer = [](const auto& counts) {
    nlohmann::json layer = nlohmann::json::array();
    for (const auto& [key, row] : counts) {
      nlohmann::json entry;
      entry["k"] = key;
      nlohmann::json words = nlohmann::json::array();
      for (const auto& [word, count] : row) words.push_back({word, count});
      entry["c"] = std::move(words);
      layer.push_back(std::move(entry));
    }
    return layer;
  };
  doc["base"] = dump_layer(base_counts_);
  doc["memo"] = dump_layer(memo_counts_);
  write_file(path, doc.dump());
}

NgramLm NgramLm::load(const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || doc.value("kind", "") != "ngram_lm")
    throw ParseError("not an ngram_lm checkpoint: " + path.string(), -1);
  if (doc.value("schema_version", 0) != 1)
    throw ValidationError("unsupported ngram_lm schema version in " + path.string());
  Config config;
  config.order = doc["config"]["order"].get<int>();
  config.base_order = doc["config"]["base_order"].get<int>();
  config.alpha = doc["config"]["alpha"].get<double>();
  config.base_alpha = doc["config"]["base_alpha"].get<double>();
  NgramLm lm(config);
  lm.id_to_word_ = doc["vocab"].get<std::vector<std::string>>();
  for (size_t i = 0; i < lm.id_to_word_.size(); ++i)
    lm.word_to_id_[lm.id_to_word_[i]] = static_cast<int>(i);
  auto load_layer = [](const nlohmann::json& layer, auto& counts, auto& totals) {
    for (const auto& entry : layer) {
      uint64_t key = entry["k"].get<uint64_t>();
      for (const auto& pair : entry["c"]) {
        int word = pair[0].get<int>();
        double count = pair[1].get<double>();
        counts[key][word] += count;
        totals[key] += count;
      }
    }
  };
  load_layer(doc["base"], lm.base_counts_, lm.base_totals_);
  load_layer(doc["memo"], lm.memo_counts_, lm.memo_totals_);
  return lm;
}

CompletionResponse NgramBackend::complete(const CompletionRequest& request) {
  request.validate();
  CompletionResponse response;
  response.backend_id = name_;
  const uint64_t base = request.seed.value_or(0);
  std::vector<int> prefix = lm_.encode(request.prefix);
  for (int s = 0; s < request.n_samples; ++s) {
    uint64_t seed =
        fnv1a64(request.prefix, derive_seed(base, name_ + "/sample/" + std::to_string(s)));
    std::vector<int> ids =
        lm_.complete_ids(prefix, request.max_new_tokens, request.temperature, seed);
    response.suffixes.push_back(lm_.decode(ids));
  }
  return response;
}

TokenScoreTrace NgramBackend::score_tokens(const std::string& text) {
  std::vector<Token> words = whitespace_tokenize(text);
  std::vector<int> ids = lm_.encode(text);
  if (ids.empty()) throw ValidationError("cannot score empty text");
  TokenScoreTrace trace;
  std::vector<int> context;
  for (size_t t = 0; t < ids.size(); ++t) {
    std::vector<double> dist = lm_.next_distribution(context);
    trace.tokens.push_back(words[t].text);
    trace.logprobs.push_back(std::log(std::max(dist[static_cast<size_t>(ids[t])], 1e-300)));
    trace.vocab_dists.push_back(std::move(dist));
    context.push_back(ids[t]);
  }
  trace.validate();
  return trace;
}

std::vector<double> NgramBackend::next_token_distribution(const std::string& context) {
  return lm_.next_distribution(lm_.encode(context));
}

}  // namespace veilprobe
