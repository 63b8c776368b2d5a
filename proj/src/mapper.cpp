#include "veilprobe/mapper.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "veilprobe/util.hpp"

namespace veilprobe {

const char* feature_mode_name(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::full: return "full";
    case FeatureMode::full_lt: return "full-lt";
    case FeatureMode::ll: return "ll";
    default: return "llt";
  }
}

FeatureMode parse_feature_mode(const std::string& name) {
  const std::string n = to_lower(name);
  if (n == "full") return FeatureMode::full;
  if (n == "full-lt" || n == "full_lt") return FeatureMode::full_lt;
  if (n == "ll") return FeatureMode::ll;
  if (n == "llt") return FeatureMode::llt;
  throw ValidationError("unknown feature mode: " + name);
}

MappingModel::MappingModel(MappingModelConfig config, Tokenizer tokenizer)
    : config_(config), tokenizer_(std::move(tokenizer)) {
  config_.validate();
  build_params();
}

void MappingModel::build_params() {
  std::mt19937_64 rng(derive_seed(config_.seed, "mapper/init"));
  const int d = config_.model_dim;
  const int v = tokenizer_.vocab_size();
  const int hidden = 4 * d;

  auto weight = [&](int r, int c) { return make_param(xavier_init(r, c, rng)); };
  auto zeros = [&](int r, int c) { return make_param(Mat(r, c)); };
  auto ones = [&](int r, int c) { return make_param(Mat(r, c, 1.0)); };

  tok_embed_ = weight(v, d);
  pos_src_ = weight(config_.max_src_len, d);
  pos_tgt_ = weight(config_.max_tgt_len + 1, d);  // +1 for the <bos> slot

  auto make_attention = [&]() {
    Attention a;
    a.wq = weight(d, d); a.bq = zeros(1, d);
    a.wk = weight(d, d); a.bk = zeros(1, d);
    a.wv = weight(d, d); a.bv = zeros(1, d);
    a.wo = weight(d, d); a.bo = zeros(1, d);
    return a;
  };
  auto make_block = [&](bool with_cross) {
    Block b;
    b.ln1_g = ones(1, d); b.ln1_b = zeros(1, d);
    b.self_attn = make_attention();
    if (with_cross) {
      b.ln2_g = ones(1, d); b.ln2_b = zeros(1, d);
      b.cross_attn = make_attention();
    }
    b.ln3_g = ones(1, d); b.ln3_b = zeros(1, d);
    b.ffn_w1 = weight(d, hidden); b.ffn_b1 = zeros(1, hidden);
    b.ffn_w2 = weight(hidden, d); b.ffn_b2 = zeros(1, d);
    return b;
  };

  encoder_.clear();
  decoder_.clear();
  for (int i = 0; i < config_.n_layers_encoder; ++i) encoder_.push_back(make_block(false));
  for (int i = 0; i < config_.n_layers_decoder; ++i) decoder_.push_back(make_block(true));
  enc_ln_g_ = ones(1, d); enc_ln_b_ = zeros(1, d);
  dec_ln_g_ = ones(1, d); dec_ln_b_ = zeros(1, d);
  out_w_ = weight(d, v);
  out_b_ = zeros(1, v);
  register_params();
}

void MappingModel::register_params() {
  params_.clear();
  params_ = {tok_embed_, pos_src_, pos_tgt_};
  auto push_attention = [&](const Attention& a) {
    for (const auto& p : {a.wq, a.bq, a.wk, a.bk, a.wv, a.bv, a.wo, a.bo}) params_.push_back(p);
  };
  for (const auto& b : encoder_) {
    params_.push_back(b.ln1_g); params_.push_back(b.ln1_b);
    push_attention(b.self_attn);
    params_.push_back(b.ln3_g); params_.push_back(b.ln3_b);
    params_.push_back(b.ffn_w1); params_.push_back(b.ffn_b1);
    params_.push_back(b.ffn_w2); params_.push_back(b.ffn_b2);
  }
  for (const auto& b : decoder_) {
    params_.push_back(b.ln1_g); params_.push_back(b.ln1_b);
    push_attention(b.self_attn);
    params_.push_back(b.ln2_g); params_.push_back(b.ln2_b);
    push_attention(b.cross_attn);
    params_.push_back(b.ln3_g); params_.push_back(b.ln3_b);
    params_.push_back(b.ffn_w1); params_.push_back(b.ffn_b1);
    params_.push_back(b.ffn_w2); params_.push_back(b.ffn_b2);
  }
  for (const auto& p : {enc_ln_g_, enc_ln_b_, dec_ln_g_, dec_ln_b_, out_w_, out_b_})
    params_.push_back(p);
}

NodeRef MappingModel::attend(Tape& tape, const Attention& attn, NodeRef x, NodeRef memory,
                             bool causal) const {
  const int d = config_.model_dim;
  const int heads = config_.n_heads;
  const int dh = d / heads;
  NodeRef q = tape.add_rowwise(tape.matmul(x, attn.wq), attn.bq);
  NodeRef k = tape.add_rowwise(tape.matmul(memory, attn.wk), attn.bk);
  NodeRef v = tape.add_rowwise(tape.matmul(memory, attn.wv), attn.bv);

  NodeRef mask;
  if (causal) {
    const int m = x->value.rows;
    Mat mask_mat(m, memory->value.rows);
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < memory->value.rows; ++j) mask_mat.at(i, j) = -1e30;
    mask = tape.input(std::move(mask_mat));
  }

  std::vector<NodeRef> contexts;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    NodeRef qh = tape.slice_cols(q, h * dh, dh);
    NodeRef kh = tape.slice_cols(k, h * dh, dh);
    NodeRef vh = tape.slice_cols(v, h * dh, dh);
    NodeRef scores = tape.affine(tape.matmul_nt(qh, kh), scale, 0.0);
    if (mask) scores = tape.add(scores, mask);
    NodeRef weights = tape.softmax_rows(scores);
    contexts.push_back(tape.matmul(weights, vh));
  }
  NodeRef merged = heads == 1 ? contexts[0] : tape.concat_cols(contexts);
  return tape.add_rowwise(tape.matmul(merged, attn.wo), attn.bo);
}

std::vector<NodeRef> MappingModel::encode_graph(Tape& tape, const std::vector<int>& ids,
                                                NodeRef* memory_out) const {
  NodeRef x = tape.embedding(tok_embed_, ids);
  std::vector<int> positions(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
  x = tape.add(x, tape.embedding(pos_src_, positions));

  std::vector<NodeRef> block_outputs;
  for (const auto& b : encoder_) {
    NodeRef normed = tape.layernorm_rows(x, b.ln1_g, b.ln1_b);
    x = tape.add(x, attend(tape, b.self_attn, normed, normed, /*causal=*/false));
    NodeRef normed2 = tape.layernorm_rows(x, b.ln3_g, b.ln3_b);
    NodeRef ffn = tape.add_rowwise(
        tape.matmul(tape.relu(tape.add_rowwise(tape.matmul(normed2, b.ffn_w1), b.ffn_b1)),
                    b.ffn_w2),
        b.ffn_b2);
    x = tape.add(x, ffn);
    block_outputs.push_back(x);
  }
  if (memory_out) *memory_out = tape.layernorm_rows(x, enc_ln_g_, enc_ln_b_);
  return block_outputs;
}

std::vector<NodeRef> MappingModel::decode_graph(Tape& tape, const std::vector<int>& tgt_in,
                                                NodeRef memory, NodeRef* logits_out) const {
  NodeRef x = tape.embedding(tok_embed_, tgt_in);
  std::vector<int> positions(tgt_in.size());
  for (size_t i = 0; i < tgt_in.size(); ++i) positions[i] = static_cast<int>(i);
  x = tape.add(x, tape.embedding(pos_tgt_, positions));

  std::vector<NodeRef> block_outputs;
  for (const auto& b : decoder_) {
    NodeRef normed = tape.layernorm_rows(x, b.ln1_g, b.ln1_b);
    x = tape.add(x, attend(tape, b.self_attn, normed, normed, /*causal=*/true));
    NodeRef normed_cross = tape.layernorm_rows(x, b.ln2_g, b.ln2_b);
    x = tape.add(x, attend(tape, b.cross_attn, normed_cross, memory, /*causal=*/false));
    NodeRef normed_ffn = tape.layernorm_rows(x, b.ln3_g, b.ln3_b);
    NodeRef ffn = tape.add_rowwise(
        tape.matmul(tape.relu(tape.add_rowwise(tape.matmul(normed_ffn, b.ffn_w1), b.ffn_b1)),
                    b.ffn_w2),
        b.ffn_b2);
    x = tape.add(x, ffn);
    block_outputs.push_back(x);
  }
  if (logits_out) {
    NodeRef normed = tape.layernorm_rows(x, dec_ln_g_, dec_ln_b_);
    *logits_out = tape.add_rowwise(tape.matmul(normed, out_w_), out_b_);
  }
  return block_outputs;
}

std::vector<int> MappingModel::src_ids(const std::string& text, bool* truncated) const {
  std::vector<int> ids = tokenizer_.encode(text);
  if (ids.empty()) ids.push_back(Tokenizer::kUnk);
  if (truncated) *truncated = static_cast<int>(ids.size()) > config_.max_src_len;
  if (static_cast<int>(ids.size()) > config_.max_src_len)
    ids.resize(static_cast<size_t>(config_.max_src_len));
  return ids;
}

std::vector<int> MappingModel::tgt_ids(const std::string& text) const {
  std::vector<int> ids = tokenizer_.encode(text);
  if (static_cast<int>(ids.size()) > config_.max_tgt_len)
    ids.resize(static_cast<size_t>(config_.max_tgt_len));
  return ids;
}

std::pair<double, long> MappingModel::loss_and_grads(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& batch) {
  double total = 0;
  long tokens = 0;
  for (const auto& [src, tgt] : batch) {
    Tape tape;
    NodeRef memory;
    encode_graph(tape, src, &memory);
    std::vector<int> tgt_in = {Tokenizer::kBos};
    tgt_in.insert(tgt_in.end(), tgt.begin(), tgt.end());
    std::vector<int> tgt_out = tgt;
    tgt_out.push_back(Tokenizer::kEos);
    NodeRef logits;
    decode_graph(tape, tgt_in, memory, &logits);
    NodeRef loss = tape.cross_entropy_rows(logits, tgt_out);
    tape.backward(loss);
    total += loss->value.a[0];
    tokens += static_cast<long>(tgt_out.size());
  }
  return {total, tokens};
}

TrainReport MappingModel::train(const std::vector<std::pair<std::string, std::string>>& pairs) {
  if (pairs.empty()) throw ValidationError("cannot train mapping model on an empty pair set");
  std::vector<std::pair<std::vector<int>, std::vector<int>>> examples;
  for (const auto& [src, tgt] : pairs)
    examples.emplace_back(src_ids(src, nullptr), tgt_ids(tgt));

  AdamState adam;
  adam.lr = config_.learning_rate;
  zero_grads(params_);

  TrainReport report;
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    // Snapshot so a divergent epoch can be rolled back.
    std::vector<Mat> snapshot;
    snapshot.reserve(params_.size());
    for (const auto& p : params_) snapshot.push_back(p->value);

    auto order = shuffled_indices(examples.size(),
                                  derive_seed(config_.seed, "mapper/epoch/" + std::to_string(epoch)));
    double epoch_total = 0;
    long epoch_tokens = 0;
    size_t cursor = 0;
    bool diverged = false;
    while (cursor < order.size()) {
      std::vector<std::pair<std::vector<int>, std::vector<int>>> batch;
      for (int b = 0; b < config_.batch_size && cursor < order.size(); ++b, ++cursor)
        batch.push_back(examples[order[cursor]]);
      auto [loss, tokens] = loss_and_grads(batch);
      if (!std::isfinite(loss)) {
        diverged = true;
        break;
      }
      epoch_total += loss;
      epoch_tokens += tokens;
      adam.step(params_, 1.0 / static_cast<double>(tokens));
    }
    if (diverged) {
      for (size_t i = 0; i < params_.size(); ++i) params_[i]->value = snapshot[i];
      zero_grads(params_);
      throw NumericError("mapping model training diverged (non-finite loss) at epoch " +
                         std::to_string(epoch) + "; weights restored to last stable checkpoint");
    }
    report.epoch_nll.push_back(epoch_total / static_cast<double>(epoch_tokens));
  }
  report.final_nll = report.epoch_nll.empty() ? 0.0 : report.epoch_nll.back();
  return report;
}

double MappingModel::sequence_nll(const std::string& src_text, const std::string& tgt_text) const {
  Tape tape;
  NodeRef memory;
  encode_graph(tape, src_ids(src_text, nullptr), &memory);
  std::vector<int> tgt = tgt_ids(tgt_text);
  std::vector<int> tgt_in = {Tokenizer::kBos};
  tgt_in.insert(tgt_in.end(), tgt.begin(), tgt.end());
  std::vector<int> tgt_out = tgt;
  tgt_out.push_back(Tokenizer::kEos);
  NodeRef logits;
  decode_graph(tape, tgt_in, memory, &logits);
  NodeRef loss = tape.cross_entropy_rows(logits, tgt_out);
  return loss->value.a[0];
}

std::vector<double> MappingModel::stepwise_nlls(const std::string& src_text,
                                                const std::string& tgt_text) const {
  std::vector<int> tgt = tgt_ids(tgt_text);
  std::vector<int> tgt_out = tgt;
  tgt_out.push_back(Tokenizer::kEos);
  std::vector<double> out;
  for (size_t t = 0; t < tgt_out.size(); ++t) {
    Tape tape;
    NodeRef memory;
    encode_graph(tape, src_ids(src_text, nullptr), &memory);
    std::vector<int> tgt_in = {Tokenizer::kBos};
    tgt_in.insert(tgt_in.end(), tgt.begin(), tgt.begin() + static_cast<long>(t));
    NodeRef logits;
    decode_graph(tape, tgt_in, memory, &logits);
    // Last row predicts step t.
    const double* row = logits->value.row(logits->value.rows - 1);
    double mx = row[0];
    for (int j = 1; j < logits->value.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0;
    for (int j = 0; j < logits->value.cols; ++j) sum += std::exp(row[j] - mx);
    const double logprob = row[tgt_out[t]] - mx - std::log(sum);
    out.push_back(-logprob);
  }
  return out;
}

namespace {
std::vector<double> mean_pool(const Mat& m) {
  std::vector<double> out(static_cast<size_t>(m.cols), 0.0);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out[static_cast<size_t>(j)] += m.at(i, j);
  for (auto& x : out) x /= std::max(1, m.rows);
  return out;
}
std::vector<double> last_row(const Mat& m) {
  std::vector<double> out(static_cast<size_t>(m.cols));
  const double* row = m.row(m.rows - 1);
  std::copy(row, row + m.cols, out.begin());
  return out;
}
void append(std::vector<double>& dst, const std::vector<double>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}
}  // namespace

MappingFeature MappingModel::extract(const std::string& record_id, Variant variant,
                                     const std::string& text, FeatureMode mode,
                                     const std::string& stored_suffix) const {
  bool truncated = false;
  std::vector<int> src = src_ids(text, &truncated);
  Tape tape;
  NodeRef memory;
  std::vector<NodeRef> enc_blocks = encode_graph(tape, src, &memory);

  std::vector<int> tgt = tgt_ids(stored_suffix);
  std::vector<int> tgt_in = {Tokenizer::kBos};
  tgt_in.insert(tgt_in.end(), tgt.begin(), tgt.end());
  std::vector<NodeRef> dec_blocks = decode_graph(tape, tgt_in, memory, nullptr);

  MappingFeature feature;
  feature.record_id = record_id;
  feature.variant = variant;
  feature.mode = mode;
  feature.truncated = truncated;

  switch (mode) {
    case FeatureMode::full:
      for (const auto& b : enc_blocks) append(feature.vector, mean_pool(b->value));
      for (const auto& b : dec_blocks) append(feature.vector, mean_pool(b->value));
      break;
    case FeatureMode::full_lt:
      for (const auto& b : enc_blocks) append(feature.vector, last_row(b->value));
      for (const auto& b : dec_blocks) append(feature.vector, last_row(b->value));
      break;
    case FeatureMode::ll:
      append(feature.vector, mean_pool(enc_blocks.back()->value));
      append(feature.vector, mean_pool(dec_blocks.back()->value));
      break;
    case FeatureMode::llt:
      append(feature.vector, last_row(enc_blocks.back()->value));
      append(feature.vector, last_row(dec_blocks.back()->value));
      break;
  }
  for (double x : feature.vector)
    if (!std::isfinite(x)) throw NumericError("non-finite mapping feature for " + record_id);
  return feature;
}

std::vector<double> MappingModel::embed_text(const std::string& text) const {
  Tape tape;
  NodeRef memory;
  encode_graph(tape, src_ids(text, nullptr), &memory);
  std::vector<double> pooled = mean_pool(memory->value);
  double norm = 0;
  for (double x : pooled) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0)
    for (auto& x : pooled) x /= norm;
  return pooled;
}

int MappingModel::feature_dim(FeatureMode mode) const {
  const int d = config_.model_dim;
  switch (mode) {
    case FeatureMode::full:
    case FeatureMode::full_lt:
      return (config_.n_layers_encoder + config_.n_layers_decoder) * d;
    default:
      return 2 * d;
  }
}

MappingModel train_mapping_model(const PairSet& pairs, const MappingModelConfig& config,
                                 TrainReport* report) {
  config.validate();
  std::vector<std::pair<std::string, std::string>> examples;
  std::vector<std::string> corpus;
  for (const auto& p : pairs.pairs) {
    if (p.variant == Variant::perturbed && !config.include_perturbed_pairs) continue;
    examples.emplace_back(p.prefix, p.suffix);
    corpus.push_back(p.prefix);
    corpus.push_back(p.suffix);
  }
  if (examples.empty()) throw ValidationError("pair set has no training pairs");
  Tokenizer tokenizer = Tokenizer::fit(corpus, config.tokenizer_mode, config.max_vocab);
  MappingModel model(config, std::move(tokenizer));
  TrainReport r = model.train(examples);
  if (report) *report = r;
  return model;
}

PerturbationDelta perturbation_delta(const MappingFeature& original,
                                     const MappingFeature& perturbed) {
  if (original.record_id != perturbed.record_id)
    throw ValidationError("perturbation delta record mismatch: " + original.record_id + " vs " +
                          perturbed.record_id);
  if (original.mode != perturbed.mode)
    throw ValidationError("perturbation delta mode mismatch for " + original.record_id);
  if (original.vector.size() != perturbed.vector.size())
    throw ValidationError("perturbation delta dimension mismatch for " + original.record_id);
  PerturbationDelta delta;
  delta.record_id = original.record_id;
  delta.mode = original.mode;
  delta.vector.resize(original.vector.size());
  for (size_t i = 0; i < delta.vector.size(); ++i)
    delta.vector[i] = original.vector[i] - perturbed.vector[i];
  return delta;
}

namespace {
void write_mat_list(nlohmann::json& out, const std::vector<NodeRef>& params) {
  out = nlohmann::json::array();
  for (const auto& p : params) {
    out.push_back({{"rows", p->value.rows}, {"cols", p->value.cols}, {"data", p->value.a}});
  }
}
}  // namespace

void MappingModel::save(const std::filesystem::path& path) const {
  nlohmann::json doc;
  doc["schema_version"] = 1;
  doc["kind"] = "mapping_model";
  doc["config"] = {{"model_dim", config_.model_dim},
                   {"n_layers_encoder", config_.n_layers_encoder},
                   {"n_layers_decoder", config_.n_layers_decoder},
                   {"n_heads", config_.n_heads},
                   {"max_src_len", config_.max_src_len},
                   {"max_tgt_len", config_.max_tgt_len},
                   {"epochs", config_.epochs},
                   {"batch_size", config_.batch_size},
                   {"learning_rate", config_.learning_rate},
                   {"seed", config_.seed},
                   {"max_vocab", config_.max_vocab},
                   {"tokenizer_mode",
                    config_.tokenizer_mode == Tokenizer::Mode::word ? "word" : "character"},
                   {"include_perturbed_pairs", config_.include_perturbed_pairs}};
  doc["tokenizer"] = tokenizer_.to_json();
  write_mat_list(doc["params"], params_);
  write_file(path, doc.dump());
}

MappingModel MappingModel::load(const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded() || doc.value("kind", "") != "mapping_model")
    throw ParseError("not a mapping model checkpoint: " + path.string(), -1);
  if (doc.value("schema_version", 0) != 1)
    throw ValidationError("unsupported mapping model schema version");
  const auto& c = doc["config"];
  MappingModelConfig config;
  config.model_dim = c["model_dim"].get<int>();
  config.n_layers_encoder = c["n_layers_encoder"].get<int>();
  config.n_layers_decoder = c["n_layers_decoder"].get<int>();
  config.n_heads = c["n_heads"].get<int>();
  config.max_src_len = c["max_src_len"].get<int>();
  config.max_tgt_len = c["max_tgt_len"].get<int>();
  config.epochs = c["epochs"].get<int>();
  config.batch_size = c["batch_size"].get<int>();
  config.learning_rate = c["learning_rate"].get<double>();
  config.seed = c["seed"].get<uint64_t>();
  config.max_vocab = c["max_vocab"].get<int>();
  config.tokenizer_mode = c["tokenizer_mode"].get<std::string>() == "word"
                              ? Tokenizer::Mode::word
                              : Tokenizer::Mode::character;
  config.include_perturbed_pairs = c["include_perturbed_pairs"].get<bool>();
  MappingModel model(config, Tokenizer::from_json(doc["tokenizer"]));
  const auto& params = doc["params"];
  if (params.size() != model.params_.size())
    throw ValidationError("checkpoint parameter count mismatch");
  for (size_t i = 0; i < model.params_.size(); ++i) {
    Mat& value = model.params_[i]->value;
    if (params[i]["rows"].get<int>() != value.rows || params[i]["cols"].get<int>() != value.cols)
      throw ValidationError("checkpoint parameter shape mismatch at index " + std::to_string(i));
    value.a = params[i]["data"].get<std::vector<double>>();
  }
  return model;
}

void save_features(const std::vector<MappingFeature>& features,
                   const std::filesystem::path& bin_path) {
  if (features.empty()) throw ValidationError("no features to save");
  const size_t dim = features[0].vector.size();
  nlohmann::json sidecar;
  sidecar["schema_version"] = 1;
  sidecar["mode"] = feature_mode_name(features[0].mode);
  sidecar["dim"] = dim;
  sidecar["ids"] = nlohmann::json::array();
  for (const auto& f : features) {
    if (f.vector.size() != dim) throw ValidationError("inconsistent feature dimensions");
    sidecar["ids"].push_back({{"id", f.record_id},
                              {"variant", variant_name(f.variant)},
                              {"truncated", f.truncated}});
  }
  std::filesystem::create_directories(bin_path.parent_path().empty() ? "." : bin_path.parent_path());
  std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + bin_path.string());
  for (const auto& f : features)
    out.write(reinterpret_cast<const char*>(f.vector.data()),
              static_cast<std::streamsize>(dim * sizeof(double)));
  write_file(bin_path.string() + ".json", sidecar.dump());
}

std::vector<MappingFeature> load_features(const std::filesystem::path& bin_path) {
  nlohmann::json sidecar = nlohmann::json::parse(read_file(bin_path.string() + ".json"));
  const size_t dim = sidecar["dim"].get<size_t>();
  const FeatureMode mode = parse_feature_mode(sidecar["mode"].get<std::string>());
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + bin_path.string());
  std::vector<MappingFeature> features;
  for (const auto& entry : sidecar["ids"]) {
    MappingFeature f;
    f.record_id = entry["id"].get<std::string>();
    f.variant = entry["variant"].get<std::string>() == "perturbed" ? Variant::perturbed
                                                                   : Variant::original;
    f.truncated = entry["truncated"].get<bool>();
    f.mode = mode;
    f.vector.resize(dim);
    in.read(reinterpret_cast<char*>(f.vector.data()),
            static_cast<std::streamsize>(dim * sizeof(double)));
    if (!in) throw ParseError("feature file truncated: " + bin_path.string(), -1,
                              static_cast<long>(in.tellg()));
    features.push_back(std::move(f));
  }
  return features;
}

}  // namespace veilprobe
