#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "veilprobe/sampler.hpp"
#include "veilprobe/tensor.hpp"
#include "veilprobe/tokenizer.hpp"

namespace veilprobe {

// Hidden-state volumes for feature extraction.
enum class FeatureMode { full, full_lt, ll, llt };

const char* feature_mode_name(FeatureMode mode);
FeatureMode parse_feature_mode(const std::string& name);

struct MappingModelConfig {
  int model_dim = 32;
  int n_layers_encoder = 2;
  int n_layers_decoder = 2;
  int n_heads = 4;
  int max_src_len = 64;
  int max_tgt_len = 64;
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 3e-3;
  uint64_t seed = 0;
  int max_vocab = 512;
  Tokenizer::Mode tokenizer_mode = Tokenizer::Mode::character;
  bool include_perturbed_pairs = false;  // optional extra training data

  void validate() const {
    if (model_dim < 1 || n_heads < 1 || model_dim % n_heads != 0)
      throw ValidationError("model_dim must be a positive multiple of n_heads");
    if (n_layers_encoder < 1 || n_layers_decoder < 1)
      throw ValidationError("encoder and decoder need at least one layer");
    if (max_src_len < 1 || max_tgt_len < 1) throw ValidationError("max lengths must be positive");
    if (epochs < 1 || batch_size < 1) throw ValidationError("epochs and batch_size must be positive");
    if (learning_rate <= 0) throw ValidationError("learning_rate must be positive");
  }
};

struct MappingFeature {
  std::string record_id;
  Variant variant = Variant::original;
  FeatureMode mode = FeatureMode::full;
  std::vector<double> vector;
  bool truncated = false;  // source exceeded max_src_len
};

struct PerturbationDelta {
  std::string record_id;
  FeatureMode mode = FeatureMode::full;
  std::vector<double> vector;  // original - perturbed, elementwise
};

struct TrainReport {
  std::vector<double> epoch_nll;  // mean nats per target token, per epoch
  double final_nll = 0.0;
};

// Encoder-decoder transformer trained teacher-forced on text-to-suffix pairs.
// Doubles throughout; deterministic per seed on one thread.
class MappingModel {
 public:
  MappingModel(MappingModelConfig config, Tokenizer tokenizer);

  TrainReport train(const std::vector<std::pair<std::string, std::string>>& pairs);

  // Total teacher-forced NLL (nats, summed over target steps incl. <eos>).
  double sequence_nll(const std::string& src_text, const std::string& tgt_text) const;
  // The same quantity assembled from one decoder rerun per step; exercises
  // causal masking independently of the single-pass route.
  std::vector<double> stepwise_nlls(const std::string& src_text, const std::string& tgt_text) const;

  MappingFeature extract(const std::string& record_id, Variant variant, const std::string& text,
                         FeatureMode mode, const std::string& stored_suffix) const;

  // Mean-pooled final encoder state, L2-normalized. Used as the built-in
  // semantic embedder.
  std::vector<double> embed_text(const std::string& text) const;

  int feature_dim(FeatureMode mode) const;
  const MappingModelConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  std::vector<NodeRef>& parameters() { return params_; }

  // Forward pass over one batch accumulating gradients on the parameters;
  // returns summed CE over the batch in nats and the target-token count.
  std::pair<double, long> loss_and_grads(
      const std::vector<std::pair<std::vector<int>, std::vector<int>>>& batch);

  void save(const std::filesystem::path& path) const;
  static MappingModel load(const std::filesystem::path& path);

 private:
  struct Attention {
    NodeRef wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct Block {
    NodeRef ln1_g, ln1_b;
    Attention self_attn;
    NodeRef ln2_g, ln2_b;
    Attention cross_attn;  // decoder only
    NodeRef ln3_g, ln3_b;
    NodeRef ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };

  void build_params();
  void register_params();
  NodeRef attend(Tape& tape, const Attention& attn, NodeRef x, NodeRef memory, bool causal) const;
  // Returns per-block outputs; `memory_out` receives the final normalized state.
  std::vector<NodeRef> encode_graph(Tape& tape, const std::vector<int>& src_ids,
                                    NodeRef* memory_out) const;
  std::vector<NodeRef> decode_graph(Tape& tape, const std::vector<int>& tgt_in, NodeRef memory,
                                    NodeRef* logits_out) const;
  std::vector<int> src_ids(const std::string& text, bool* truncated) const;
  std::vector<int> tgt_ids(const std::string& text) const;

  MappingModelConfig config_;
  Tokenizer tokenizer_;
  NodeRef tok_embed_, pos_src_, pos_tgt_;
  std::vector<Block> encoder_, decoder_;
  NodeRef enc_ln_g_, enc_ln_b_, dec_ln_g_, dec_ln_b_;
  NodeRef out_w_, out_b_;
  std::vector<NodeRef> params_;
};

// Fits a tokenizer over the pair texts, builds the model, and trains it
// teacher-forced. Training uses original-variant pairs, plus perturbed ones
// when the config asks for them.
MappingModel train_mapping_model(const PairSet& pairs, const MappingModelConfig& config,
                                 TrainReport* report = nullptr);

PerturbationDelta perturbation_delta(const MappingFeature& original,
                                     const MappingFeature& perturbed);

// Feature matrix persistence: raw little-endian doubles plus a JSON sidecar
// describing ids, mode, and dimensions.
void save_features(const std::vector<MappingFeature>& features,
                   const std::filesystem::path& bin_path);
std::vector<MappingFeature> load_features(const std::filesystem::path& bin_path);

}  // namespace veilprobe
