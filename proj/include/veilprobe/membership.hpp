#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "veilprobe/mapper.hpp"
#include "veilprobe/tensor.hpp"

namespace veilprobe {

struct PValueVector {
  std::vector<double> p;
  std::string test_name = "welch";
  double threshold = 0.05;
};

struct CalibratedFeature {
  std::string record_id;
  std::vector<double> vector;       // zeros outside the critical dimensions
  std::vector<bool> critical_mask;
};

struct MembershipFeature {
  std::string record_id;
  std::vector<double> vector;  // mapping feature followed by calibrated delta
  size_t mapping_dim = 0;
  size_t dim() const { return vector.size(); }
};

// Two-sided two-sample Welch t-test p-value with Welch-Satterthwaite degrees
// of freedom. Columns with zero variance in both groups get p = 1.
double welch_p_value(const std::vector<double>& group_a, const std::vector<double>& group_b);

// Regularized incomplete beta I_x(a, b); exposed for the t-distribution path.
double incomplete_beta(double a, double b, double x);

// Per-column Welch p-values over member vs nonmember delta matrices
// (rows = samples, columns = feature dimensions).
PValueVector dimension_p_values(const std::vector<std::vector<double>>& deltas_members,
                                const std::vector<std::vector<double>>& deltas_nonmembers);

// Keeps dimensions with p < threshold, zeroes the rest.
CalibratedFeature select_critical(const std::vector<double>& delta, const PValueVector& pvals,
                                  const std::string& record_id = "");

MembershipFeature concat_features(const MappingFeature& zs, const CalibratedFeature& zc_tilde);

struct EncoderConfig {
  int embed_dim = 16;  // K
  double beta = 1e-3;  // compression weight; 0 gives a plain prototypical net
  int episodes = 300;
  int support_per_episode = 8;  // per class
  int query_per_episode = 8;    // per class
  double learning_rate = 5e-3;
  uint64_t seed = 0;
  int hidden_dim = 64;
  bool fixed_variance = false;  // unit-variance encoder, no sampling noise

  void validate() const {
    if (embed_dim < 1) throw ValidationError("embed_dim must be positive");
    if (beta < 0) throw ValidationError("beta must be nonnegative");
    if (episodes < 1) throw ValidationError("episodes must be positive");
    if (support_per_episode < 1 || query_per_episode < 1)
      throw ValidationError("episode sizes must be at least 1 per class");
    if (learning_rate <= 0) throw ValidationError("learning_rate must be positive");
  }
};

struct Prototype {
  int label = 0;  // 1 = member, 0 = nonmember
  std::vector<double> center;
};

struct DetectionResult {
  std::string record_id;
  double delta_score = 0.0;  // d0 - d1; positive leans member
  double d0 = 0.0;
  double d1 = 0.0;
  bool predicted_member = false;
};

// Prototype classifier over membership features: a stochastic Gaussian
// encoder trained episodically with a prototypical objective plus a
// beta-weighted KL compression penalty toward the standard normal prior.
// Inference uses encoder means only, so detection scores are repeatable.
class PrototypeClassifier {
 public:
  PrototypeClassifier() = default;

  struct TrainCurve {
    std::vector<double> episode_loss;
  };

  static PrototypeClassifier train(const std::vector<MembershipFeature>& support,
                                   const std::vector<int>& labels, const EncoderConfig& config,
                                   TrainCurve* curve = nullptr);

  std::pair<double, double> class_probabilities(const MembershipFeature& z) const;
  DetectionResult detection_score(const MembershipFeature& z) const;

  // Encoder mean embedding of a (standardized) feature vector.
  std::vector<double> embed(const std::vector<double>& feature) const;
  // Loss of one episode without updating weights; test hook for the beta = 0
  // reduction identity.
  double episode_loss(const std::vector<MembershipFeature>& support,
                      const std::vector<int>& labels, uint64_t episode_seed) const;

  const Prototype& prototype(int label) const;
  const EncoderConfig& config() const { return config_; }
  double decision_threshold() const { return decision_threshold_; }
  const PValueVector& p_values() const { return p_values_; }
  void set_p_values(PValueVector p) { p_values_ = std::move(p); }

  void save(const std::filesystem::path& path) const;
  static PrototypeClassifier load(const std::filesystem::path& path);

 private:
  struct Episode {
    std::vector<size_t> support_idx;
    std::vector<size_t> query_idx;
  };
  Episode sample_episode(const std::vector<size_t>& member_idx,
                         const std::vector<size_t>& nonmember_idx, std::mt19937_64& rng) const;
  NodeRef encode_graph(Tape& tape, NodeRef x, NodeRef* logvar_out) const;
  std::vector<double> standardize(const std::vector<double>& v) const;

  EncoderConfig config_;
  NodeRef w1_, b1_, w_mu_, b_mu_, w_lv_, b_lv_;
  std::vector<NodeRef> params_;
  std::vector<double> feat_mean_, feat_std_;  // fitted on support only
  Prototype proto_nonmember_, proto_member_;
  double decision_threshold_ = 0.0;
  PValueVector p_values_;  // carried for the checkpoint container
  friend struct ClassifierAccess;
};

// Picks the significance threshold from a grid by cross-validated AUC on the
// support set: per fold, p-values and the classifier are fit on the training
// part only and scored on the held-out part.
double select_p_threshold_cv(const std::vector<MappingFeature>& support_zs,
                             const std::vector<PerturbationDelta>& support_deltas,
                             const std::vector<int>& labels, const std::vector<double>& grid,
                             const EncoderConfig& config, int n_folds = 5);

}  // namespace veilprobe
