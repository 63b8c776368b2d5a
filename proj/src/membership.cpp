#include "veilprobe/membership.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "veilprobe/metrics.hpp"
#include "veilprobe/util.hpp"

namespace veilprobe {

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double welch_p_value(const std::vector<double>& group_a, const std::vector<double>& group_b) {
  const size_t n1 = group_a.size(), n2 = group_b.size();
  if (n1 < 2 || n2 < 2)
    throw ValidationError("Welch test needs at least 2 samples per group (" +
                          std::to_string(n1) + ", " + std::to_string(n2) + ")");
  auto mean_var = [](const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() - 1);
    return std::make_pair(mean, var);
  };
  const auto [m1, v1] = mean_var(group_a);
  const auto [m2, v2] = mean_var(group_b);
  const double se1 = v1 / static_cast<double>(n1);
  const double se2 = v2 / static_cast<double>(n2);
  if (se1 + se2 == 0.0) return 1.0;  // both groups constant: uninformative column
  const double t = (m1 - m2) / std::sqrt(se1 + se2);
  const double df = (se1 + se2) * (se1 + se2) /
                    (se1 * se1 / static_cast<double>(n1 - 1) +
                     se2 * se2 / static_cast<double>(n2 - 1));
  // Two-sided p from the t distribution via the incomplete beta identity.
  const double x = df / (df + t * t);
  double p = incomplete_beta(df / 2.0, 0.5, x);
  return std::min(1.0, std::max(0.0, p));
}

PValueVector dimension_p_values(const std::vector<std::vector<double>>& deltas_members,
                                const std::vector<std::vector<double>>& deltas_nonmembers) {
  if (deltas_members.size() < 2 || deltas_nonmembers.size() < 2)
    throw ValidationError("dimension_p_values needs >= 2 rows per group");
  const size_t dims = deltas_members[0].size();
  for (const auto& row : deltas_members)
    if (row.size() != dims) throw ValidationError("ragged member delta matrix");
  for (const auto& row : deltas_nonmembers)
    if (row.size() != dims) throw ValidationError("delta matrices differ in column count");

  PValueVector out;
  out.p.resize(dims);
  std::vector<double> col_a(deltas_members.size()), col_b(deltas_nonmembers.size());
  for (size_t d = 0; d < dims; ++d) {
    for (size_t r = 0; r < deltas_members.size(); ++r) col_a[r] = deltas_members[r][d];
    for (size_t r = 0; r < deltas_nonmembers.size(); ++r) col_b[r] = deltas_nonmembers[r][d];
    out.p[d] = welch_p_value(col_a, col_b);
  }
  return out;
}

CalibratedFeature select_critical(const std::vector<double>& delta, const PValueVector& pvals,
                                  const std::string& record_id) {
  if (delta.size() != pvals.p.size())
    throw ValidationError("delta/p-value dimension mismatch for '" + record_id + "': " +
                          std::to_string(delta.size()) + " vs " + std::to_string(pvals.p.size()));
  CalibratedFeature out;
  out.record_id = record_id;
  out.vector.resize(delta.size());
  out.critical_mask.resize(delta.size());
  for (size_t i = 0; i < delta.size(); ++i) {
    const bool critical = pvals.p[i] < pvals.threshold;
    out.critical_mask[i] = critical;
    out.vector[i] = critical ? delta[i] : 0.0;
  }
  return out;
}

MembershipFeature concat_features(const MappingFeature& zs, const CalibratedFeature& zc_tilde) {
  if (zs.record_id != zc_tilde.record_id)
    throw ValidationError("concat_features id mismatch: '" + zs.record_id + "' vs '" +
                          zc_tilde.record_id + "'");
  MembershipFeature out;
  out.record_id = zs.record_id;
  out.mapping_dim = zs.vector.size();
  out.vector = zs.vector;
  out.vector.insert(out.vector.end(), zc_tilde.vector.begin(), zc_tilde.vector.end());
  return out;
}

// ---------------------------------------------------------------------------
// Prototype classifier

PrototypeClassifier::Episode PrototypeClassifier::sample_episode(
    const std::vector<size_t>& member_idx, const std::vector<size_t>& nonmember_idx,
    std::mt19937_64& rng) const {
  Episode ep;
  auto draw = [&](const std::vector<size_t>& pool) {
    const size_t want =
        std::min(pool.size(), static_cast<size_t>(config_.support_per_episode +
                                                   config_.query_per_episode));
    auto picked = sample_without_replacement(pool.size(), want, rng);
    const size_t split = std::min(picked.size(), static_cast<size_t>(config_.support_per_episode));
    // Keep at least one query point per class when the pool is tight.
    const size_t support_take = picked.size() > split ? split : picked.size() - 1;
    for (size_t i = 0; i < picked.size(); ++i) {
      if (i < support_take) ep.support_idx.push_back(pool[picked[i]]);
      else ep.query_idx.push_back(pool[picked[i]]);
    }
  };
  draw(nonmember_idx);
  draw(member_idx);
  return ep;
}

NodeRef PrototypeClassifier::encode_graph(Tape& tape, NodeRef x, NodeRef* logvar_out) const {
  NodeRef h = tape.tanh(tape.add_rowwise(tape.matmul(x, w1_), b1_));
  NodeRef mu = tape.add_rowwise(tape.matmul(h, w_mu_), b_mu_);
  if (logvar_out) {
    if (config_.fixed_variance) {
      *logvar_out = tape.input(Mat(mu->value.rows, mu->value.cols, 0.0));
    } else {
      *logvar_out = tape.clamp(tape.add_rowwise(tape.matmul(h, w_lv_), b_lv_), -6.0, 6.0);
    }
  }
  return mu;
}

std::vector<double> PrototypeClassifier::standardize(const std::vector<double>& v) const {
  if (v.size() != feat_mean_.size())
    throw ValidationError("feature dimension " + std::to_string(v.size()) +
                          " does not match classifier input dimension " +
                          std::to_string(feat_mean_.size()));
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - feat_mean_[i]) / feat_std_[i];
  return out;
}

PrototypeClassifier PrototypeClassifier::train(const std::vector<MembershipFeature>& support,
                                               const std::vector<int>& labels,
                                               const EncoderConfig& config, TrainCurve* curve) {
  config.validate();
  if (support.size() != labels.size())
    throw ValidationError("support features and labels differ in length");
  if (support.empty()) throw ValidationError("empty support set");
  std::vector<size_t> member_idx, nonmember_idx;
  for (size_t i = 0; i < labels.size(); ++i)
    (labels[i] == 1 ? member_idx : nonmember_idx).push_back(i);
  if (member_idx.empty() || nonmember_idx.empty())
    throw ValidationError("support must contain both classes (members=" +
                          std::to_string(member_idx.size()) +
                          ", nonmembers=" + std::to_string(nonmember_idx.size()) + ")");

  const size_t dim = support[0].vector.size();
  for (const auto& f : support)
    if (f.vector.size() != dim) throw ValidationError("ragged support feature dimensions");

  PrototypeClassifier model;
  model.config_ = config;

  // Per-dimension z-scoring fitted on support only.
  model.feat_mean_.assign(dim, 0.0);
  model.feat_std_.assign(dim, 0.0);
  for (const auto& f : support)
    for (size_t d = 0; d < dim; ++d) model.feat_mean_[d] += f.vector[d];
  for (auto& m : model.feat_mean_) m /= static_cast<double>(support.size());
  for (const auto& f : support)
    for (size_t d = 0; d < dim; ++d) {
      const double c = f.vector[d] - model.feat_mean_[d];
      model.feat_std_[d] += c * c;
    }
  for (auto& s : model.feat_std_) {
    s = std::sqrt(s / static_cast<double>(support.size()));
    if (s < 1e-12) s = 1.0;  // constant dimension, leave centered at zero
  }

  std::vector<std::vector<double>> standardized;
  standardized.reserve(support.size());
  for (const auto& f : support) standardized.push_back(model.standardize(f.vector));

  std::mt19937_64 init_rng(derive_seed(config.seed, "classifier/init"));
  const int hidden = config.hidden_dim;
  model.w1_ = make_param(xavier_init(static_cast<int>(dim), hidden, init_rng));
  model.b1_ = make_param(Mat(1, hidden));
  model.w_mu_ = make_param(xavier_init(hidden, config.embed_dim, init_rng));
  model.b_mu_ = make_param(Mat(1, config.embed_dim));
  model.w_lv_ = make_param(xavier_init(hidden, config.embed_dim, init_rng));
  model.b_lv_ = make_param(Mat(1, config.embed_dim, -2.0));  // start near-deterministic
  model.params_ = {model.w1_, model.b1_, model.w_mu_, model.b_mu_, model.w_lv_, model.b_lv_};

  AdamState adam;
  adam.lr = config.learning_rate;
  zero_grads(model.params_);

  std::mt19937_64 rng(derive_seed(config.seed, "classifier/episodes"));
  for (int episode = 0; episode < config.episodes; ++episode) {
    Episode ep = model.sample_episode(member_idx, nonmember_idx, rng);
    const int ms = static_cast<int>(ep.support_idx.size());
    const int mq = static_cast<int>(ep.query_idx.size());
    if (ms == 0 || mq == 0) continue;

    Mat sx(ms, static_cast<int>(dim));
    std::vector<int> s_labels(static_cast<size_t>(ms));
    for (int i = 0; i < ms; ++i) {
      const size_t idx = ep.support_idx[static_cast<size_t>(i)];
      std::copy(standardized[idx].begin(), standardized[idx].end(), sx.row(i));
      s_labels[static_cast<size_t>(i)] = labels[idx];
    }
    // Both classes must be present in the episode support or the prototypes
    // are undefined; skip such draws (tiny pools only).
    {
      int ep_n0 = 0, ep_n1 = 0;
      for (int y : s_labels) (y == 1 ? ep_n1 : ep_n0)++;
      if (ep_n0 == 0 || ep_n1 == 0) continue;
    }
    Mat qx(mq, static_cast<int>(dim));
    std::vector<int> q_labels(static_cast<size_t>(mq));
    for (int i = 0; i < mq; ++i) {
      const size_t idx = ep.query_idx[static_cast<size_t>(i)];
      std::copy(standardized[idx].begin(), standardized[idx].end(), qx.row(i));
      q_labels[static_cast<size_t>(i)] = labels[idx];
    }

    Tape tape;
    NodeRef s_in = tape.input(std::move(sx));
    NodeRef q_in = tape.input(std::move(qx));

    auto reparam = [&](NodeRef mu, NodeRef logvar, int rows) {
      if (config.fixed_variance) return mu;
      Mat eps(rows, config.embed_dim);
      for (auto& e : eps.a) {
        // Box-Muller from the episode stream.
        const double u1 = std::max(1e-12, uniform_real(rng));
        const double u2 = uniform_real(rng);
        e = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
      }
      NodeRef sigma = tape.exp(tape.affine(logvar, 0.5, 0.0));
      return tape.add(mu, tape.mul(sigma, tape.input(std::move(eps))));
    };

    NodeRef s_logvar, q_logvar;
    NodeRef s_mu = model.encode_graph(tape, s_in, &s_logvar);
    NodeRef q_mu = model.encode_graph(tape, q_in, &q_logvar);
    NodeRef s_z = reparam(s_mu, s_logvar, ms);
    NodeRef q_z = reparam(q_mu, q_logvar, mq);

    // Class means via a constant averaging matrix: row 0 -> nonmember proto.
    Mat avg(2, ms);
    int n0 = 0, n1 = 0;
    for (int i = 0; i < ms; ++i) (s_labels[static_cast<size_t>(i)] == 1 ? n1 : n0)++;
    for (int i = 0; i < ms; ++i) {
      if (s_labels[static_cast<size_t>(i)] == 1) avg.at(1, i) = 1.0 / n1;
      else avg.at(0, i) = 1.0 / n0;
    }
    NodeRef protos = tape.matmul(tape.input(std::move(avg)), s_z);
    NodeRef dists = tape.pairwise_sqdist(q_z, protos);
    NodeRef logits = tape.affine(dists, -1.0, 0.0);
    NodeRef ce = tape.cross_entropy_rows(logits, q_labels);

    NodeRef loss = tape.affine(ce, 1.0 / mq, 0.0);
    if (config.beta > 0 && !config.fixed_variance) {
      // KL(q(z|x) || N(0, I)) summed over query entries.
      NodeRef mu_sq = tape.mul(q_mu, q_mu);
      NodeRef var = tape.exp(q_logvar);
      NodeRef kl_terms =
          tape.affine(tape.sub(tape.add(var, mu_sq), tape.affine(q_logvar, 1.0, 1.0)), 0.5, 0.0);
      NodeRef kl = tape.reduce_sum(kl_terms);
      loss = tape.add(loss, tape.affine(kl, config.beta / mq, 0.0));
    }
    tape.backward(loss);
    if (!std::isfinite(loss->value.a[0]))
      throw NumericError("classifier training diverged at episode " + std::to_string(episode));
    if (curve) curve->episode_loss.push_back(loss->value.a[0]);
    adam.step(model.params_, 1.0);
  }

  // Final prototypes from the full support set, encoder means.
  std::vector<double> c0(static_cast<size_t>(config.embed_dim), 0.0), c1 = c0;
  for (size_t i = 0; i < support.size(); ++i) {
    std::vector<double> z = model.embed(support[i].vector);
    auto& target = labels[i] == 1 ? c1 : c0;
    for (size_t d = 0; d < z.size(); ++d) target[d] += z[d];
  }
  for (auto& x : c0) x /= static_cast<double>(nonmember_idx.size());
  for (auto& x : c1) x /= static_cast<double>(member_idx.size());
  model.proto_nonmember_ = {0, std::move(c0)};
  model.proto_member_ = {1, std::move(c1)};
  return model;
}

std::vector<double> PrototypeClassifier::embed(const std::vector<double>& feature) const {
  Tape tape;
  Mat x(1, static_cast<int>(feature.size()));
  std::vector<double> standardized = standardize(feature);
  std::copy(standardized.begin(), standardized.end(), x.row(0));
  NodeRef mu = encode_graph(tape, tape.input(std::move(x)), nullptr);
  return std::vector<double>(mu->value.a.begin(), mu->value.a.end());
}

double PrototypeClassifier::episode_loss(const std::vector<MembershipFeature>& support,
                                         const std::vector<int>& labels,
                                         uint64_t episode_seed) const {
  // Deterministic single-episode loss on given data with the current weights;
  // mirrors the training objective for identity checks.
  std::vector<size_t> member_idx, nonmember_idx;
  for (size_t i = 0; i < labels.size(); ++i)
    (labels[i] == 1 ? member_idx : nonmember_idx).push_back(i);
  std::mt19937_64 rng(episode_seed);
  Episode ep = sample_episode(member_idx, nonmember_idx, rng);
  const int ms = static_cast<int>(ep.support_idx.size());
  const int mq = static_cast<int>(ep.query_idx.size());
  if (ms == 0 || mq == 0) throw ValidationError("episode has empty support or query");

  Tape tape;
  Mat sx(ms, static_cast<int>(support[0].vector.size()));
  std::vector<int> s_labels(static_cast<size_t>(ms));
  for (int i = 0; i < ms; ++i) {
    auto v = standardize(support[ep.support_idx[static_cast<size_t>(i)]].vector);
    std::copy(v.begin(), v.end(), sx.row(i));
    s_labels[static_cast<size_t>(i)] = labels[ep.support_idx[static_cast<size_t>(i)]];
  }
  Mat qx(mq, static_cast<int>(support[0].vector.size()));
  std::vector<int> q_labels(static_cast<size_t>(mq));
  for (int i = 0; i < mq; ++i) {
    auto v = standardize(support[ep.query_idx[static_cast<size_t>(i)]].vector);
    std::copy(v.begin(), v.end(), qx.row(i));
    q_labels[static_cast<size_t>(i)] = labels[ep.query_idx[static_cast<size_t>(i)]];
  }
  NodeRef s_mu = encode_graph(tape, tape.input(std::move(sx)), nullptr);
  NodeRef q_logvar;
  NodeRef q_mu = encode_graph(tape, tape.input(std::move(qx)), &q_logvar);

  Mat avg(2, ms);
  int n0 = 0, n1 = 0;
  for (int i = 0; i < ms; ++i) (s_labels[static_cast<size_t>(i)] == 1 ? n1 : n0)++;
  for (int i = 0; i < ms; ++i) {
    if (s_labels[static_cast<size_t>(i)] == 1) avg.at(1, i) = 1.0 / std::max(1, n1);
    else avg.at(0, i) = 1.0 / std::max(1, n0);
  }
  NodeRef protos = tape.matmul(tape.input(std::move(avg)), s_mu);
  NodeRef dists = tape.pairwise_sqdist(q_mu, protos);
  NodeRef ce = tape.cross_entropy_rows(tape.affine(dists, -1.0, 0.0), q_labels);
  double loss = ce->value.a[0] / mq;
  if (config_.beta > 0 && !config_.fixed_variance) {
    double kl = 0;
    for (int i = 0; i < mq; ++i)
      for (int d = 0; d < config_.embed_dim; ++d) {
        const double mu = q_mu->value.at(i, d);
        const double lv = q_logvar->value.at(i, d);
        kl += 0.5 * (std::exp(lv) + mu * mu - 1.0 - lv);
      }
    loss += config_.beta * kl / mq;
  }
  return loss;
}

const Prototype& PrototypeClassifier::prototype(int label) const {
  if (proto_member_.center.empty())
    throw ValidationError("classifier is untrained: prototypes missing");
  return label == 1 ? proto_member_ : proto_nonmember_;
}

std::pair<double, double> PrototypeClassifier::class_probabilities(
    const MembershipFeature& z) const {
  DetectionResult r = detection_score(z);
  // Stable softmax over {-d0, -d1}.
  const double m = std::max(-r.d0, -r.d1);
  const double e0 = std::exp(-r.d0 - m), e1 = std::exp(-r.d1 - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

DetectionResult PrototypeClassifier::detection_score(const MembershipFeature& z) const {
  if (proto_member_.center.empty())
    throw ValidationError("classifier is untrained: prototypes missing");
  std::vector<double> embedded = embed(z.vector);
  auto sqdist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc;
  };
  DetectionResult out;
  out.record_id = z.record_id;
  out.d0 = sqdist(embedded, proto_nonmember_.center);
  out.d1 = sqdist(embedded, proto_member_.center);
  out.delta_score = out.d0 - out.d1;
  out.predicted_member = out.delta_score > decision_threshold_;
  return out;
}

void PrototypeClassifier::save(const std::filesystem::path& path) const {
  nlohmann::json doc;
  doc["schema_version"] = 1;
  doc["kind"] = "prototype_classifier";
  doc["config"] = {{"embed_dim", config_.embed_dim},
                   {"beta", config_.beta},
                   {"episodes", config_.episodes},
                   {"support_per_episode", config_.support_per_episode},
                   {"query_per_episode", config_.query_per_episode},
                   {"learning_rate", config_.learning_rate},
                   {"seed", config_.seed},
                   {"hidden_dim", config_.hidden_dim},
                   {"fixed_variance", config_.fixed_variance}};
  auto dump = [](const NodeRef& p) {
    return nlohmann::json{{"rows", p->value.rows}, {"cols", p->value.cols}, {"data", p->value.a}};
  };
  doc["params"] = {dump(w1_), dump(b1_), dump(w_mu_), dump(b_mu_), dump(w_lv_), dump(b_lv_)};
  doc["feat_mean"] = feat_mean_;
  doc["feat_std"] = feat_std_;
  doc["proto_nonmember"] = proto_nonmember_.center;
  doc["proto_member"] = proto_member_.center;
  doc["decision_threshold"] = decision_threshold_;
  doc["p_values"] = {{"p", p_values_.p},
                     {"test_name", p_values_.test_name},
                     {"threshold", p_values_.threshold}};
  write_file(path, doc.dump());
}

PrototypeClassifier PrototypeClassifier::load(const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded() || doc.value("kind", "") != "prototype_classifier")
    throw ParseError("not a classifier checkpoint: " + path.string(), -1);
  if (doc.value("schema_version", 0) != 1)
    throw ValidationError("unsupported classifier schema version");
  PrototypeClassifier model;
  const auto& c = doc["config"];
  model.config_.embed_dim = c["embed_dim"].get<int>();
  model.config_.beta = c["beta"].get<double>();
  model.config_.episodes = c["episodes"].get<int>();
  model.config_.support_per_episode = c["support_per_episode"].get<int>();
  model.config_.query_per_episode = c["query_per_episode"].get<int>();
  model.config_.learning_rate = c["learning_rate"].get<double>();
  model.config_.seed = c["seed"].get<uint64_t>();
  model.config_.hidden_dim = c["hidden_dim"].get<int>();
  model.config_.fixed_variance = c["fixed_variance"].get<bool>();
  auto load_mat = [](const nlohmann::json& j) {
    Mat m(j["rows"].get<int>(), j["cols"].get<int>());
    m.a = j["data"].get<std::vector<double>>();
    return make_param(std::move(m));
  };
  model.w1_ = load_mat(doc["params"][0]);
  model.b1_ = load_mat(doc["params"][1]);
  model.w_mu_ = load_mat(doc["params"][2]);
  model.b_mu_ = load_mat(doc["params"][3]);
  model.w_lv_ = load_mat(doc["params"][4]);
  model.b_lv_ = load_mat(doc["params"][5]);
  model.params_ = {model.w1_, model.b1_, model.w_mu_, model.b_mu_, model.w_lv_, model.b_lv_};
  model.feat_mean_ = doc["feat_mean"].get<std::vector<double>>();
  model.feat_std_ = doc["feat_std"].get<std::vector<double>>();
  model.proto_nonmember_ = {0, doc["proto_nonmember"].get<std::vector<double>>()};
  model.proto_member_ = {1, doc["proto_member"].get<std::vector<double>>()};
  model.decision_threshold_ = doc["decision_threshold"].get<double>();
  model.p_values_.p = doc["p_values"]["p"].get<std::vector<double>>();
  model.p_values_.test_name = doc["p_values"]["test_name"].get<std::string>();
  model.p_values_.threshold = doc["p_values"]["threshold"].get<double>();
  return model;
}

double select_p_threshold_cv(const std::vector<MappingFeature>& support_zs,
                             const std::vector<PerturbationDelta>& support_deltas,
                             const std::vector<int>& labels, const std::vector<double>& grid,
                             const EncoderConfig& config, int n_folds) {
  if (support_zs.size() != support_deltas.size() || support_zs.size() != labels.size())
    throw ValidationError("support feature/delta/label sizes differ");
  if (grid.empty()) throw ValidationError("empty threshold grid");
  const size_t n = labels.size();
  if (n < static_cast<size_t>(2 * n_folds)) n_folds = std::max(2, static_cast<int>(n / 4));

  // Deterministic fold assignment, stratified by label.
  std::vector<int> fold(n, 0);
  int next_fold_m = 0, next_fold_n = 0;
  auto order = shuffled_indices(n, derive_seed(config.seed, "pgrid/folds"));
  for (size_t k : order) {
    if (labels[k] == 1) fold[k] = next_fold_m++ % n_folds;
    else fold[k] = next_fold_n++ % n_folds;
  }

  double best_threshold = grid[0];
  double best_auc = -1.0;
  for (double threshold : grid) {
    std::vector<double> cv_scores;
    std::vector<int> cv_labels;
    for (int f = 0; f < n_folds; ++f) {
      std::vector<std::vector<double>> train_members, train_nonmembers;
      std::vector<size_t> train_idx, val_idx;
      for (size_t i = 0; i < n; ++i) {
        if (fold[i] == f) val_idx.push_back(i);
        else {
          train_idx.push_back(i);
          (labels[i] == 1 ? train_members : train_nonmembers).push_back(support_deltas[i].vector);
        }
      }
      if (train_members.size() < 2 || train_nonmembers.size() < 2 || val_idx.empty()) continue;
      PValueVector pvals = dimension_p_values(train_members, train_nonmembers);
      pvals.threshold = threshold;

      std::vector<MembershipFeature> train_feats;
      std::vector<int> train_labels;
      for (size_t i : train_idx) {
        CalibratedFeature cal = select_critical(support_deltas[i].vector, pvals,
                                                support_deltas[i].record_id);
        train_feats.push_back(concat_features(support_zs[i], cal));
        train_labels.push_back(labels[i]);
      }
      bool has_m = false, has_n = false;
      for (int y : train_labels) (y == 1 ? has_m : has_n) = true;
      if (!has_m || !has_n) continue;
      EncoderConfig fold_config = config;
      fold_config.episodes = std::max(50, config.episodes / 4);  // folds are cheap passes
      PrototypeClassifier clf = PrototypeClassifier::train(train_feats, train_labels, fold_config);
      for (size_t i : val_idx) {
        CalibratedFeature cal = select_critical(support_deltas[i].vector, pvals,
                                                support_deltas[i].record_id);
        MembershipFeature z = concat_features(support_zs[i], cal);
        cv_scores.push_back(clf.detection_score(z).delta_score);
        cv_labels.push_back(labels[i]);
      }
    }
    bool has_m = false, has_n = false;
    for (int y : cv_labels) (y == 1 ? has_m : has_n) = true;
    if (!has_m || !has_n) continue;
    const double fold_auc = auc(cv_scores, cv_labels);
    if (fold_auc > best_auc) {
      best_auc = fold_auc;
      best_threshold = threshold;
    }
  }
  return best_threshold;
}

}  // namespace veilprobe
