#include "veilprobe/tensor.hpp"

#include <algorithm>

#include "veilprobe/util.hpp"

namespace veilprobe {

namespace {
void check(bool ok, const char* what) {
  if (!ok) throw NumericError(std::string("tensor shape error: ") + what);
}
}  // namespace

NodeRef make_param(Mat value) {
  auto node = std::make_shared<Node>();
  node->grad = Mat(value.rows, value.cols);
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

NodeRef make_input(Mat value) {
  auto node = std::make_shared<Node>();
  node->grad = Mat(value.rows, value.cols);
  node->value = std::move(value);
  node->requires_grad = false;
  return node;
}

NodeRef Tape::input(Mat value) { return push(std::move(value), {}); }

NodeRef Tape::push(Mat value, std::vector<NodeRef> parents) {
  auto node = std::make_shared<Node>();
  node->grad = Mat(value.rows, value.cols);
  node->value = std::move(value);
  node->parents = std::move(parents);
  node->requires_grad = false;
  for (const auto& p : node->parents)
    if (p->requires_grad || !p->parents.empty() || p->backward_fn) node->requires_grad = true;
  order_.push_back(node);
  return node;
}

NodeRef Tape::matmul(NodeRef a, NodeRef b) {
  check(a->value.cols == b->value.rows, "matmul inner dims");
  const int m = a->value.rows, k = a->value.cols, n = b->value.cols;
  Mat out(m, n);
  for (int i = 0; i < m; ++i) {
    const double* arow = a->value.row(i);
    double* orow = out.row(i);
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b->value.row(p);
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  NodeRef node = push(std::move(out), {a, b});
  Node* raw = node.get();
  node->backward_fn = [raw, a, b, m, k, n]() {
    // dA += dC * B^T ; dB += A^T * dC
    for (int i = 0; i < m; ++i) {
      const double* grow = raw->grad.row(i);
      double* darow = a->grad.row(i);
      const double* arow = a->value.row(i);
      for (int p = 0; p < k; ++p) {
        const double* brow = b->value.row(p);
        double acc = 0;
        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
        darow[p] += acc;
        const double av = arow[p];
        if (av != 0.0) {
          double* dbrow = b->grad.row(p);
          for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
        }
      }
    }
  };
  return node;
}

NodeRef Tape::matmul_nt(NodeRef a, NodeRef b) {
  check(a->value.cols == b->value.cols, "matmul_nt inner dims");
  const int m = a->value.rows, k = a->value.cols, n = b->value.rows;
  Mat out(m, n);
  for (int i = 0; i < m; ++i) {
    const double* arow = a->value.row(i);
    double* orow = out.row(i);
    for (int j = 0; j < n; ++j) {
      const double* brow = b->value.row(j);
      double acc = 0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      orow[j] = acc;
    }
  }
  NodeRef node = push(std::move(out), {a, b});
  Node* raw = node.get();
  node->backward_fn = [raw, a, b, m, k, n]() {
    // dA += dC * B ; dB += dC^T * A
    for (int i = 0; i < m; ++i) {
      const double* grow = raw->grad.row(i);
      double* darow = a->grad.row(i);
      const double* arow = a->value.row(i);
      for (int j = 0; j < n; ++j) {
        const double g = grow[j];
        if (g == 0.0) continue;
        const double* brow = b->value.row(j);
        double* dbrow = b->grad.row(j);
        for (int p = 0; p < k; ++p) {
          darow[p] += g * brow[p];
          dbrow[p] += g * arow[p];
        }
      }
    }
  };
  return node;
}

NodeRef Tape::add(NodeRef a, NodeRef b) {
  check(a->value.rows == b->value.rows && a->value.cols == b->value.cols, "add shapes");
  Mat out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out.a[i] += b->value.a[i];
  NodeRef node = push(std::move(out), {a, b});
  Node* raw = node.get();
  node->backward_fn = [raw, a, b]() {
    for (size_t i = 0; i < raw->grad.size(); ++i) {
      a->grad.a[i] += raw->grad.a[i];
      b->grad.a[i] += raw->grad.a[i];
    }
  };
  return node;
}

NodeRef Tape::sub(NodeRef a, NodeRef b) {
  check(a->value.rows == b->value.rows && a->value.cols == b->value.cols, "sub shapes");
  Mat out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out.a[i] -= b->value.a[i];
  NodeRef node = push(std::move(out), {a, b});
  Node* raw = node.get();
  node->backward_fn = [raw, a, b]() {
    for (size_t i = 0; i < raw->grad.size(); ++i) {
      a->grad.a[i] += raw->grad.a[i];
      b->grad.a[i] -= raw->grad.a[i];
    }
  };
  return node;
}

NodeRef Tape::mul(NodeRef a, NodeRef b) {
  check(a->value.rows == b->value.rows && a->value.cols == b->value.cols, "mul shapes");
  Mat out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out.a[i] *= b->value.a[i];
  NodeRef node = push(std::move(out), {a, b});
  Node* raw = node.get();
  node->backward_fn = [raw, a, b]() {
    for (size_t i = 0; i < raw->grad.size(); ++i) {
      a->grad.a[i] += raw->grad.a[i] * b->value.a[i];
      b->grad.a[i] += raw->grad.a[i] * a->value.a[i];
    }
  };
  return node;
}

NodeRef Tape::affine(NodeRef a, double s, double c) {
  Mat out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out.a[i] = s * out.a[i] + c;
  NodeRef node = push(std::move(out), {a});
  Node* raw = node.get();
  node->backward_fn = [raw, a, s]() {
    for (size_t i = 0; i < raw->grad.size(); ++i) a->grad.a[i] += s * raw->grad.a[i];
  };
  return node;
}

NodeRef Tape::add_rowwise(NodeRef a, NodeRef bias) {
  check(bias->value.rows == 1 && bias->value.cols == a->value.cols, "add_rowwise shapes");
  Mat out = a->value;
  for (int i = 0; i < out.rows; ++i) {
    double* row = out.row(i);
    for (int j = 0; j < out.cols; ++j) row[j] += bias->value.a[static_cast<size_t>(j)];
  }
  NodeRef node = push(std::move(out), {a, bias});
  Node* raw = node.get();
  node->backward_fn = [raw, a, bias]() {
    for (int i = 0; i < raw->grad.rows; ++i) {
      const double* grow = raw->grad.row(i);
      double* darow = a->grad.row(i);
      for (int j = 0; j < raw->grad.cols; ++j) {
        darow[j] += grow[j];
        bias->grad.a[static_cast<size_t>(j)] += grow[j];
      }
    }
  };
  return node;
}

NodeRef Tape::tanh(NodeRef a) {
  Mat out = a->value;
  for (auto& x : out.a) x = std::tanh(x);
  NodeRef node = push(std::move(out), {a});
  Node* raw = node.get();
  node->backward_fn = [raw, a]() {
    for (size_t i = 0; i < raw->grad.size(); ++i)
      a->grad.a[i] += raw->grad.a[i] * (1.0 - raw->value.a[i] * raw->value.a[i]);
  };
  return node;
}

NodeRef Tape::relu(NodeRef a) {
  Mat out = a->value;
  for (auto& x : out.a) x = x > 0 ? x : 0.0;
  NodeRef node = push(std::move(out), {a});
  Node* raw = node.get();
  node->backward_fn = [raw, a]() {
    for (size_t i = 0; i < raw->grad.size(); ++i)
      if (a->value.a[i] > 0) a->grad.a[i] += raw->grad.a[i];
  };
  return node;
}

NodeRef Tape::exp(NodeRef a) {
  Mat out = a->value;
  for (auto& x : out.a) x = std::exp(x);
  NodeRef node = push(std::move(out), {a});
  Node* raw = node.get();
  node->backward_fn = [raw, a]() {
    for (size_t i = 0; i < raw->grad.size(); ++i)
      a->grad.a[i] += raw->grad.a[i] * raw->value.a[i];
  };
  return node;
}

NodeRef Tape::clamp(NodeRef a, double lo, double hi) {
  Mat out = a->value;
  for (auto& x : out.a) x = std::min(hi, std::max(lo, x));
  NodeRef node = push(std::move(out), {a});
  Node* raw = node.get();
  node->backward_fn = [raw, a, lo, hi]() {
    for (size_t i = 0; i < raw->grad.size(); ++i)
      if (a->value.a[i] > lo && a->value.a[i] < hi) a->grad.a[i] += raw->grad.a[i];
  };
  return node;
}

NodeRef Tape::softmax_rows(NodeRef a) {
  Mat out = a->value;
  for (int i = 0; i < out.rows; ++i) {
    double* row = out.row(i);
    double mx = row[0];
    for (int j = 1; j < out.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0;
    for (int j = 0; j < out.cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < out.cols; ++j) row[j] /= sum;
  }
  NodeRef node = push(std::move(out), {a});
  Node* raw = node.get();
  node->backward_fn = [raw, a]() {
    // dA = (dS - rowdot(dS, S)) * S
    for (int i = 0; i < raw->grad.rows; ++i) {
      const double* g = raw->grad.row(i);
      const double* s = raw->value.row(i);
      double dot = 0;
      for (int j = 0; j < raw->grad.cols; ++j) dot += g[j] * s[j];
      double* da = a->grad.row(i);
      for (int j = 0; j < raw->grad.cols; ++j) da[j] += (g[j] - dot) * s[j];
    }
  };
  return node;
}

NodeRef Tape::layernorm_rows(NodeRef a, NodeRef gamma, NodeRef beta, double eps) {
  check(gamma->value.rows == 1 && gamma->value.cols == a->value.cols, "layernorm gamma");
  check(beta->value.rows == 1 && beta->value.cols == a->value.cols, "layernorm beta");
  const int n = a->value.cols;
  Mat out(a->value.rows, n);
  Mat xhat(a->value.rows, n);
  std::vector<double> inv_std(static_cast<size_t>(a->value.rows));
  for (int i = 0; i < a->value.rows; ++i) {
    const double* row = a->value.row(i);
    double mean = 0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= n;
    double var = 0;
    for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= n;
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = istd;
    double* xh = xhat.row(i);
    double* o = out.row(i);
    for (int j = 0; j < n; ++j) {
      xh[j] = (row[j] - mean) * istd;
      o[j] = xh[j] * gamma->value.a[static_cast<size_t>(j)] + beta->value.a[static_cast<size_t>(j)];
    }
  }
  NodeRef node = push(std::move(out), {a, gamma, beta});
  Node* raw = node.get();
  auto xhat_keep = std::make_shared<Mat>(std::move(xhat));
  auto istd_keep = std::make_shared<std::vector<double>>(std::move(inv_std));
  node->backward_fn = [raw, a, gamma, beta, xhat_keep, istd_keep, n]() {
    for (int i = 0; i < raw->grad.rows; ++i) {
      const double* g = raw->grad.row(i);
      const double* xh = xhat_keep->row(i);
      const double istd = (*istd_keep)[static_cast<size_t>(i)];
      double sum_gy = 0, sum_gy_xhat = 0;
      for (int j = 0; j < n; ++j) {
        const double gy = g[j] * gamma->value.a[static_cast<size_t>(j)];
        sum_gy += gy;
        sum_gy_xhat += gy * xh[j];
        gamma->grad.a[static_cast<size_t>(j)] += g[j] * xh[j];
        beta->grad.a[static_cast<size_t>(j)] += g[j];
      }
      double* da = a->grad.row(i);
      for (int j = 0; j < n; ++j) {
        const double gy = g[j] * gamma->value.a[static_cast<size_t>(j)];
        da[j] += istd * (gy - sum_gy / n - xh[j] * sum_gy_xhat / n);
      }
    }
  };
  return node;
}

NodeRef Tape::embedding(NodeRef table, const std::vector<int>& ids) {
  const int d = table->value.cols;
  Mat out(static_cast<int>(ids.size()), d);
  for (size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < table->value.rows, "embedding id range");
    const double* src = table->value.row(ids[i]);
    std::copy(src, src + d, out.row(static_cast<int>(i)));
  }
  NodeRef node = push(std::move(out), {table});
  Node* raw = node.get();
  auto ids_keep = std::make_shared<std::vector<int>>(ids);
  node->backward_fn = [raw, table, ids_keep, d]() {
    for (size_t i = 0; i < ids_keep->size(); ++i) {
      const double* g = raw->grad.row(static_cast<int>(i));
      double* dst = table->grad.row((*ids_keep)[i]);
      for (int j = 0; j < d; ++j) dst[j] += g[j];
    }
  };
  return node;
}

NodeRef Tape::slice_cols(NodeRef a, int from, int width) {
  check(from >= 0 && from + width <= a->value.cols, "slice_cols range");
  Mat out(a->value.rows, width);
  for (int i = 0; i < out.rows; ++i)
    std::copy(a->value.row(i) + from, a->value.row(i) + from + width, out.row(i));
  NodeRef node = push(std::move(out), {a});
  Node* raw = node.get();
  node->backward_fn = [raw, a, from, width]() {
    for (int i = 0; i < raw->grad.rows; ++i) {
      const double* g = raw->grad.row(i);
      double* da = a->grad.row(i) + from;
      for (int j = 0; j < width; ++j) da[j] += g[j];
    }
  };
  return node;
}

NodeRef Tape::concat_cols(const std::vector<NodeRef>& parts) {
  check(!parts.empty(), "concat_cols empty");
  const int rows = parts[0]->value.rows;
  int total = 0;
  for (const auto& p : parts) {
    check(p->value.rows == rows, "concat_cols rows");
    total += p->value.cols;
  }
  Mat out(rows, total);
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < rows; ++i)
      std::copy(p->value.row(i), p->value.row(i) + p->value.cols, out.row(i) + off);
    off += p->value.cols;
  }
  NodeRef node = push(std::move(out), parts);
  Node* raw = node.get();
  auto parts_keep = std::make_shared<std::vector<NodeRef>>(parts);
  node->backward_fn = [raw, parts_keep, rows]() {
    int off = 0;
    for (const auto& p : *parts_keep) {
      for (int i = 0; i < rows; ++i) {
        const double* g = raw->grad.row(i) + off;
        double* da = p->grad.row(i);
        for (int j = 0; j < p->value.cols; ++j) da[j] += g[j];
      }
      off += p->value.cols;
    }
  };
  return node;
}

NodeRef Tape::reduce_sum(NodeRef a) {
  Mat out(1, 1);
  for (double x : a->value.a) out.a[0] += x;
  NodeRef node = push(std::move(out), {a});
  Node* raw = node.get();
  node->backward_fn = [raw, a]() {
    const double g = raw->grad.a[0];
    for (auto& x : a->grad.a) x += g;
  };
  return node;
}

NodeRef Tape::pairwise_sqdist(NodeRef q, NodeRef c) {
  check(q->value.cols == c->value.cols, "pairwise_sqdist dims");
  const int m = q->value.rows, p = c->value.rows, k = q->value.cols;
  Mat out(m, p);
  for (int i = 0; i < m; ++i) {
    const double* qi = q->value.row(i);
    for (int j = 0; j < p; ++j) {
      const double* cj = c->value.row(j);
      double acc = 0;
      for (int t = 0; t < k; ++t) {
        const double d = qi[t] - cj[t];
        acc += d * d;
      }
      out.at(i, j) = acc;
    }
  }
  NodeRef node = push(std::move(out), {q, c});
  Node* raw = node.get();
  node->backward_fn = [raw, q, c, m, p, k]() {
    for (int i = 0; i < m; ++i) {
      const double* qi = q->value.row(i);
      double* dqi = q->grad.row(i);
      const double* g = raw->grad.row(i);
      for (int j = 0; j < p; ++j) {
        const double gij = g[j];
        if (gij == 0.0) continue;
        const double* cj = c->value.row(j);
        double* dcj = c->grad.row(j);
        for (int t = 0; t < k; ++t) {
          const double d = 2.0 * (qi[t] - cj[t]) * gij;
          dqi[t] += d;
          dcj[t] -= d;
        }
      }
    }
  };
  return node;
}

NodeRef Tape::cross_entropy_rows(NodeRef logits, const std::vector<int>& targets) {
  check(static_cast<int>(targets.size()) == logits->value.rows, "cross_entropy targets");
  const int n = logits->value.cols;
  Mat probs(logits->value.rows, n);
  double total = 0;
  for (int i = 0; i < logits->value.rows; ++i) {
    const double* row = logits->value.row(i);
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0;
    double* prow = probs.row(i);
    for (int j = 0; j < n; ++j) {
      prow[j] = std::exp(row[j] - mx);
      sum += prow[j];
    }
    for (int j = 0; j < n; ++j) prow[j] /= sum;
    check(targets[static_cast<size_t>(i)] >= 0 && targets[static_cast<size_t>(i)] < n,
          "cross_entropy target range");
    total -= std::log(std::max(prow[targets[static_cast<size_t>(i)]], 1e-300));
  }
  Mat out(1, 1);
  out.a[0] = total;
  NodeRef node = push(std::move(out), {logits});
  Node* raw = node.get();
  auto probs_keep = std::make_shared<Mat>(std::move(probs));
  auto targets_keep = std::make_shared<std::vector<int>>(targets);
  node->backward_fn = [raw, logits, probs_keep, targets_keep, n]() {
    const double g = raw->grad.a[0];
    for (int i = 0; i < logits->value.rows; ++i) {
      const double* prow = probs_keep->row(i);
      double* drow = logits->grad.row(i);
      const int target = (*targets_keep)[static_cast<size_t>(i)];
      for (int j = 0; j < n; ++j) drow[j] += g * (prow[j] - (j == target ? 1.0 : 0.0));
    }
  };
  return node;
}

void Tape::backward(NodeRef loss) {
  check(loss->value.rows == 1 && loss->value.cols == 1, "backward needs scalar loss");
  loss->grad.a[0] = 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    if ((*it)->requires_grad && (*it)->backward_fn) (*it)->backward_fn();
  }
}

void AdamState::step(const std::vector<NodeRef>& params, double grad_scale) {
  if (m.empty()) {
    for (const auto& p : params) {
      m.emplace_back(p->value.rows, p->value.cols);
      v.emplace_back(p->value.rows, p->value.cols);
    }
  }
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Node& p = *params[pi];
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.a[i] * grad_scale;
      m[pi].a[i] = beta1 * m[pi].a[i] + (1 - beta1) * g;
      v[pi].a[i] = beta2 * v[pi].a[i] + (1 - beta2) * g * g;
      const double mhat = m[pi].a[i] / bc1;
      const double vhat = v[pi].a[i] / bc2;
      p.value.a[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      p.grad.a[i] = 0.0;
    }
  }
}

void zero_grads(const std::vector<NodeRef>& params) {
  for (const auto& p : params) std::fill(p->grad.a.begin(), p->grad.a.end(), 0.0);
}

Mat xavier_init(int rows, int cols, std::mt19937_64& rng) {
  Mat out(rows, cols);
  const double bound = std::sqrt(6.0 / (rows + cols));
  for (auto& x : out.a) x = (2.0 * uniform_real(rng) - 1.0) * bound;
  return out;
}

}  // namespace veilprobe
