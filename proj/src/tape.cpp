#include "mtgrow/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mtgrow {

namespace {

// C[m x n] += A[m x k] * B[k x n], ikj order.
void gemm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void require_2d(const Tensor& t, const char* what) {
  if (t.rank() != 2) fail(ErrorKind::Shape, std::string(what) + " requires a 2-D tensor, got " + shape_str(t.shape));
}

}  // namespace

Tape::NodeId Tape::push(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.value.grad.reset();  // node adjoints live in Node::grad
  if (record_) node.grad.assign(node.value.data.size(), 0.0);
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::check(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
    fail(ErrorKind::Domain, "invalid tape node id " + std::to_string(id));
  return id;
}

void Tape::record(std::function<void()> fn) {
  if (record_) ops_.push_back(std::move(fn));
}

Tape::NodeId Tape::input(Tensor value) { return push(std::move(value)); }

const std::vector<double>& Tape::grad(NodeId id) const {
  if (!record_) fail(ErrorKind::Domain, "grad requested from a non-recording tape");
  return nodes_[check(id)].grad;
}

double Tape::scalar_value(NodeId id) const {
  const Tensor& t = value(id);
  if (t.numel() != 1) fail(ErrorKind::Shape, "scalar_value on tensor " + shape_str(t.shape));
  return t.data[0];
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_2d(ta, "matmul lhs");
  require_2d(tb, "matmul rhs");
  if (ta.cols() != tb.rows())
    fail(ErrorKind::Shape, "matmul inner dimensions disagree: " + shape_str(ta.shape) + " x " + shape_str(tb.shape));
  int64_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out = Tensor::zeros({m, n});
  gemm_acc(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
  NodeId o = push(std::move(out));
  record([this, a, b, o, m, k, n] {
    const double* go = grad_buf(o).data();
    // dA += dC * B^T ; dB += A^T * dC
    gemm_nt_acc(go, nodes_[b].value.data.data(), grad_buf(a).data(), m, n, k);
    gemm_tn_acc(nodes_[a].value.data.data(), go, grad_buf(b).data(), k, m, n);
  });
  return o;
}

Tape::NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require_2d(ta, "matmul_nt lhs");
  require_2d(tb, "matmul_nt rhs");
  if (ta.cols() != tb.cols())
    fail(ErrorKind::Shape,
         "matmul_nt inner dimensions disagree: " + shape_str(ta.shape) + " x " + shape_str(tb.shape) + "^T");
  int64_t m = ta.rows(), k = ta.cols(), n = tb.rows();
  Tensor out = Tensor::zeros({m, n});
  gemm_nt_acc(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
  NodeId o = push(std::move(out));
  record([this, a, b, o, m, k, n] {
    const double* go = grad_buf(o).data();
    // C = A B^T: dA += dC * B ; dB += dC^T * A
    gemm_acc(go, nodes_[b].value.data.data(), grad_buf(a).data(), m, n, k);
    gemm_tn_acc(go, nodes_[a].value.data.data(), grad_buf(b).data(), n, m, k);
  });
  return o;
}

Tape::NodeId Tape::transpose(NodeId a) {
  const Tensor& ta = value(a);
  require_2d(ta, "transpose");
  int64_t m = ta.rows(), n = ta.cols();
  Tensor out = Tensor::zeros({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.data[j * m + i] = ta.data[i * n + j];
  NodeId o = push(std::move(out));
  record([this, a, o, m, n] {
    const double* go = grad_buf(o).data();
    double* ga = grad_buf(a).data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
  });
  return o;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape == tb.shape) {
    Tensor out = ta;
    out.grad.reset();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    NodeId o = push(std::move(out));
    record([this, a, b, o] {
      const std::vector<double>& go = grad_buf(o);
      std::vector<double>& ga = grad_buf(a);
      std::vector<double>& gb = grad_buf(b);
      for (size_t i = 0; i < go.size(); ++i) {
        ga[i] += go[i];
        gb[i] += go[i];
      }
    });
    return o;
  }
  // bias-row broadcast: a is [m x n], b is [n]
  if (ta.rank() == 2 && tb.rank() == 1 && ta.cols() == tb.dim(0)) {
    int64_t m = ta.rows(), n = ta.cols();
    Tensor out = ta;
    out.grad.reset();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) out.data[i * n + j] += tb.data[j];
    NodeId o = push(std::move(out));
    record([this, a, b, o, m, n] {
      const double* go = grad_buf(o).data();
      double* ga = grad_buf(a).data();
      double* gb = grad_buf(b).data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          ga[i * n + j] += go[i * n + j];
          gb[j] += go[i * n + j];
        }
    });
    return o;
  }
  fail(ErrorKind::Shape, "add shapes incompatible: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape != tb.shape)
    fail(ErrorKind::Shape, "mul shapes differ: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out = ta;
  out.grad.reset();
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  NodeId o = push(std::move(out));
  record([this, a, b, o] {
    const std::vector<double>& go = grad_buf(o);
    std::vector<double>& ga = grad_buf(a);
    std::vector<double>& gb = grad_buf(b);
    const std::vector<double>& va = nodes_[a].value.data;
    const std::vector<double>& vb = nodes_[b].value.data;
    for (size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i] * vb[i];
      gb[i] += go[i] * va[i];
    }
  });
  return o;
}

Tape::NodeId Tape::scale(NodeId a, double c) {
  Tensor out = value(a);
  out.grad.reset();
  for (double& v : out.data) v *= c;
  NodeId o = push(std::move(out));
  record([this, a, o, c] {
    const std::vector<double>& go = grad_buf(o);
    std::vector<double>& ga = grad_buf(a);
    for (size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
  });
  return o;
}

Tape::NodeId Tape::relu(NodeId a) {
  Tensor out = value(a);
  out.grad.reset();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  NodeId o = push(std::move(out));
  record([this, a, o] {
    const std::vector<double>& go = grad_buf(o);
    std::vector<double>& ga = grad_buf(a);
    const std::vector<double>& va = nodes_[a].value.data;
    for (size_t i = 0; i < go.size(); ++i)
      if (va[i] > 0.0) ga[i] += go[i];
  });
  return o;
}

Tape::NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
  if (eps <= 0.0) fail(ErrorKind::Domain, "layer_norm eps must be > 0");
  const Tensor& tx = value(x);
  require_2d(tx, "layer_norm");
  const Tensor& tg = value(gain);
  const Tensor& tb = value(bias);
  int64_t m = tx.rows(), n = tx.cols();
  if (tg.rank() != 1 || tg.dim(0) != n || tb.rank() != 1 || tb.dim(0) != n)
    fail(ErrorKind::Shape, "layer_norm gain/bias must be vectors of width " + std::to_string(n));

  Tensor out = Tensor::zeros({m, n});
  std::vector<double> means(static_cast<size_t>(m)), inv_stds(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    const double* row = tx.data.data() + i * n;
    double mean = 0.0;
    for (int64_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double inv_std = 1.0 / std::sqrt(var + eps);
    means[static_cast<size_t>(i)] = mean;
    inv_stds[static_cast<size_t>(i)] = inv_std;
    for (int64_t j = 0; j < n; ++j)
      out.data[i * n + j] = tg.data[static_cast<size_t>(j)] * (row[j] - mean) * inv_std + tb.data[static_cast<size_t>(j)];
  }
  NodeId o = push(std::move(out));
  record([this, x, gain, bias, o, m, n, means = std::move(means), inv_stds = std::move(inv_stds)] {
    const double* go = grad_buf(o).data();
    const double* vx = nodes_[x].value.data.data();
    const double* vg = nodes_[gain].value.data.data();
    double* gx = grad_buf(x).data();
    double* gg = grad_buf(gain).data();
    double* gb = grad_buf(bias).data();
    for (int64_t i = 0; i < m; ++i) {
      const double* grow = go + i * n;
      const double* xrow = vx + i * n;
      double mean = means[static_cast<size_t>(i)];
      double inv_std = inv_stds[static_cast<size_t>(i)];
      // xhat_j = (x_j - mean) * inv_std ; y = g*xhat + b
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        double xhat = (xrow[j] - mean) * inv_std;
        double dxhat = grow[j] * vg[j];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        gg[j] += grow[j] * xhat;
        gb[j] += grow[j];
      }
      double inv_n = 1.0 / static_cast<double>(n);
      for (int64_t j = 0; j < n; ++j) {
        double xhat = (xrow[j] - mean) * inv_std;
        double dxhat = grow[j] * vg[j];
        gx[i * n + j] += inv_std * (dxhat - inv_n * sum_dxhat - inv_n * xhat * sum_dxhat_xhat);
      }
    }
  });
  return o;
}

Tape::NodeId Tape::softmax(NodeId x, int axis) {
  const Tensor& tx = value(x);
  require_2d(tx, "softmax");
  if (axis != 0 && axis != 1)
    fail(ErrorKind::Domain, "softmax axis " + std::to_string(axis) + " out of range for " + shape_str(tx.shape));
  int64_t m = tx.rows(), n = tx.cols();
  // Normalize along the given axis; implemented over rows of a view.
  int64_t outer = axis == 1 ? m : n;
  int64_t inner = axis == 1 ? n : m;
  auto idx = [axis, n](int64_t o, int64_t i) { return axis == 1 ? o * n + i : i * n + o; };
  Tensor out = Tensor::zeros({m, n});
  for (int64_t o = 0; o < outer; ++o) {
    double mx = -1e300;
    for (int64_t i = 0; i < inner; ++i) mx = std::max(mx, tx.data[idx(o, i)]);
    double z = 0.0;
    for (int64_t i = 0; i < inner; ++i) z += std::exp(tx.data[idx(o, i)] - mx);
    for (int64_t i = 0; i < inner; ++i) out.data[idx(o, i)] = std::exp(tx.data[idx(o, i)] - mx) / z;
  }
  NodeId oid = push(std::move(out));
  record([this, x, oid, outer, inner, idx] {
    const double* go = grad_buf(oid).data();
    const double* s = nodes_[oid].value.data.data();
    double* gx = grad_buf(x).data();
    for (int64_t o = 0; o < outer; ++o) {
      double dot = 0.0;
      for (int64_t i = 0; i < inner; ++i) dot += go[idx(o, i)] * s[idx(o, i)];
      for (int64_t i = 0; i < inner; ++i) gx[idx(o, i)] += s[idx(o, i)] * (go[idx(o, i)] - dot);
    }
  });
  return oid;
}

Tape::NodeId Tape::embedding_lookup(NodeId table, const std::vector<int32_t>& ids) {
  const Tensor& tt = value(table);
  require_2d(tt, "embedding_lookup table");
  int64_t v = tt.rows(), d = tt.cols();
  for (int32_t id : ids)
    if (id < 0 || id >= v)
      fail(ErrorKind::Vocab, "embedding_lookup id " + std::to_string(id) + " out of range [0," + std::to_string(v) + ")");
  Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tt.data.data() + static_cast<int64_t>(ids[i]) * d, d, out.data.data() + static_cast<int64_t>(i) * d);
  NodeId o = push(std::move(out));
  record([this, table, o, ids, d] {
    const double* go = grad_buf(o).data();
    double* gt = grad_buf(table).data();
    for (size_t i = 0; i < ids.size(); ++i) {
      double* trow = gt + static_cast<int64_t>(ids[i]) * d;
      const double* grow = go + static_cast<int64_t>(i) * d;
      for (int64_t j = 0; j < d; ++j) trow[j] += grow[j];
    }
  });
  return o;
}

Tape::NodeId Tape::concat(const std::vector<NodeId>& parts, int axis) {
  if (parts.empty()) fail(ErrorKind::Domain, "concat of zero tensors");
  const Tensor& first = value(parts[0]);
  int rank = first.rank();
  if (axis < 0 || axis >= rank)
    fail(ErrorKind::Domain, "concat axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  if (rank == 1) {
    int64_t total = 0;
    for (NodeId p : parts) {
      if (value(p).rank() != 1) fail(ErrorKind::Shape, "concat rank mismatch");
      total += value(p).dim(0);
    }
    Tensor out = Tensor::zeros({total});
    int64_t off = 0;
    for (NodeId p : parts) {
      const Tensor& t = value(p);
      std::copy(t.data.begin(), t.data.end(), out.data.begin() + off);
      off += t.numel();
    }
    NodeId o = push(std::move(out));
    record([this, parts, o] {
      const double* go = grad_buf(o).data();
      int64_t off2 = 0;
      for (NodeId p : parts) {
        double* gp = grad_buf(p).data();
        int64_t n = nodes_[p].value.numel();
        for (int64_t i = 0; i < n; ++i) gp[i] += go[off2 + i];
        off2 += n;
      }
    });
    return o;
  }
  if (rank != 2) fail(ErrorKind::Shape, "concat supports rank 1 and 2, got rank " + std::to_string(rank));
  if (axis == 0) {
    int64_t n = first.cols();
    int64_t m = 0;
    for (NodeId p : parts) {
      const Tensor& t = value(p);
      if (t.rank() != 2 || t.cols() != n) fail(ErrorKind::Shape, "concat axis 0 column mismatch");
      m += t.rows();
    }
    Tensor out = Tensor::zeros({m, n});
    int64_t row = 0;
    for (NodeId p : parts) {
      const Tensor& t = value(p);
      std::copy(t.data.begin(), t.data.end(), out.data.begin() + row * n);
      row += t.rows();
    }
    NodeId o = push(std::move(out));
    record([this, parts, o, n] {
      const double* go = grad_buf(o).data();
      int64_t row2 = 0;
      for (NodeId p : parts) {
        double* gp = grad_buf(p).data();
        int64_t cnt = nodes_[p].value.numel();
        for (int64_t i = 0; i < cnt; ++i) gp[i] += go[row2 * n + i];
        row2 += nodes_[p].value.rows();
      }
    });
    return o;
  }
  // axis == 1
  int64_t m = first.rows();
  int64_t total_cols = 0;
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    if (t.rank() != 2 || t.rows() != m) fail(ErrorKind::Shape, "concat axis 1 row mismatch");
    total_cols += t.cols();
  }
  Tensor out = Tensor::zeros({m, total_cols});
  int64_t col = 0;
  for (NodeId p : parts) {
    const Tensor& t = value(p);
    int64_t n = t.cols();
    for (int64_t i = 0; i < m; ++i)
      std::copy_n(t.data.data() + i * n, n, out.data.data() + i * total_cols + col);
    col += n;
  }
  NodeId o = push(std::move(out));
  record([this, parts, o, m, total_cols] {
    const double* go = grad_buf(o).data();
    int64_t col2 = 0;
    for (NodeId p : parts) {
      double* gp = grad_buf(p).data();
      int64_t n = nodes_[p].value.cols();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) gp[i * n + j] += go[i * total_cols + col2 + j];
      col2 += n;
    }
  });
  return o;
}

Tape::NodeId Tape::slice(NodeId a, int axis, int64_t start, int64_t len) {
  const Tensor& ta = value(a);
  int rank = ta.rank();
  if (axis < 0 || axis >= rank)
    fail(ErrorKind::Domain, "slice axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  if (start < 0 || len <= 0 || start + len > ta.dim(axis))
    fail(ErrorKind::Domain, "slice range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                ") out of bounds for " + shape_str(ta.shape));
  if (rank == 1) {
    Tensor out = Tensor::zeros({len});
    std::copy_n(ta.data.data() + start, len, out.data.data());
    NodeId o = push(std::move(out));
    record([this, a, o, start, len] {
      const double* go = grad_buf(o).data();
      double* ga = grad_buf(a).data();
      for (int64_t i = 0; i < len; ++i) ga[start + i] += go[i];
    });
    return o;
  }
  if (rank != 2) fail(ErrorKind::Shape, "slice supports rank 1 and 2");
  int64_t m = ta.rows(), n = ta.cols();
  if (axis == 0) {
    Tensor out = Tensor::zeros({len, n});
    std::copy_n(ta.data.data() + start * n, len * n, out.data.data());
    NodeId o = push(std::move(out));
    record([this, a, o, start, len, n] {
      const double* go = grad_buf(o).data();
      double* ga = grad_buf(a).data();
      for (int64_t i = 0; i < len * n; ++i) ga[start * n + i] += go[i];
    });
    return o;
  }
  Tensor out = Tensor::zeros({m, len});
  for (int64_t i = 0; i < m; ++i) std::copy_n(ta.data.data() + i * n + start, len, out.data.data() + i * len);
  NodeId o = push(std::move(out));
  record([this, a, o, start, len, m, n] {
    const double* go = grad_buf(o).data();
    double* ga = grad_buf(a).data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < len; ++j) ga[i * n + start + j] += go[i * len + j];
  });
  return o;
}

Tape::NodeId Tape::sum(NodeId a) {
  const Tensor& ta = value(a);
  double s = 0.0;
  for (double v : ta.data) s += v;
  NodeId o = push(Tensor::scalar(s));
  record([this, a, o] {
    double go = grad_buf(o)[0];
    std::vector<double>& ga = grad_buf(a);
    for (double& g : ga) g += go;
  });
  return o;
}

Tape::NodeId Tape::label_smoothed_nll(NodeId logits, const std::vector<int32_t>& targets, double epsilon,
                                      int32_t pad_id, int64_t* non_pad_count) {
  if (epsilon < 0.0 || epsilon >= 1.0) fail(ErrorKind::Domain, "label smoothing epsilon must lie in [0,1)");
  const Tensor& tl = value(logits);
  require_2d(tl, "label_smoothed_nll logits");
  int64_t n = tl.rows(), v = tl.cols();
  if (static_cast<int64_t>(targets.size()) != n)
    fail(ErrorKind::Shape, "targets length " + std::to_string(targets.size()) + " != logit rows " + std::to_string(n));
  for (int32_t t : targets)
    if (t < 0 || t >= v) fail(ErrorKind::Vocab, "target id " + std::to_string(t) + " outside vocabulary of " + std::to_string(v));

  // log-softmax per row; smoothed target distribution q = (1-eps)*onehot + eps/V.
  std::vector<double> logp(static_cast<size_t>(n * v));
  int64_t count = 0;
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double* row = tl.data.data() + i * v;
    double mx = -1e300;
    for (int64_t j = 0; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    double logz = std::log(z) + mx;
    for (int64_t j = 0; j < v; ++j) logp[static_cast<size_t>(i * v + j)] = row[j] - logz;
    if (targets[static_cast<size_t>(i)] == pad_id) continue;
    ++count;
    double nll_target = -logp[static_cast<size_t>(i * v + targets[static_cast<size_t>(i)])];
    double nll_mean = 0.0;
    for (int64_t j = 0; j < v; ++j) nll_mean -= logp[static_cast<size_t>(i * v + j)];
    nll_mean /= static_cast<double>(v);
    loss += (1.0 - epsilon) * nll_target + epsilon * nll_mean;
  }
  if (non_pad_count) *non_pad_count = count;
  double denom = count > 0 ? static_cast<double>(count) : 1.0;
  NodeId o = push(Tensor::scalar(loss / denom));
  record([this, logits, o, targets, epsilon, pad_id, n, v, denom, logp = std::move(logp)] {
    double go = grad_buf(o)[0] / denom;
    double* gl = grad_buf(logits).data();
    for (int64_t i = 0; i < n; ++i) {
      int32_t t = targets[static_cast<size_t>(i)];
      if (t == pad_id) continue;
      for (int64_t j = 0; j < v; ++j) {
        double p = std::exp(logp[static_cast<size_t>(i * v + j)]);
        double q = epsilon / static_cast<double>(v) + (j == t ? 1.0 - epsilon : 0.0);
        gl[i * v + j] += go * (p - q);
      }
    }
  });
  return o;
}

void Tape::backward(NodeId root) {
  if (!record_) fail(ErrorKind::Domain, "backward on a non-recording tape");
  if (ran_backward_) fail(ErrorKind::Domain, "backward already ran on this tape");
  ran_backward_ = true;
  const Tensor& t = value(root);
  if (t.numel() != 1) fail(ErrorKind::Shape, "backward root must be scalar, got " + shape_str(t.shape));
  grad_buf(root)[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

double grad_check(const std::function<Tape::NodeId(Tape&, Tape::NodeId)>& f, const Tensor& x,
                  double step) {
  Tape tape(true);
  Tape::NodeId in = tape.input(x);
  Tape::NodeId out = f(tape, in);
  tape.backward(out);
  std::vector<double> analytic = tape.grad(in);

  auto eval = [&f](const Tensor& point) {
    Tape t(false);
    return t.scalar_value(f(t, t.input(point)));
  };

  double worst = 0.0;
  Tensor probe = x;
  for (size_t i = 0; i < probe.data.size(); ++i) {
    double orig = probe.data[i];
    probe.data[i] = orig + step;
    double up = eval(probe);
    probe.data[i] = orig - step;
    double down = eval(probe);
    probe.data[i] = orig;
    double central = (up - down) / (2.0 * step);
    double err = std::fabs(analytic[i] - central) / (std::fabs(central) + 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace mtgrow
