#include "gin/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace gin::ad {

namespace {
constexpr double kBceClampLo = 1e-12;
constexpr double kBceClampHi = 1.0 - 1e-12;
}  // namespace

const Tensor& Gradients::dense_at(const Tensor& p) const {
  auto it = dense.find(&p);
  if (it == dense.end()) throw std::invalid_argument("gradients: tensor not registered as dense param");
  return it->second;
}

Tensor Gradients::densified(const Tensor& p) const {
  if (auto it = dense.find(&p); it != dense.end()) return it->second;
  auto it = rows.find(&p);
  if (it == rows.end()) throw std::invalid_argument("gradients: tensor was not a leaf on this tape");
  Tensor g = Tensor::zeros(p.shape);
  const std::size_t cols = p.is_matrix() ? p.cols() : p.size();
  for (const auto& [row, vals] : it->second)
    for (std::size_t j = 0; j < cols; ++j) g.values[row * cols + j] += vals[j];
  return g;
}

const Tape::Node& Tape::at(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw std::invalid_argument("tape: bad node id");
  return nodes_[static_cast<std::size_t>(id)];
}

double* Tape::value_ptr(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.leaf != nullptr) return n.leaf->values.data();
  return pool_.data() + n.val_off;
}

const double* Tape::value_ptr(NodeId id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.leaf != nullptr) return n.leaf->values.data();
  return pool_.data() + n.val_off;
}

std::span<const double> Tape::value(NodeId id) const {
  const Node& n = at(id);
  return {value_ptr(id), n.len};
}

Tensor Tape::value_tensor(NodeId id) const {
  const Node& n = at(id);
  Tensor t;
  if (n.mat_rows > 0)
    t.shape = {n.mat_rows, n.mat_cols};
  else
    t.shape = {n.len};
  auto v = value(id);
  t.values.assign(v.begin(), v.end());
  return t;
}

void Tape::check_vector(NodeId id, const char* who) const {
  if (at(id).mat_rows > 0) throw std::invalid_argument(std::string(who) + ": expected a 1-D value");
}

NodeId Tape::push(Node n, std::size_t value_len) {
  n.len = static_cast<std::uint32_t>(value_len);
  if (n.leaf == nullptr) {
    n.val_off = static_cast<std::uint32_t>(pool_.size());
    pool_.resize(pool_.size() + value_len);
  }
  nodes_.push_back(n);
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::param(Tensor& t) {
  if (auto it = leaf_ids_.find(&t); it != leaf_ids_.end()) return it->second;
  Node n;
  n.op = Op::kLeaf;
  n.leaf = &t;
  if (t.is_matrix()) {
    n.mat_rows = static_cast<std::uint32_t>(t.rows());
    n.mat_cols = static_cast<std::uint32_t>(t.cols());
  }
  NodeId id = push(n, t.size());
  leaf_ids_.emplace(&t, id);
  return id;
}

NodeId Tape::param_rows(Tensor& t) {
  if (!t.is_matrix()) throw std::invalid_argument("tape: param_rows expects a matrix table");
  if (auto it = leaf_ids_.find(&t); it != leaf_ids_.end()) return it->second;
  Node n;
  n.op = Op::kLeafRows;
  n.leaf = &t;
  n.mat_rows = static_cast<std::uint32_t>(t.rows());
  n.mat_cols = static_cast<std::uint32_t>(t.cols());
  NodeId id = push(n, t.size());
  leaf_ids_.emplace(&t, id);
  return id;
}

NodeId Tape::input(const Tensor& t) {
  Node n;
  n.op = Op::kInput;
  if (t.is_matrix()) {
    n.mat_rows = static_cast<std::uint32_t>(t.rows());
    n.mat_cols = static_cast<std::uint32_t>(t.cols());
  }
  NodeId id = push(n, t.size());
  std::copy(t.values.begin(), t.values.end(), val(id));
  return id;
}

NodeId Tape::input(std::span<const double> v) {
  Node n;
  n.op = Op::kInput;
  NodeId id = push(n, v.size());
  std::copy(v.begin(), v.end(), val(id));
  return id;
}

NodeId Tape::zeros(std::size_t len) {
  Node n;
  n.op = Op::kInput;
  NodeId id = push(n, len);
  std::fill_n(val(id), len, 0.0);
  return id;
}

NodeId Tape::embed_lookup(NodeId table, std::size_t row) {
  const Node& t = at(table);
  if (t.mat_rows == 0) throw std::invalid_argument("embed_lookup: table must be 2-D");
  // Out-of-vocabulary callers map to the UNK row before reaching the tape;
  // a row beyond the table is a programming error, not data.
  if (row >= t.mat_rows) throw std::invalid_argument("embed_lookup: row out of range");
  Node n;
  n.op = Op::kEmbedLookup;
  n.a = table;
  n.row = static_cast<std::uint32_t>(row);
  NodeId id = push(n, t.mat_cols);
  const double* src = value_ptr(table) + row * t.mat_cols;
  std::copy_n(src, t.mat_cols, val(id));
  return id;
}

NodeId Tape::matvec(NodeId w, NodeId x) {
  const Node& wn = at(w);
  const Node& xn = at(x);
  if (wn.mat_rows == 0) throw std::invalid_argument("matvec: W must be 2-D");
  check_vector(x, "matvec");
  if (xn.len != wn.mat_cols) throw std::invalid_argument("matvec: shape mismatch");
  if (wn.op == Op::kLeafRows) throw std::invalid_argument("matvec: table leaves only support embed_lookup");
  Node n;
  n.op = Op::kMatVec;
  n.a = w;
  n.b = x;
  NodeId id = push(n, wn.mat_rows);
  const double* W = value_ptr(w);
  const double* X = value_ptr(x);
  double* out = val(id);
  const std::size_t rows = wn.mat_rows, cols = wn.mat_cols;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* wr = W + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += wr[j] * X[j];
    out[i] = acc;
  }
  return id;
}

NodeId Tape::affine(NodeId w, NodeId x, NodeId b) {
  const Node& wn = at(w);
  const Node& bn = at(b);
  if (wn.mat_rows == 0) throw std::invalid_argument("affine: W must be 2-D");
  check_vector(b, "affine");
  if (bn.len != wn.mat_rows) throw std::invalid_argument("affine: bias shape mismatch");
  if (at(x).len != wn.mat_cols) throw std::invalid_argument("affine: input shape mismatch");
  if (wn.op == Op::kLeafRows) throw std::invalid_argument("affine: table leaves only support embed_lookup");
  check_vector(x, "affine");
  Node n;
  n.op = Op::kAffine;
  n.a = w;
  n.b = x;
  n.c = b;
  NodeId id = push(n, wn.mat_rows);
  const double* W = value_ptr(w);
  const double* X = value_ptr(x);
  const double* B = value_ptr(b);
  double* out = val(id);
  const std::size_t rows = wn.mat_rows, cols = wn.mat_cols;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* wr = W + i * cols;
    double acc = B[i];
    for (std::size_t j = 0; j < cols; ++j) acc += wr[j] * X[j];
    out[i] = acc;
  }
  return id;
}

NodeId Tape::relu(NodeId x) {
  const Node& xn = at(x);
  Node n;
  n.op = Op::kRelu;
  n.a = x;
  n.mat_rows = xn.mat_rows;
  n.mat_cols = xn.mat_cols;
  NodeId id = push(n, xn.len);
  const double* X = value_ptr(x);
  double* out = val(id);
  for (std::uint32_t i = 0; i < xn.len; ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
  return id;
}

NodeId Tape::softmax(NodeId x) {
  check_vector(x, "softmax");
  const Node& xn = at(x);
  if (xn.len == 0) throw std::invalid_argument("softmax: empty input");
  Node n;
  n.op = Op::kSoftmax;
  n.a = x;
  NodeId id = push(n, xn.len);
  const double* X = value_ptr(x);
  double* out = val(id);
  double mx = X[0];
  for (std::uint32_t i = 1; i < xn.len; ++i) mx = std::max(mx, X[i]);
  double sum = 0.0;
  for (std::uint32_t i = 0; i < xn.len; ++i) {
    out[i] = std::exp(X[i] - mx);
    sum += out[i];
  }
  for (std::uint32_t i = 0; i < xn.len; ++i) out[i] /= sum;
  return id;
}

NodeId Tape::sigmoid(NodeId x) {
  const Node& xn = at(x);
  Node n;
  n.op = Op::kSigmoid;
  n.a = x;
  NodeId id = push(n, xn.len);
  const double* X = value_ptr(x);
  double* out = val(id);
  for (std::uint32_t i = 0; i < xn.len; ++i) out[i] = 1.0 / (1.0 + std::exp(-X[i]));
  return id;
}

NodeId Tape::concat(std::span<const NodeId> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: empty parts list");
  std::size_t total = 0;
  for (NodeId p : parts) {
    check_vector(p, "concat");
    total += at(p).len;
  }
  Node n;
  n.op = Op::kConcat;
  n.extra_off = static_cast<std::uint32_t>(extra_.size());
  n.extra_len = static_cast<std::uint32_t>(parts.size());
  extra_.insert(extra_.end(), parts.begin(), parts.end());
  NodeId id = push(n, total);
  double* out = val(id);
  for (NodeId p : parts) {
    auto v = value(p);
    out = std::copy(v.begin(), v.end(), out);
  }
  return id;
}

NodeId Tape::dot(NodeId a, NodeId b) {
  check_vector(a, "dot");
  check_vector(b, "dot");
  if (at(a).len != at(b).len) throw std::invalid_argument("dot: length mismatch");
  Node n;
  n.op = Op::kDot;
  n.a = a;
  n.b = b;
  NodeId id = push(n, 1);
  const double* A = value_ptr(a);
  const double* B = value_ptr(b);
  double acc = 0.0;
  for (std::uint32_t i = 0; i < at(a).len; ++i) acc += A[i] * B[i];
  *val(id) = acc;
  return id;
}

NodeId Tape::scale(NodeId x, double c) {
  const Node& xn = at(x);
  Node n;
  n.op = Op::kScale;
  n.a = x;
  n.scalar = c;
  NodeId id = push(n, xn.len);
  const double* X = value_ptr(x);
  double* out = val(id);
  for (std::uint32_t i = 0; i < xn.len; ++i) out[i] = c * X[i];
  return id;
}

NodeId Tape::weighted_sum(std::span<const NodeId> vectors, NodeId weights) {
  if (vectors.empty()) throw std::invalid_argument("weighted_sum: empty vector list");
  check_vector(weights, "weighted_sum");
  if (at(weights).len != vectors.size())
    throw std::invalid_argument("weighted_sum: weight count != vector count");
  const std::uint32_t dim = at(vectors[0]).len;
  for (NodeId v : vectors) {
    check_vector(v, "weighted_sum");
    if (at(v).len != dim) throw std::invalid_argument("weighted_sum: mixed vector lengths");
  }
  Node n;
  n.op = Op::kWeightedSum;
  n.b = weights;
  n.extra_off = static_cast<std::uint32_t>(extra_.size());
  n.extra_len = static_cast<std::uint32_t>(vectors.size());
  extra_.insert(extra_.end(), vectors.begin(), vectors.end());
  NodeId id = push(n, dim);
  const double* W = value_ptr(weights);
  double* out = val(id);
  std::fill_n(out, dim, 0.0);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    const double* V = value_ptr(vectors[k]);
    const double w = W[k];
    for (std::uint32_t i = 0; i < dim; ++i) out[i] += w * V[i];
  }
  return id;
}

NodeId Tape::bce_loss(NodeId p, double label) {
  check_vector(p, "bce_loss");
  if (at(p).len != 1) throw std::invalid_argument("bce_loss: prediction must be scalar");
  if (label != 0.0 && label != 1.0) throw std::invalid_argument("bce_loss: label must be 0 or 1");
  Node n;
  n.op = Op::kBceLoss;
  n.a = p;
  n.scalar = label;
  NodeId id = push(n, 1);
  const double raw = *value_ptr(p);
  const double c = std::clamp(raw, kBceClampLo, kBceClampHi);
  *val(id) = -(label * std::log(c) + (1.0 - label) * std::log(1.0 - c));
  return id;
}

NodeId Tape::mean_all(NodeId x) {
  check_vector(x, "mean_all");
  const Node& xn = at(x);
  if (xn.len == 0) throw std::invalid_argument("mean_all: empty input");
  Node n;
  n.op = Op::kMeanAll;
  n.a = x;
  NodeId id = push(n, 1);
  const double* X = value_ptr(x);
  double acc = 0.0;
  for (std::uint32_t i = 0; i < xn.len; ++i) acc += X[i];
  *val(id) = acc / static_cast<double>(xn.len);
  return id;
}

Gradients Tape::backward(NodeId loss) {
  Gradients g;
  backward(loss, g);
  return g;
}

void Tape::backward(NodeId loss, Gradients& out) {
  const Node& ln = at(loss);
  if (ln.len != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (ln.leaf != nullptr) throw std::invalid_argument("backward: loss must be a computed node");

  out.clear();
  grad_.assign(pool_.size(), 0.0);
  // Zero-gradient entries for every registered leaf, reachable or not.
  for (const auto& [tensor, id] : leaf_ids_) {
    if (nodes_[static_cast<std::size_t>(id)].op == Op::kLeaf)
      out.dense.emplace(tensor, Tensor::zeros(tensor->shape));
    else
      out.rows.emplace(tensor, std::map<std::size_t, std::vector<double>>{});
  }

  // Gradient buffer of a node: pool span for computed nodes, the dense
  // result tensor for kLeaf, nullptr for kInput / kLeafRows.
  auto grad_of = [&](NodeId id) -> double* {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    switch (n.op) {
      case Op::kLeaf:
        return out.dense.find(n.leaf)->second.values.data();
      case Op::kLeafRows:
      case Op::kInput:
        return nullptr;
      default:
        return grad_.data() + n.val_off;
    }
  };

  grad_[nodes_[static_cast<std::size_t>(loss)].val_off] = 1.0;

  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    switch (n.op) {
      case Op::kLeaf:
      case Op::kLeafRows:
      case Op::kInput:
        break;

      case Op::kEmbedLookup: {
        const double* g = grad_.data() + n.val_off;
        Node& tn = nodes_[static_cast<std::size_t>(n.a)];
        if (tn.op == Op::kLeafRows) {
          auto& rmap = out.rows.find(tn.leaf)->second;
          auto [it, fresh] = rmap.try_emplace(n.row, std::vector<double>(n.len, 0.0));
          double* dst = it->second.data();
          for (std::uint32_t i = 0; i < n.len; ++i) dst[i] += g[i];
        } else if (double* tg = grad_of(n.a); tg != nullptr) {
          double* dst = tg + static_cast<std::size_t>(n.row) * n.len;
          for (std::uint32_t i = 0; i < n.len; ++i) dst[i] += g[i];
        }
        break;
      }

      case Op::kMatVec:
      case Op::kAffine: {
        const double* g = grad_.data() + n.val_off;
        const Node& wn = nodes_[static_cast<std::size_t>(n.a)];
        const std::size_t rows = wn.mat_rows, cols = wn.mat_cols;
        const double* X = value_ptr(n.b);
        if (double* gw = grad_of(n.a); gw != nullptr) {
          for (std::size_t i = 0; i < rows; ++i) {
            double* gr = gw + i * cols;
            const double gi = g[i];
            for (std::size_t j = 0; j < cols; ++j) gr[j] += gi * X[j];
          }
        }
        if (double* gx = grad_of(n.b); gx != nullptr) {
          const double* W = value_ptr(n.a);
          for (std::size_t i = 0; i < rows; ++i) {
            const double* wr = W + i * cols;
            const double gi = g[i];
            for (std::size_t j = 0; j < cols; ++j) gx[j] += gi * wr[j];
          }
        }
        if (n.op == Op::kAffine) {
          if (double* gb = grad_of(n.c); gb != nullptr)
            for (std::size_t i = 0; i < rows; ++i) gb[i] += g[i];
        }
        break;
      }

      case Op::kRelu: {
        if (double* gx = grad_of(n.a); gx != nullptr) {
          const double* g = grad_.data() + n.val_off;
          const double* X = value_ptr(n.a);
          // Subgradient at exactly 0 is 0.
          for (std::uint32_t i = 0; i < n.len; ++i)
            if (X[i] > 0.0) gx[i] += g[i];
        }
        break;
      }

      case Op::kSoftmax: {
        if (double* gx = grad_of(n.a); gx != nullptr) {
          const double* g = grad_.data() + n.val_off;
          const double* y = pool_.data() + n.val_off;
          double s = 0.0;
          for (std::uint32_t i = 0; i < n.len; ++i) s += g[i] * y[i];
          for (std::uint32_t i = 0; i < n.len; ++i) gx[i] += y[i] * (g[i] - s);
        }
        break;
      }

      case Op::kSigmoid: {
        if (double* gx = grad_of(n.a); gx != nullptr) {
          const double* g = grad_.data() + n.val_off;
          const double* y = pool_.data() + n.val_off;
          for (std::uint32_t i = 0; i < n.len; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
        }
        break;
      }

      case Op::kConcat: {
        const double* g = grad_.data() + n.val_off;
        std::size_t off = 0;
        for (std::uint32_t k = 0; k < n.extra_len; ++k) {
          NodeId part = extra_[n.extra_off + k];
          const std::uint32_t plen = nodes_[static_cast<std::size_t>(part)].len;
          if (double* gp = grad_of(part); gp != nullptr)
            for (std::uint32_t i = 0; i < plen; ++i) gp[i] += g[off + i];
          off += plen;
        }
        break;
      }

      case Op::kDot: {
        const double g = grad_[n.val_off];
        const std::uint32_t len = nodes_[static_cast<std::size_t>(n.a)].len;
        if (double* ga = grad_of(n.a); ga != nullptr) {
          const double* B = value_ptr(n.b);
          for (std::uint32_t i = 0; i < len; ++i) ga[i] += g * B[i];
        }
        if (double* gb = grad_of(n.b); gb != nullptr) {
          const double* A = value_ptr(n.a);
          for (std::uint32_t i = 0; i < len; ++i) gb[i] += g * A[i];
        }
        break;
      }

      case Op::kScale: {
        if (double* gx = grad_of(n.a); gx != nullptr) {
          const double* g = grad_.data() + n.val_off;
          for (std::uint32_t i = 0; i < n.len; ++i) gx[i] += n.scalar * g[i];
        }
        break;
      }

      case Op::kWeightedSum: {
        const double* g = grad_.data() + n.val_off;
        const double* W = value_ptr(n.b);
        double* gw = grad_of(n.b);
        for (std::uint32_t k = 0; k < n.extra_len; ++k) {
          NodeId v = extra_[n.extra_off + k];
          const double* V = value_ptr(v);
          if (double* gv = grad_of(v); gv != nullptr) {
            const double w = W[k];
            for (std::uint32_t i = 0; i < n.len; ++i) gv[i] += w * g[i];
          }
          if (gw != nullptr) {
            double acc = 0.0;
            for (std::uint32_t i = 0; i < n.len; ++i) acc += g[i] * V[i];
            gw[k] += acc;
          }
        }
        break;
      }

      case Op::kBceLoss: {
        if (double* gp = grad_of(n.a); gp != nullptr) {
          const double g = grad_[n.val_off];
          const double p = *value_ptr(n.a);
          if (p > kBceClampLo && p < kBceClampHi) {
            const double y = n.scalar;
            gp[0] += g * (-y / p + (1.0 - y) / (1.0 - p));
          }
          // Clamped predictions sit on a flat section: zero gradient.
        }
        break;
      }

      case Op::kMeanAll: {
        if (double* gx = grad_of(n.a); gx != nullptr) {
          const double g = grad_[n.val_off];
          const std::uint32_t len = nodes_[static_cast<std::size_t>(n.a)].len;
          const double share = g / static_cast<double>(len);
          for (std::uint32_t i = 0; i < len; ++i) gx[i] += share;
        }
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  pool_.clear();
  extra_.clear();
  leaf_ids_.clear();
}

double Tape::min_relu_input_magnitude() const {
  double best = std::numeric_limits<double>::infinity();
  for (const Node& n : nodes_) {
    if (n.op != Op::kRelu) continue;
    const double* x = value_ptr(n.a);
    const std::uint32_t len = nodes_[static_cast<std::size_t>(n.a)].len;
    for (std::uint32_t i = 0; i < len; ++i) best = std::min(best, std::abs(x[i]));
  }
  return best;
}

GradCheckReport grad_check(
    const std::function<NodeId(Tape&)>& build_loss,
    std::span<const std::pair<std::string, Tensor*>> params,
    double eps,
    double tol) {
  if (eps <= 0.0 || tol <= 0.0) throw std::invalid_argument("grad_check: eps and tol must be positive");

  Tape tape;
  NodeId loss = build_loss(tape);
  Gradients grads = tape.backward(loss);

  auto eval_loss = [&]() {
    Tape t;
    NodeId l = build_loss(t);
    return t.value(l)[0];
  };

  GradCheckReport report;
  for (const auto& [name, p] : params) {
    Tensor analytic = grads.densified(*p);
    double worst = 0.0;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double keep = p->values[i];
      p->values[i] = keep + eps;
      const double up = eval_loss();
      p->values[i] = keep - eps;
      const double down = eval_loss();
      p->values[i] = keep;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic.values[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic.values[i] - numeric) / denom);
    }
    report.per_param.push_back({name, worst});
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace gin::ad
