#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gin/tensor.hpp"

namespace gin::ad {

using NodeId = std::int32_t;

// Gradients produced by one backward pass, keyed by parameter address.
// Small parameters get dense gradients; embedding tables registered with
// param_rows() get per-row gradients (only the rows touched by lookups).
struct Gradients {
  std::unordered_map<const Tensor*, Tensor> dense;
  std::unordered_map<const Tensor*, std::map<std::size_t, std::vector<double>>> rows;

  void clear() {
    dense.clear();
    rows.clear();
  }

  const Tensor& dense_at(const Tensor& p) const;
  // Full-shape gradient regardless of registration kind (zero-filled rows
  // for untouched table rows). Used by the finite-difference checker.
  Tensor densified(const Tensor& p) const;
};

// Append-only record of primitive ops over 1-D values, built eagerly per
// sample (the graph structure follows each sample's diffusion tree).
// Values of computed nodes live in one contiguous pool; leaves reference
// the caller-owned parameter tensors directly. One tape per worker.
class Tape {
 public:
  // Learnable leaf with a dense gradient. Registering the same tensor twice
  // on one tape returns the same node, so gradients accumulate.
  NodeId param(Tensor& t);
  // Learnable embedding table; gradients come back as touched rows only.
  // May only be consumed by embed_lookup.
  NodeId param_rows(Tensor& t);
  // Constant; no gradient is tracked. Value is copied onto the tape.
  NodeId input(const Tensor& t);
  NodeId input(std::span<const double> v);
  NodeId zeros(std::size_t n);

  NodeId embed_lookup(NodeId table, std::size_t row);
  NodeId matvec(NodeId w, NodeId x);             // W·x
  NodeId affine(NodeId w, NodeId x, NodeId b);   // W·x + b
  NodeId relu(NodeId x);
  NodeId softmax(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId concat(std::span<const NodeId> parts);
  NodeId dot(NodeId a, NodeId b);                // scalar result, shape {1}
  NodeId scale(NodeId x, double c);
  // sum_k weights[k] * vectors[k]; all vectors share one length.
  NodeId weighted_sum(std::span<const NodeId> vectors, NodeId weights);
  // -(y·ln p + (1-y)·ln(1-p)) with p clamped to [1e-12, 1-1e-12].
  NodeId bce_loss(NodeId p, double label);
  NodeId mean_all(NodeId x);                     // scalar mean of entries

  std::span<const double> value(NodeId id) const;
  Tensor value_tensor(NodeId id) const;
  std::size_t num_nodes() const { return nodes_.size(); }

  // Smallest |x| over all relu inputs on the tape (+inf if none). Lets
  // finite-difference fixtures reject instances near the kink.
  double min_relu_input_magnitude() const;

  // Reverse-mode sweep from a scalar loss node. Fills `out` with gradients
  // for every registered parameter leaf (zero for unreachable ones).
  void backward(NodeId loss, Gradients& out);
  Gradients backward(NodeId loss);

  // Drop all nodes but keep pool capacity for reuse across samples.
  void reset();

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kLeafRows,
    kInput,
    kEmbedLookup,
    kMatVec,
    kAffine,
    kRelu,
    kSoftmax,
    kSigmoid,
    kConcat,
    kDot,
    kScale,
    kWeightedSum,
    kBceLoss,
    kMeanAll,
  };

  struct Node {
    Op op;
    NodeId a = -1, b = -1, c = -1;
    std::uint32_t val_off = 0;
    std::uint32_t len = 0;
    std::uint32_t extra_off = 0, extra_len = 0;
    Tensor* leaf = nullptr;
    double scalar = 0.0;
    std::uint32_t row = 0;
    std::uint32_t mat_rows = 0, mat_cols = 0;  // set when the value is 2-D
  };

  std::vector<Node> nodes_;
  std::vector<double> pool_;       // values of computed nodes
  std::vector<double> grad_;       // per-node gradient buffers (backward)
  std::vector<NodeId> extra_;      // input lists for concat / weighted_sum
  std::unordered_map<const Tensor*, NodeId> leaf_ids_;

  NodeId push(Node n, std::size_t value_len);
  double* val(NodeId id) { return value_ptr(id); }
  double* value_ptr(NodeId id);
  const double* value_ptr(NodeId id) const;
  const Node& at(NodeId id) const;
  void check_vector(NodeId id, const char* who) const;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Compares reverse-mode gradients against central finite differences
// (f(p+eps) - f(p-eps)) / (2 eps). `build_loss` must deterministically
// rebuild the scalar loss from the current parameter values. Relative
// error uses denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(
    const std::function<NodeId(Tape&)>& build_loss,
    std::span<const std::pair<std::string, Tensor*>> params,
    double eps,
    double tol);

}  // namespace gin::ad
