#pragma once

#include <functional>
#include <vector>

#include "mtgrow/tensor.hpp"

namespace mtgrow {

// Reverse-mode autodiff over an explicit operation tape. Each op appends its
// output node plus a closure that scatters the output adjoint back onto the
// inputs; backward() replays the closures in reverse order. A tape built with
// record=false keeps values only (cheap evaluation-mode forward).
class Tape {
 public:
  using NodeId = int32_t;

  explicit Tape(bool record = true) : record_(record) {}

  NodeId input(Tensor value);

  const Tensor& value(NodeId id) const { return nodes_[check(id)].value; }
  const std::vector<double>& grad(NodeId id) const;
  double scalar_value(NodeId id) const;

  NodeId matmul(NodeId a, NodeId b);
  NodeId matmul_nt(NodeId a, NodeId b);  // a * transpose(b)
  NodeId transpose(NodeId a);
  // Same-shape elementwise add, or bias-row broadcast when b is a vector
  // matching a's column count. No other implicit broadcasting.
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double c);
  NodeId relu(NodeId a);
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps);
  NodeId softmax(NodeId x, int axis);
  NodeId embedding_lookup(NodeId table, const std::vector<int32_t>& ids);
  NodeId concat(const std::vector<NodeId>& parts, int axis);
  NodeId slice(NodeId a, int axis, int64_t start, int64_t len);
  NodeId sum(NodeId a);
  // Mean over non-pad targets of (1-eps)*NLL(target) + eps*mean_v NLL(v).
  // Returns a scalar node; non_pad_count reports the normalizer.
  NodeId label_smoothed_nll(NodeId logits, const std::vector<int32_t>& targets, double epsilon,
                            int32_t pad_id, int64_t* non_pad_count = nullptr);

  void backward(NodeId root);

  bool recording() const { return record_; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
  };

  NodeId push(Tensor value);
  NodeId check(NodeId id) const;
  std::vector<double>& grad_buf(NodeId id) { return nodes_[check(id)].grad; }
  void record(std::function<void()> fn);

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> ops_;
  bool record_;
  bool ran_backward_ = false;
};

// Max over coordinates of |autodiff - central difference| / (|central difference| + 1e-8).
// f builds a scalar node from the input node on the given tape.
double grad_check(const std::function<Tape::NodeId(Tape&, Tape::NodeId)>& f, const Tensor& x,
                  double step);

}  // namespace mtgrow
