#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pprec/core/optim.hpp"
#include "pprec/core/tensor.hpp"

namespace pprec::core {

class Tape;

/// Handle to a node on a tape. Cheap to copy; owns nothing.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  bool valid() const { return tape != nullptr; }
  const Tensor& value() const;
  double item() const { return value().item(); }
};

// Eager reverse-mode tape over 2-D tensors. Operations execute immediately
// and record a backprop closure; backward() walks nodes in reverse creation
// order (creation order is topological under eager evaluation) and then
// flushes leaf gradients into their Parameters.
//
// A tape is single-threaded and single-shot: one backward() per tape.
// Forward-only tapes (grad_enabled = false) skip closure recording and are
// safe to use concurrently over frozen parameters, one tape per thread.
class Tape {
public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  /// Leaf node for a trainable parameter; memoized per tape so repeated uses
  /// share one node and gradients accumulate.
  Var param(Parameter& p);
  /// Row gather from an embedding table; backward scatter-adds into the
  /// table's gradient.
  Var lookup_rows(Parameter& table, std::vector<int> ids);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  /// Elementwise product with a constant factor (dropout masks).
  Var mul_const(Var a, Tensor factor);
  Var scale(Var a, double alpha);
  /// a[m x n] + row[1 x n], broadcast over rows.
  Var add_rowvec(Var a, Var row);
  Var tanh(Var a);
  Var sigmoid(Var a);
  /// log(sigmoid(x)), computed without overflow for large |x|.
  Var log_sigmoid(Var a);
  /// Row-wise softmax with per-row max subtraction.
  Var softmax_rows(Var a);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_cols(Var a, std::size_t start, std::size_t width);
  /// Stack [1 x 1] nodes into an [n x 1] column.
  Var stack_scalars(const std::vector<Var>& scalars);
  Var sum(Var a);
  Var mean(Var a);

  // Fused scaled dot-product attention over pre-projected inputs.
  // q: [Lq x h*d], k/v: [Lc x h*d]; per head softmax(Qh Kh^T / sqrt(d)) Vh,
  // heads concatenated. attn_out, when given, receives the h attention
  // matrices [Lq x Lc].
  Var multi_head_mix(Var q, Var k, Var v, std::size_t heads,
                     std::vector<Tensor>* attn_out = nullptr);

  /// Accumulate d(loss)/d(parameter) into every reachable Parameter's grad.
  void backward(Var loss);

  const Tensor& node_value(std::uint32_t id) const { return nodes_[id].value; }
  std::size_t node_count() const { return nodes_.size(); }

private:
  using Backprop = std::function<void(Tape&, std::uint32_t self, const Tensor& grad)>;

  struct Node {
    Tensor value;
    Backprop backprop;  // empty for leaves / forward-only tapes
  };

  Var make_node(Tensor value, Backprop backprop);
  Tensor& grad_buf(std::uint32_t id);
  void accumulate(std::uint32_t id, const Tensor& delta);
  void check_same_shape(const Tensor& a, const Tensor& b, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
  std::vector<std::pair<Parameter*, std::uint32_t>> param_order_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape->node_value(id); }

}  // namespace pprec::core
