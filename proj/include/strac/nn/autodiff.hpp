#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "strac/nn/tensor.hpp"

namespace strac::nn {

// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode gradient tape over dense matrices.
//
// Every op appends a node holding its forward value. Nodes that depend on a
// leaf created with requires_grad also record a backward closure. backward()
// walks the tape once in reverse order; a second call throws UsageError.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Tensor& upstream)>;

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  // Zero-sized until backward() has run and the node received a gradient.
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and back-propagates. loss must be 1x1.
  void backward(Var loss);
  bool backward_done() const { return backward_done_; }

  // Used by op implementations.
  Var record(Tensor value, std::initializer_list<Var> parents, Backprop fn);
  void accumulate(Var v, const Tensor& g);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backprop backprop;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Ops. Shapes in comments are rows x cols; B is a batch (column) count.
Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double s);
Var hadamard(Tape& t, Var a, Var b);
// x (r x B) + bias (r x 1) broadcast over columns.
Var add_colwise(Tape& t, Var x, Var bias);
Var relu(Tape& t, Var x);
Var square(Tape& t, Var x);
Var sum(Tape& t, Var x);
// sum(x .* weights) with weights a constant of the same shape.
Var weighted_sum(Tape& t, Var x, const Tensor& weights);

// Columns are grouped in consecutive blocks of `group` (one block per graph).
// group_sum: (r x B*group) -> (r x B).
Var group_sum(Tape& t, Var x, int group);
// group_sum_except_self: out[:, b*g+j] = sum_{i != j} x[:, b*g+i].
Var group_sum_except_self(Tape& t, Var x, int group);
// repeat_cols: (r x B) -> (r x B*group), column b copied into its block.
Var repeat_cols(Tape& t, Var x, int group);

// Column-wise f = h + (l - max_row(l)); h is 1 x B, l is k x B.
// Ties in max route the gradient to the lowest row.
Var hierarchical_compose(Tape& t, Var h, Var l);
// Stacks per-graph rows: first (ki x B) then, for slot i of graph b, the
// ks rows of s[:, b*n+i]. Result is (ki + ks*n) x B.
Var stack_nodes(Tape& t, Var first, Var slots, int n);

Var softmax_cols(Tape& t, Var x);
// Log-softmax per column over entries where mask == 1. Masked entries are
// excluded from the normaliser and hold value 0 with zero gradient.
Var masked_log_softmax_cols(Tape& t, Var x, const Tensor& mask);
// -sum_a p log p per column over unmasked entries, p = exp(logp).
Var entropy_from_log_probs(Tape& t, Var logp, const Tensor& mask);
// out[0, b] = x[rows[b], b].
Var pick_rows(Tape& t, Var x, std::span<const int> rows);
// out[0, b] = dot(a[:, b], c[:, b]).
Var col_dot(Tape& t, Var a, Var c);

}  // namespace strac::nn
