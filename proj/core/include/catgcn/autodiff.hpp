#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "catgcn/dataset.hpp"
#include "catgcn/dense.hpp"
#include "catgcn/graph.hpp"
#include "catgcn/interaction.hpp"

namespace catgcn {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  friend bool operator==(Var, Var) = default;
};

struct Tensor {
  DenseMatrix value;
  bool requires_grad = false;

  std::vector<std::size_t> shape() const { return {value.rows(), value.cols()}; }
};

// Gradients of a scalar with respect to every leaf that requires them, in
// leaf creation order.
class GradientSet {
 public:
  const DenseMatrix& of(Var v) const;
  bool contains(Var v) const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::span<const std::pair<Var, DenseMatrix>> entries() const noexcept { return entries_; }

 private:
  friend class Tape;
  std::vector<std::pair<Var, DenseMatrix>> entries_;
};

// Reverse-mode recording tape for the model's operator set. Every primitive
// evaluates eagerly, records its inputs and a backward rule, and returns a
// handle. backward() replays the rules in exact reverse recording order and
// accumulates contributions additively.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var leaf(DenseMatrix value, bool requires_grad = true);
  Var constant(DenseMatrix value) { return leaf(std::move(value), false); }

  const DenseMatrix& value(Var v) const { return nodes_.at(v.id).tensor.value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).tensor.requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  // x (R x C) plus a 1 x C bias broadcast over rows.
  Var add_bias(Var x, Var bias);
  Var mul(Var a, Var b);
  Var square(Var a);
  // relu'(0) is taken as 0.
  Var relu(Var a);
  Var scale(Var a, double c);
  // Reduce consecutive blocks of `group` rows to one row.
  Var mean_rows(Var x, std::size_t group);
  Var sum_rows(Var x, std::size_t group);
  // Sum of all entries, as a 1 x 1 value.
  Var sum(Var x);
  // Row k = weights[k] * table[ids[k]]; backward scatter-adds into table.
  Var gather_rows(Var table, std::vector<FeatureId> ids, std::vector<double> weights);
  // Per-group bi-interaction pooling (one output row per group).
  Var biinteraction(Var x, std::size_t group);
  // Per-group artificial-graph propagation with probe coefficient rho.
  Var artificial_prop(Var x, std::size_t group, double rho);
  // Fused gather + pooling straight from an embedding table; equal to
  // biinteraction / mean_rows / mean_rows(relu(artificial_prop(.))) applied
  // to gather_rows(table, slots) without materializing the slot matrix.
  Var pooled_biinteraction(Var table, std::shared_ptr<const SlotRows> slots);
  Var pooled_mean(Var table, std::shared_ptr<const SlotRows> slots);
  Var pooled_global(Var table_w, std::shared_ptr<const SlotRows> slots, double rho);
  // adj^hops x. adj must be symmetric and outlive the tape.
  Var sparse_propagate(const CsrMatrix& adj, Var x, std::size_t hops);
  // Mean over `rows` of -log softmax(logits[r])[labels[r]], as 1 x 1.
  Var softmax_cross_entropy(Var logits, std::span<const ClassId> labels, std::span<const NodeId> rows);

  // Requires a 1 x 1 loss.
  GradientSet backward(Var loss);

  // When enabled, relu-bearing primitives record their smallest |input|.
  void track_relu_margin(bool on) noexcept { track_margin_ = on; }
  // Smallest tracked |relu input| on the tape (infinity when none).
  double relu_margin() const;

 private:
  using BackwardFn = std::function<void(Tape&, const DenseMatrix&)>;

  struct Node {
    Tensor tensor;
    BackwardFn backward;
    bool leaf = false;
    // Smallest |pre-activation| of a relu inside this node.
    double relu_margin = std::numeric_limits<double>::infinity();
  };

  Var record(DenseMatrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  DenseMatrix& grad(Var v);
  const Node& node(Var v) const { return nodes_.at(v.id); }

  std::vector<Node> nodes_;
  std::vector<DenseMatrix> grads_;
  bool track_margin_ = false;
};

// Row-wise numerically stable softmax.
DenseMatrix softmax_rows(const DenseMatrix& logits);

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Location of the worst coordinate.
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Builds a scalar from leaves holding `point` (one leaf per tensor).
using ScalarBuilder = std::function<Var(Tape&, std::span<const Var>)>;

// Compares tape gradients at `point` with central differences
// (f(x + h e_i) - f(x - h e_i)) / 2h, coordinate by coordinate. Relative
// error uses max(|analytic|, |numeric|, 1e-8) as denominator.
FiniteDiffReport finite_diff_check(const ScalarBuilder& f, const std::vector<DenseMatrix>& point, double step);

}  // namespace catgcn
