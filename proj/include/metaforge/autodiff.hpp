// SPDX-License-Identifier: Apache-2.0
//
// Minimal deterministic reverse-mode autodiff over dense 64-bit tensors.
//
// A Tape records one forward pass as a flat list of nodes; creation order is
// a topological order by construction, so backward() is a single reverse
// sweep. Gradients accumulate in sweep order, which makes repeated runs
// bit-identical. Tensors are immutable after creation except for their grad
// buffers; leaf tensors (parameters) outlive tapes and may be reused across
// passes.
//
// No broadcasting except bias addition: add(matrix [m,n], vector [n]) adds
// the vector to every row.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "metaforge/errors.hpp"

namespace metaforge::ad {

using Shape = std::vector<std::size_t>;

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

class Tensor {
 public:
  Shape shape;
  std::vector<double> values;  // row-major
  bool requires_grad = false;
  std::vector<double> grad;  // same size as values iff requires_grad

  // Index of the TapeNode that produced this tensor, -1 for leaves.
  std::ptrdiff_t node_id = -1;

  static TensorPtr leaf(Shape shape, std::vector<double> values,
                        bool requires_grad = false);
  static TensorPtr zeros(Shape shape, bool requires_grad = false);
  static TensorPtr scalar(double v, bool requires_grad = false);

  std::size_t size() const { return values.size(); }
  bool is_scalar() const { return values.size() == 1; }
  bool is_vector() const { return shape.size() == 1; }
  bool is_matrix() const { return shape.size() == 2; }
  std::size_t rows() const { return shape[0]; }
  std::size_t cols() const { return shape[1]; }
  double item() const { return values[0]; }

  void zero_grad();
  bool all_finite() const;
};

enum class OpKind {
  kMatmul,
  kAdd,
  kConcat,
  kSlice,
  kTanh,
  kSigmoid,
  kElemwiseMul,
  kEmbeddingLookup,
  kLogSoftmaxNll,
  kScale,
  kMaskMul,
  kSoftmax,
};

const char* op_name(OpKind kind);

struct TapeNode {
  OpKind kind;
  std::vector<TensorPtr> inputs;
  TensorPtr output;
  // Saved activations / attributes needed by the backward rule.
  std::vector<double> saved;       // e.g. softmax probabilities
  std::vector<std::size_t> index;  // slice offset/len, embedding id, target
  double factor = 1.0;             // kScale constant
};

class Tape {
 public:
  // Primitives. Each records one TapeNode and returns the result tensor.
  //
  // matmul supports [m,k]x[k,n] -> [m,n], [k]x[k,n] -> [n] (row vector) and
  // [m,k]x[k] -> [m].
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  // Same shape, or matrix [m,n] + bias vector [n].
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  // Two 1-D tensors -> one 1-D tensor.
  TensorPtr concat(const TensorPtr& a, const TensorPtr& b);
  // Stack equal-length 1-D tensors into a matrix [rows.size(), len].
  TensorPtr concat_rows(const std::vector<TensorPtr>& rows);
  // 1-D slice [offset, offset+len).
  TensorPtr slice(const TensorPtr& x, std::size_t offset, std::size_t len);
  TensorPtr tanh(const TensorPtr& x);
  TensorPtr sigmoid(const TensorPtr& x);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  // Row `id` of a [vocab, dim] table as a 1-D tensor.
  TensorPtr embedding(const TensorPtr& table, std::size_t id);
  // Scalar -log softmax(logits)[target] over a 1-D logits tensor.
  TensorPtr log_softmax_nll(const TensorPtr& logits, std::size_t target);
  TensorPtr scale(const TensorPtr& x, double c);
  // x * mask elementwise; the mask is a constant (must not require grad) and
  // zero entries kill the gradient exactly.
  TensorPtr mask_mul(const TensorPtr& x, const TensorPtr& mask);
  // 1-D softmax.
  TensorPtr softmax(const TensorPtr& x);

  // Accumulates d(root)/d(t) into t->grad for every requires_grad tensor t
  // reachable from root. root must be a scalar produced on this tape.
  void backward(const TensorPtr& root);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  TensorPtr record(OpKind kind, std::vector<TensorPtr> inputs, Shape out_shape,
                   std::vector<double> out_values);
  TapeNode& node(std::size_t i) { return nodes_[i]; }
  void backward_node(const TapeNode& n);

  std::vector<TapeNode> nodes_;
};

// Central-difference gradient check.
//
// f must rebuild the same scalar loss from the given parameters on a fresh
// tape each call. Error per coordinate is |analytic - numeric| divided by
// max(1, |analytic|, |numeric|), i.e. relative above 1 and absolute below.
struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t coords_checked = 0;
  bool pass = false;
};

using ScalarFn =
    std::function<TensorPtr(Tape&, const std::vector<TensorPtr>&)>;

GradCheckReport grad_check(const ScalarFn& f, std::vector<TensorPtr> params,
                           double h, double tol);

}  // namespace metaforge::ad
