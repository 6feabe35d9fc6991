// SPDX-License-Identifier: Apache-2.0

#include "metaforge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace metaforge::ad {

namespace {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

[[noreturn]] void dim_error(const char* prim, const Tensor& a,
                            const Tensor& b) {
  throw DimensionError(std::string(prim) + ": incompatible shapes " +
                       shape_str(a.shape) + " and " + shape_str(b.shape));
}

[[noreturn]] void dim_error(const char* prim, const Tensor& a) {
  throw DimensionError(std::string(prim) + ": unsupported shape " +
                       shape_str(a.shape));
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kElemwiseMul: return "elemwise_mul";
    case OpKind::kEmbeddingLookup: return "embedding_lookup";
    case OpKind::kLogSoftmaxNll: return "log_softmax_nll";
    case OpKind::kScale: return "scale";
    case OpKind::kMaskMul: return "mask_mul";
    case OpKind::kSoftmax: return "softmax";
  }
  return "?";
}

TensorPtr Tensor::leaf(Shape shape, std::vector<double> values,
                       bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ContractError("tensor: product(shape) != values.size()");
  }
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values = std::move(values);
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad.assign(t->values.size(), 0.0);
  return t;
}

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return leaf(std::move(shape), std::move(v), requires_grad);
}

TensorPtr Tensor::scalar(double v, bool requires_grad) {
  return leaf({1}, {v}, requires_grad);
}

void Tensor::zero_grad() {
  std::fill(grad.begin(), grad.end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

TensorPtr Tape::record(OpKind kind, std::vector<TensorPtr> inputs,
                       Shape out_shape, std::vector<double> out_values) {
  bool needs_grad = false;
  for (const auto& in : inputs) {
    if (in->requires_grad) needs_grad = true;
  }
  if (kind == OpKind::kMaskMul) {
    needs_grad = inputs[0]->requires_grad;  // mask is a constant
  }
  auto out = Tensor::leaf(std::move(out_shape), std::move(out_values),
                          needs_grad);
  out->node_id = static_cast<std::ptrdiff_t>(nodes_.size());
  nodes_.push_back(TapeNode{kind, std::move(inputs), out, {}, {}, 1.0});
  return out;
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->is_matrix() && b->is_matrix()) {
    if (a->cols() != b->rows()) dim_error("matmul", *a, *b);
    const std::size_t m = a->rows(), k = a->cols(), n = b->cols();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a->values[i * k + p];
        for (std::size_t j = 0; j < n; ++j) {
          out[i * n + j] += av * b->values[p * n + j];
        }
      }
    }
    return record(OpKind::kMatmul, {a, b}, {m, n}, std::move(out));
  }
  if (a->is_vector() && b->is_matrix()) {
    if (a->size() != b->rows()) dim_error("matmul", *a, *b);
    const std::size_t k = b->rows(), n = b->cols();
    std::vector<double> out(n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a->values[p];
      for (std::size_t j = 0; j < n; ++j) out[j] += av * b->values[p * n + j];
    }
    return record(OpKind::kMatmul, {a, b}, {n}, std::move(out));
  }
  if (a->is_matrix() && b->is_vector()) {
    if (a->cols() != b->size()) dim_error("matmul", *a, *b);
    const std::size_t m = a->rows(), k = a->cols();
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += a->values[i * k + p] * b->values[p];
      }
      out[i] = acc;
    }
    return record(OpKind::kMatmul, {a, b}, {m}, std::move(out));
  }
  dim_error("matmul", *a, *b);
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape == b->shape) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = a->values[i] + b->values[i];
    }
    return record(OpKind::kAdd, {a, b}, a->shape, std::move(out));
  }
  if (a->is_matrix() && b->is_vector() && a->cols() == b->size()) {
    const std::size_t m = a->rows(), n = a->cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        out[i * n + j] = a->values[i * n + j] + b->values[j];
      }
    }
    return record(OpKind::kAdd, {a, b}, a->shape, std::move(out));
  }
  dim_error("add", *a, *b);
}

TensorPtr Tape::concat(const TensorPtr& a, const TensorPtr& b) {
  if (!a->is_vector() || !b->is_vector()) dim_error("concat", *a, *b);
  std::vector<double> out;
  out.reserve(a->size() + b->size());
  out.insert(out.end(), a->values.begin(), a->values.end());
  out.insert(out.end(), b->values.begin(), b->values.end());
  return record(OpKind::kConcat, {a, b}, {a->size() + b->size()},
                std::move(out));
}

TensorPtr Tape::concat_rows(const std::vector<TensorPtr>& rows) {
  if (rows.empty()) throw ContractError("concat: no rows");
  const std::size_t n = rows[0]->size();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (const auto& r : rows) {
    if (!r->is_vector() || r->size() != n) dim_error("concat", *rows[0], *r);
    out.insert(out.end(), r->values.begin(), r->values.end());
  }
  return record(OpKind::kConcat, rows, {rows.size(), n}, std::move(out));
}

TensorPtr Tape::slice(const TensorPtr& x, std::size_t offset,
                      std::size_t len) {
  if (!x->is_vector()) dim_error("slice", *x);
  if (offset + len > x->size()) {
    throw IndexError("slice: range [" + std::to_string(offset) + "," +
                     std::to_string(offset + len) + ") exceeds length " +
                     std::to_string(x->size()));
  }
  std::vector<double> out(x->values.begin() + offset,
                          x->values.begin() + offset + len);
  auto t = record(OpKind::kSlice, {x}, {len}, std::move(out));
  nodes_.back().index = {offset, len};
  return t;
}

TensorPtr Tape::tanh(const TensorPtr& x) {
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::tanh(x->values[i]);
  }
  return record(OpKind::kTanh, {x}, x->shape, std::move(out));
}

TensorPtr Tape::sigmoid(const TensorPtr& x) {
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 1.0 / (1.0 + std::exp(-x->values[i]));
  }
  return record(OpKind::kSigmoid, {x}, x->shape, std::move(out));
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape) dim_error("elemwise_mul", *a, *b);
  std::vector<double> out(a->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a->values[i] * b->values[i];
  }
  return record(OpKind::kElemwiseMul, {a, b}, a->shape, std::move(out));
}

TensorPtr Tape::embedding(const TensorPtr& table, std::size_t id) {
  if (!table->is_matrix()) dim_error("embedding_lookup", *table);
  if (id >= table->rows()) {
    throw IndexError("embedding_lookup: index " + std::to_string(id) +
                     " >= vocab size " + std::to_string(table->rows()));
  }
  const std::size_t d = table->cols();
  std::vector<double> out(table->values.begin() + id * d,
                          table->values.begin() + (id + 1) * d);
  auto t = record(OpKind::kEmbeddingLookup, {table}, {d}, std::move(out));
  nodes_.back().index = {id};
  return t;
}

TensorPtr Tape::log_softmax_nll(const TensorPtr& logits, std::size_t target) {
  if (!logits->is_vector()) dim_error("log_softmax_nll", *logits);
  if (target >= logits->size()) {
    throw IndexError("log_softmax_nll: target " + std::to_string(target) +
                     " >= size " + std::to_string(logits->size()));
  }
  const std::size_t n = logits->size();
  double mx = logits->values[0];
  for (double v : logits->values) mx = std::max(mx, v);
  double sum = 0.0;
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits->values[i] - mx);
    sum += probs[i];
  }
  for (auto& p : probs) p /= sum;
  const double nll = (mx + std::log(sum)) - logits->values[target];
  auto t = record(OpKind::kLogSoftmaxNll, {logits}, {1}, {nll});
  nodes_.back().saved = std::move(probs);
  nodes_.back().index = {target};
  return t;
}

TensorPtr Tape::scale(const TensorPtr& x, double c) {
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x->values[i];
  auto t = record(OpKind::kScale, {x}, x->shape, std::move(out));
  nodes_.back().factor = c;
  return t;
}

TensorPtr Tape::mask_mul(const TensorPtr& x, const TensorPtr& mask) {
  if (x->shape != mask->shape) dim_error("mask_mul", *x, *mask);
  if (mask->requires_grad) {
    throw ContractError("mask_mul: mask must not require grad");
  }
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x->values[i] * mask->values[i];
  }
  return record(OpKind::kMaskMul, {x, mask}, x->shape, std::move(out));
}

TensorPtr Tape::softmax(const TensorPtr& x) {
  if (!x->is_vector()) dim_error("softmax", *x);
  double mx = x->values[0];
  for (double v : x->values) mx = std::max(mx, v);
  double sum = 0.0;
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(x->values[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  auto t = record(OpKind::kSoftmax, {x}, x->shape, std::move(out));
  nodes_.back().saved = t->values;
  return t;
}

void Tape::backward(const TensorPtr& root) {
  if (!root->is_scalar()) {
    throw ContractError("backward: root must be a scalar");
  }
  if (root->node_id < 0 ||
      static_cast<std::size_t>(root->node_id) >= nodes_.size() ||
      nodes_[static_cast<std::size_t>(root->node_id)].output != root) {
    throw ContractError("backward: root was not produced on this tape");
  }
  const std::size_t root_idx = static_cast<std::size_t>(root->node_id);

  // Mark nodes that feed the root so the sweep touches each exactly once.
  std::vector<char> needed(root_idx + 1, 0);
  needed[root_idx] = 1;
  for (std::size_t i = root_idx + 1; i-- > 0;) {
    if (!needed[i]) continue;
    for (const auto& in : nodes_[i].inputs) {
      if (in->node_id >= 0 &&
          static_cast<std::size_t>(in->node_id) <= root_idx) {
        needed[static_cast<std::size_t>(in->node_id)] = 1;
      }
    }
  }

  if (!root->requires_grad) return;  // nothing differentiable upstream
  root->grad[0] += 1.0;
  for (std::size_t i = root_idx + 1; i-- > 0;) {
    if (needed[i] && nodes_[i].output->requires_grad) backward_node(nodes_[i]);
  }
}

void Tape::backward_node(const TapeNode& n) {
  const std::vector<double>& up = n.output->grad;
  auto acc = [](const TensorPtr& t) -> std::vector<double>* {
    return t->requires_grad ? &t->grad : nullptr;
  };
  switch (n.kind) {
    case OpKind::kMatmul: {
      const Tensor& a = *n.inputs[0];
      const Tensor& b = *n.inputs[1];
      auto* ga = acc(n.inputs[0]);
      auto* gb = acc(n.inputs[1]);
      if (a.is_matrix() && b.is_matrix()) {
        const std::size_t m = a.rows(), k = a.cols(), nn = b.cols();
        if (ga) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < nn; ++j) {
                s += up[i * nn + j] * b.values[p * nn + j];
              }
              (*ga)[i * k + p] += s;
            }
          }
        }
        if (gb) {
          for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t j = 0; j < nn; ++j) {
              double s = 0.0;
              for (std::size_t i = 0; i < m; ++i) {
                s += a.values[i * k + p] * up[i * nn + j];
              }
              (*gb)[p * nn + j] += s;
            }
          }
        }
      } else if (a.is_vector() && b.is_matrix()) {
        const std::size_t k = b.rows(), nn = b.cols();
        if (ga) {
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < nn; ++j) {
              s += up[j] * b.values[p * nn + j];
            }
            (*ga)[p] += s;
          }
        }
        if (gb) {
          for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t j = 0; j < nn; ++j) {
              (*gb)[p * nn + j] += a.values[p] * up[j];
            }
          }
        }
      } else {  // matrix x vector
        const std::size_t m = a.rows(), k = a.cols();
        if (ga) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              (*ga)[i * k + p] += up[i] * b.values[p];
            }
          }
        }
        if (gb) {
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
              s += a.values[i * k + p] * up[i];
            }
            (*gb)[p] += s;
          }
        }
      }
      break;
    }
    case OpKind::kAdd: {
      auto* ga = acc(n.inputs[0]);
      auto* gb = acc(n.inputs[1]);
      if (n.inputs[0]->shape == n.inputs[1]->shape) {
        for (std::size_t i = 0; i < up.size(); ++i) {
          if (ga) (*ga)[i] += up[i];
          if (gb) (*gb)[i] += up[i];
        }
      } else {  // matrix + bias row
        const std::size_t m = n.inputs[0]->rows(), nn = n.inputs[0]->cols();
        if (ga) {
          for (std::size_t i = 0; i < up.size(); ++i) (*ga)[i] += up[i];
        }
        if (gb) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < nn; ++j) (*gb)[j] += up[i * nn + j];
          }
        }
      }
      break;
    }
    case OpKind::kConcat: {
      std::size_t off = 0;
      for (const auto& in : n.inputs) {
        if (auto* g = acc(in)) {
          for (std::size_t i = 0; i < in->size(); ++i) (*g)[i] += up[off + i];
        }
        off += in->size();
      }
      break;
    }
    case OpKind::kSlice: {
      if (auto* g = acc(n.inputs[0])) {
        const std::size_t off = n.index[0], len = n.index[1];
        for (std::size_t i = 0; i < len; ++i) (*g)[off + i] += up[i];
      }
      break;
    }
    case OpKind::kTanh: {
      if (auto* g = acc(n.inputs[0])) {
        for (std::size_t i = 0; i < up.size(); ++i) {
          const double y = n.output->values[i];
          (*g)[i] += up[i] * (1.0 - y * y);
        }
      }
      break;
    }
    case OpKind::kSigmoid: {
      if (auto* g = acc(n.inputs[0])) {
        for (std::size_t i = 0; i < up.size(); ++i) {
          const double y = n.output->values[i];
          (*g)[i] += up[i] * y * (1.0 - y);
        }
      }
      break;
    }
    case OpKind::kElemwiseMul: {
      auto* ga = acc(n.inputs[0]);
      auto* gb = acc(n.inputs[1]);
      for (std::size_t i = 0; i < up.size(); ++i) {
        if (ga) (*ga)[i] += up[i] * n.inputs[1]->values[i];
        if (gb) (*gb)[i] += up[i] * n.inputs[0]->values[i];
      }
      break;
    }
    case OpKind::kEmbeddingLookup: {
      if (auto* g = acc(n.inputs[0])) {
        const std::size_t d = n.inputs[0]->cols();
        const std::size_t id = n.index[0];
        for (std::size_t i = 0; i < d; ++i) (*g)[id * d + i] += up[i];
      }
      break;
    }
    case OpKind::kLogSoftmaxNll: {
      if (auto* g = acc(n.inputs[0])) {
        const double u = up[0];
        const std::size_t target = n.index[0];
        for (std::size_t i = 0; i < g->size(); ++i) {
          const double onehot = (i == target) ? 1.0 : 0.0;
          (*g)[i] += u * (n.saved[i] - onehot);
        }
      }
      break;
    }
    case OpKind::kScale: {
      if (auto* g = acc(n.inputs[0])) {
        for (std::size_t i = 0; i < up.size(); ++i) (*g)[i] += n.factor * up[i];
      }
      break;
    }
    case OpKind::kMaskMul: {
      if (auto* g = acc(n.inputs[0])) {
        for (std::size_t i = 0; i < up.size(); ++i) {
          (*g)[i] += up[i] * n.inputs[1]->values[i];
        }
      }
      break;
    }
    case OpKind::kSoftmax: {
      if (auto* g = acc(n.inputs[0])) {
        double dot = 0.0;
        for (std::size_t i = 0; i < up.size(); ++i) dot += up[i] * n.saved[i];
        for (std::size_t i = 0; i < up.size(); ++i) {
          (*g)[i] += n.saved[i] * (up[i] - dot);
        }
      }
      break;
    }
  }
}

GradCheckReport grad_check(const ScalarFn& f, std::vector<TensorPtr> params,
                           double h, double tol) {
  if (h <= 0.0) throw ContractError("grad_check: h must be positive");

  auto eval = [&](void) -> double {
    Tape tape;
    TensorPtr out = f(tape, params);
    if (!out->is_scalar()) {
      throw ContractError("grad_check: f must return a scalar");
    }
    const double v = out->item();
    if (!std::isfinite(v)) {
      throw NumericError("grad_check: non-finite function value");
    }
    return v;
  };

  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    for (auto& p : params) p->zero_grad();
    TensorPtr out = f(tape, params);
    if (!out->is_scalar()) {
      throw ContractError("grad_check: f must return a scalar");
    }
    if (!std::isfinite(out->item())) {
      throw NumericError("grad_check: non-finite function value");
    }
    tape.backward(out);
    for (const auto& p : params) analytic.push_back(p->grad);
  }

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double keep = p.values[k];
      p.values[k] = keep + h;
      const double fp = eval();
      p.values[k] = keep - h;
      const double fm = eval();
      p.values[k] = keep;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[pi][k];
      const double abs_err = std::fabs(a - numeric);
      const double rel =
          abs_err / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      if (rel > report.max_rel_err) report.max_rel_err = rel;
      if (abs_err > report.max_abs_err) report.max_abs_err = abs_err;
      ++report.coords_checked;
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace metaforge::ad
