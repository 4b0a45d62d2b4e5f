// Copyright 2026 The refexp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "refexp/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace refexp {

namespace {

std::invalid_argument shape_error(std::string_view op, const std::string& detail) {
  return std::invalid_argument(std::string(op) + ": " + detail);
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore / Gradients

ParamId ParamStore::add(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  entries_.push_back({std::move(name), std::move(value), trainable});
  return entries_.size() - 1;
}

std::optional<ParamId> ParamStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  return std::nullopt;
}

std::size_t ParamStore::entry_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

Gradients Gradients::zeros_like(const ParamStore& params) {
  Gradients g;
  g.tensors.reserve(params.size());
  for (ParamId i = 0; i < params.size(); ++i) g.tensors.emplace_back(params.value(i).shape, 0.0);
  return g;
}

double Gradients::global_norm() const {
  double sq = 0.0;
  for (const auto& t : tensors)
    for (double v : t.data) sq += v * v;
  return std::sqrt(sq);
}

void Gradients::accumulate(const Gradients& other) {
  if (other.tensors.size() != tensors.size())
    throw std::invalid_argument("gradient sets have different parameter counts");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& dst = tensors[i].data;
    const auto& src = other.tensors[i].data;
    if (dst.size() != src.size())
      throw std::invalid_argument("gradient shape mismatch for parameter " + std::to_string(i));
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

void Gradients::scale(double factor) {
  for (auto& t : tensors)
    for (double& v : t.data) v *= factor;
}

bool Gradients::all_finite() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const Tensor& t) { return t.all_finite(); });
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kAffine: return "affine";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "elementwise-multiply";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add-scalar";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kEmbed: return "embed-lookup";
    case OpKind::kLogSoftmax: return "log-softmax";
    case OpKind::kPick: return "pick";
    case OpKind::kLogSoftmaxPick: return "log-softmax-pick";
    case OpKind::kDropout: return "dropout-mask-apply";
    case OpKind::kSum: return "sum";
    case OpKind::kStack: return "stack";
    case OpKind::kLogSumExp: return "logsumexp";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kAvgPool2: return "avgpool2";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Forward

const Tape::Node& Tape::node(NodeId id) const {
  if (id >= nodes_.size()) throw std::out_of_range("tape node " + std::to_string(id) + " does not exist");
  return nodes_[id];
}

const Tensor& Tape::value(NodeId id) const {
  const Node& n = node(id);
  return n.external ? *n.external : n.value;
}

double Tape::scalar(NodeId id) const {
  const Tensor& v = value(id);
  if (v.size() != 1) throw std::invalid_argument("node " + std::to_string(id) + " is not scalar: " + shape_string(v.shape));
  return v[0];
}

NodeId Tape::push(Node n) {
  if (n.kind != OpKind::kInput && n.kind != OpKind::kParam) {
    n.requires_grad = std::any_of(n.inputs.begin(), n.inputs.end(),
                                  [this](NodeId i) { return nodes_[i].requires_grad; });
  }
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check_same_shape(std::string_view op, NodeId a, NodeId b) const {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.size() != vb.size())
    throw shape_error(op, "operand shapes " + shape_string(va.shape) + " and " + shape_string(vb.shape) + " differ");
}

NodeId Tape::input(Tensor v) {
  Node n;
  n.kind = OpKind::kInput;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::param(ParamId id) {
  if (!params_) throw std::logic_error("tape has no parameter store attached");
  if (id >= params_->size()) throw std::out_of_range("parameter id " + std::to_string(id) + " out of range");
  if (param_nodes_.size() < params_->size()) param_nodes_.resize(params_->size());
  if (param_nodes_[id]) return *param_nodes_[id];
  Node n;
  n.kind = OpKind::kParam;
  n.external = &params_->value(id);
  n.param = id;
  n.requires_grad = params_->trainable(id);
  NodeId nid = push(std::move(n));
  param_nodes_[id] = nid;
  return nid;
}

NodeId Tape::affine(NodeId w, NodeId x, std::optional<NodeId> b) {
  const Tensor& W = value(w);
  const Tensor& X = value(x);
  if (W.rank() != 2 || W.dim(1) != X.size())
    throw shape_error("affine", "weight " + shape_string(W.shape) + " incompatible with input " + shape_string(X.shape));
  const std::size_t m = W.dim(0), k = W.dim(1);
  Node n;
  n.kind = OpKind::kAffine;
  n.inputs = {w, x};
  n.value = Tensor(Shape{m}, 0.0);
  if (b) {
    const Tensor& B = value(*b);
    if (B.size() != m)
      throw shape_error("affine", "bias " + shape_string(B.shape) + " incompatible with weight " + shape_string(W.shape));
    n.inputs.push_back(*b);
    std::copy(B.data.begin(), B.data.end(), n.value.data.begin());
  }
  const double* wp = W.data.data();
  const double* xp = X.data.data();
  double* yp = n.value.data.data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = wp + r * k;
    double acc = 0.0;
    for (std::size_t c = 0; c < k; ++c) acc += row[c] * xp[c];
    yp[r] += acc;
  }
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  check_same_shape("add", a, b);
  Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {a, b};
  n.value = value(a);
  const auto& vb = value(b).data;
  for (std::size_t i = 0; i < vb.size(); ++i) n.value.data[i] += vb[i];
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check_same_shape("sub", a, b);
  Node n;
  n.kind = OpKind::kSub;
  n.inputs = {a, b};
  n.value = value(a);
  const auto& vb = value(b).data;
  for (std::size_t i = 0; i < vb.size(); ++i) n.value.data[i] -= vb[i];
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check_same_shape("elementwise-multiply", a, b);
  Node n;
  n.kind = OpKind::kMul;
  n.inputs = {a, b};
  n.value = value(a);
  const auto& vb = value(b).data;
  for (std::size_t i = 0; i < vb.size(); ++i) n.value.data[i] *= vb[i];
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double factor) {
  Node n;
  n.kind = OpKind::kScale;
  n.inputs = {a};
  n.factor = factor;
  n.value = value(a);
  for (double& v : n.value.data) v *= factor;
  return push(std::move(n));
}

NodeId Tape::add_scalar(NodeId a, double offset) {
  Node n;
  n.kind = OpKind::kAddScalar;
  n.inputs = {a};
  n.factor = offset;
  n.value = value(a);
  for (double& v : n.value.data) v += offset;
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId a) {
  Node n;
  n.kind = OpKind::kSigmoid;
  n.inputs = {a};
  n.value = value(a);
  for (double& v : n.value.data) v = sigmoid_value(v);
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId a) {
  Node n;
  n.kind = OpKind::kTanh;
  n.inputs = {a};
  n.value = value(a);
  for (double& v : n.value.data) v = std::tanh(v);
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  Node n;
  n.kind = OpKind::kRelu;
  n.inputs = {a};
  n.value = value(a);
  for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

NodeId Tape::concat(std::span<const NodeId> parts) {
  if (parts.empty()) throw shape_error("concat", "no operands");
  std::size_t total = 0;
  for (NodeId p : parts) total += value(p).size();
  Node n;
  n.kind = OpKind::kConcat;
  n.inputs.assign(parts.begin(), parts.end());
  n.value = Tensor(Shape{total}, 0.0);
  std::size_t off = 0;
  for (NodeId p : parts) {
    const auto& d = value(p).data;
    std::copy(d.begin(), d.end(), n.value.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += d.size();
  }
  return push(std::move(n));
}

NodeId Tape::slice(NodeId a, std::size_t offset, std::size_t length) {
  const Tensor& A = value(a);
  if (length == 0 || offset + length > A.size())
    throw shape_error("slice", "range [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                                   ") outside " + shape_string(A.shape));
  Node n;
  n.kind = OpKind::kSlice;
  n.inputs = {a};
  n.aux = offset;
  n.value = Tensor(Shape{length},
                   std::vector<double>(A.data.begin() + static_cast<std::ptrdiff_t>(offset),
                                       A.data.begin() + static_cast<std::ptrdiff_t>(offset + length)));
  return push(std::move(n));
}

NodeId Tape::embed(NodeId table, std::size_t index) {
  const Tensor& T = value(table);
  if (T.rank() != 2 || index >= T.dim(0))
    throw shape_error("embed-lookup", "index " + std::to_string(index) + " outside table " + shape_string(T.shape));
  const std::size_t cols = T.dim(1);
  Node n;
  n.kind = OpKind::kEmbed;
  n.inputs = {table};
  n.aux = index;
  n.value = Tensor(Shape{cols}, std::vector<double>(T.data.begin() + static_cast<std::ptrdiff_t>(index * cols),
                                                     T.data.begin() + static_cast<std::ptrdiff_t>((index + 1) * cols)));
  return push(std::move(n));
}

namespace {

void log_softmax_inplace(std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  const double lse = m + std::log(s);
  for (double& x : v) x -= lse;
}

}  // namespace

NodeId Tape::log_softmax(NodeId logits) {
  Node n;
  n.kind = OpKind::kLogSoftmax;
  n.inputs = {logits};
  n.value = value(logits);
  log_softmax_inplace(n.value.data);
  return push(std::move(n));
}

NodeId Tape::pick(NodeId a, std::size_t index) {
  const Tensor& A = value(a);
  if (index >= A.size())
    throw shape_error("pick", "index " + std::to_string(index) + " outside " + shape_string(A.shape));
  Node n;
  n.kind = OpKind::kPick;
  n.inputs = {a};
  n.aux = index;
  n.value = Tensor::scalar(A[index]);
  return push(std::move(n));
}

NodeId Tape::log_softmax_pick(NodeId logits, std::size_t index) {
  const Tensor& A = value(logits);
  if (index >= A.size())
    throw shape_error("log-softmax-pick", "index " + std::to_string(index) + " outside " + shape_string(A.shape));
  std::vector<double> lp = A.data;
  log_softmax_inplace(lp);
  Node n;
  n.kind = OpKind::kLogSoftmaxPick;
  n.inputs = {logits};
  n.aux = index;
  n.value = Tensor::scalar(lp[index]);
  // Softmax kept for the backward pass.
  for (double& v : lp) v = std::exp(v);
  const std::size_t k = lp.size();
  n.mask = Tensor(Shape{k}, std::move(lp));
  return push(std::move(n));
}

NodeId Tape::dropout(NodeId a, Tensor mask) {
  const Tensor& A = value(a);
  if (mask.size() != A.size())
    throw shape_error("dropout-mask-apply", "mask " + shape_string(mask.shape) + " incompatible with " + shape_string(A.shape));
  Node n;
  n.kind = OpKind::kDropout;
  n.inputs = {a};
  n.value = A;
  for (std::size_t i = 0; i < mask.size(); ++i) n.value.data[i] *= mask[i];
  n.mask = std::move(mask);
  return push(std::move(n));
}

NodeId Tape::sum(std::span<const NodeId> terms) {
  if (terms.empty()) throw shape_error("sum", "no operands");
  for (NodeId t : terms) check_same_shape("sum", terms[0], t);
  Node n;
  n.kind = OpKind::kSum;
  n.inputs.assign(terms.begin(), terms.end());
  n.value = value(terms[0]);
  for (std::size_t k = 1; k < terms.size(); ++k) {
    const auto& d = value(terms[k]).data;
    for (std::size_t i = 0; i < d.size(); ++i) n.value.data[i] += d[i];
  }
  return push(std::move(n));
}

NodeId Tape::stack(std::span<const NodeId> scalars) {
  if (scalars.empty()) throw shape_error("stack", "no operands");
  std::vector<double> v;
  v.reserve(scalars.size());
  for (NodeId s : scalars) {
    const Tensor& t = value(s);
    if (t.size() != 1) throw shape_error("stack", "operand " + shape_string(t.shape) + " is not scalar");
    v.push_back(t[0]);
  }
  Node n;
  n.kind = OpKind::kStack;
  n.inputs.assign(scalars.begin(), scalars.end());
  n.value = Tensor::vector(std::move(v));
  return push(std::move(n));
}

NodeId Tape::logsumexp(NodeId a) {
  const auto& d = value(a).data;
  const double m = *std::max_element(d.begin(), d.end());
  double out = m;
  std::vector<double> weights(d.size(), 0.0);
  if (std::isfinite(m)) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += (weights[i] = std::exp(d[i] - m));
    for (double& w : weights) w /= s;
    out = m + std::log(s);
  }
  Node n;
  n.kind = OpKind::kLogSumExp;
  n.inputs = {a};
  n.value = Tensor::scalar(out);
  const std::size_t k = weights.size();
  n.mask = Tensor(Shape{k}, std::move(weights));
  return push(std::move(n));
}

NodeId Tape::conv2d(NodeId kernel, NodeId bias, NodeId in) {
  const Tensor& K = value(kernel);
  const Tensor& B = value(bias);
  const Tensor& X = value(in);
  if (K.rank() != 4 || K.dim(2) != K.dim(3) || X.rank() != 3 || X.dim(0) != K.dim(1) || B.size() != K.dim(0) ||
      X.dim(1) < K.dim(2) || X.dim(2) < K.dim(3))
    throw shape_error("conv2d", "kernel " + shape_string(K.shape) + ", bias " + shape_string(B.shape) + ", input " +
                                    shape_string(X.shape) + " incompatible");
  const std::size_t co = K.dim(0), ci = K.dim(1), ks = K.dim(2);
  const std::size_t h = X.dim(1), w = X.dim(2);
  const std::size_t oh = h - ks + 1, ow = w - ks + 1;
  Node n;
  n.kind = OpKind::kConv2d;
  n.inputs = {kernel, bias, in};
  n.value = Tensor(Shape{co, oh, ow}, 0.0);
  double* y = n.value.data.data();
  for (std::size_t o = 0; o < co; ++o) {
    double* yo = y + o * oh * ow;
    std::fill(yo, yo + oh * ow, B[o]);
    for (std::size_t c = 0; c < ci; ++c) {
      const double* xc = X.data.data() + c * h * w;
      for (std::size_t ky = 0; ky < ks; ++ky)
        for (std::size_t kx = 0; kx < ks; ++kx) {
          const double kv = K.data[((o * ci + c) * ks + ky) * ks + kx];
          for (std::size_t r = 0; r < oh; ++r) {
            const double* xr = xc + (r + ky) * w + kx;
            double* yr = yo + r * ow;
            for (std::size_t q = 0; q < ow; ++q) yr[q] += kv * xr[q];
          }
        }
    }
  }
  return push(std::move(n));
}

NodeId Tape::avgpool2(NodeId in) {
  const Tensor& X = value(in);
  if (X.rank() != 3 || X.dim(1) < 2 || X.dim(2) < 2)
    throw shape_error("avgpool2", "input " + shape_string(X.shape) + " must be [C, H>=2, W>=2]");
  const std::size_t c = X.dim(0), h = X.dim(1), w = X.dim(2);
  const std::size_t oh = h / 2, ow = w / 2;
  Node n;
  n.kind = OpKind::kAvgPool2;
  n.inputs = {in};
  n.value = Tensor(Shape{c, oh, ow}, 0.0);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t q = 0; q < ow; ++q) {
        const double* x = X.data.data() + k * h * w;
        n.value.data[(k * oh + r) * ow + q] =
            0.25 * (x[(2 * r) * w + 2 * q] + x[(2 * r) * w + 2 * q + 1] + x[(2 * r + 1) * w + 2 * q] +
                    x[(2 * r + 1) * w + 2 * q + 1]);
      }
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Backward

Gradients Tape::backward(NodeId loss) const {
  if (!params_) throw std::logic_error("tape has no parameter store attached");
  Gradients g = Gradients::zeros_like(*params_);
  backward_into(loss, g);
  return g;
}

void Tape::backward_into(NodeId loss, Gradients& acc) const {
  const Tensor& root = value(loss);
  if (root.size() != 1)
    throw std::invalid_argument("backward: loss node must be scalar, got " + shape_string(root.shape));
  if (params_ && acc.size() != params_->size())
    throw std::invalid_argument("backward: gradient set does not match parameter store");

  std::vector<std::vector<double>> grads(loss + 1);
  grads[loss].assign(1, 1.0);
  auto grad_of = [&](NodeId id) -> std::vector<double>* {
    if (!nodes_[id].requires_grad) return nullptr;
    auto& gv = grads[id];
    if (gv.empty()) gv.assign(value(id).size(), 0.0);
    return &gv;
  };

  for (NodeId id = loss + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (grads[id].empty() || !n.requires_grad) continue;
    const std::vector<double>& gy = grads[id];
    switch (n.kind) {
      case OpKind::kInput:
        break;
      case OpKind::kParam: {
        auto& dst = acc[*n.param].data;
        for (std::size_t i = 0; i < gy.size(); ++i) dst[i] += gy[i];
        break;
      }
      case OpKind::kAffine: {
        const Tensor& W = value(n.inputs[0]);
        const Tensor& X = value(n.inputs[1]);
        const std::size_t m = W.dim(0), k = W.dim(1);
        if (auto* gw = grad_of(n.inputs[0])) {
          for (std::size_t r = 0; r < m; ++r) {
            const double gr = gy[r];
            if (gr == 0.0) continue;
            double* row = gw->data() + r * k;
            for (std::size_t c = 0; c < k; ++c) row[c] += gr * X.data[c];
          }
        }
        if (auto* gx = grad_of(n.inputs[1])) {
          for (std::size_t r = 0; r < m; ++r) {
            const double gr = gy[r];
            if (gr == 0.0) continue;
            const double* row = W.data.data() + r * k;
            for (std::size_t c = 0; c < k; ++c) (*gx)[c] += gr * row[c];
          }
        }
        if (n.inputs.size() == 3)
          if (auto* gb = grad_of(n.inputs[2]))
            for (std::size_t r = 0; r < m; ++r) (*gb)[r] += gy[r];
        break;
      }
      case OpKind::kAdd:
      case OpKind::kSub: {
        if (auto* ga = grad_of(n.inputs[0]))
          for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i];
        const double sign = n.kind == OpKind::kAdd ? 1.0 : -1.0;
        if (auto* gb = grad_of(n.inputs[1]))
          for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[i] += sign * gy[i];
        break;
      }
      case OpKind::kMul: {
        const auto& a = value(n.inputs[0]).data;
        const auto& b = value(n.inputs[1]).data;
        if (auto* ga = grad_of(n.inputs[0]))
          for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i] * b[i];
        if (auto* gb = grad_of(n.inputs[1]))
          for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[i] += gy[i] * a[i];
        break;
      }
      case OpKind::kScale:
        if (auto* ga = grad_of(n.inputs[0]))
          for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += n.factor * gy[i];
        break;
      case OpKind::kAddScalar:
        if (auto* ga = grad_of(n.inputs[0]))
          for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i];
        break;
      case OpKind::kSigmoid:
        if (auto* ga = grad_of(n.inputs[0]))
          for (std::size_t i = 0; i < gy.size(); ++i) {
            const double s = n.value[i];
            (*ga)[i] += gy[i] * s * (1.0 - s);
          }
        break;
      case OpKind::kTanh:
        if (auto* ga = grad_of(n.inputs[0]))
          for (std::size_t i = 0; i < gy.size(); ++i) {
            const double t = n.value[i];
            (*ga)[i] += gy[i] * (1.0 - t * t);
          }
        break;
      case OpKind::kRelu:
        if (auto* ga = grad_of(n.inputs[0]))
          for (std::size_t i = 0; i < gy.size(); ++i)
            if (n.value[i] > 0.0) (*ga)[i] += gy[i];
        break;
      case OpKind::kConcat: {
        std::size_t off = 0;
        for (NodeId p : n.inputs) {
          const std::size_t len = value(p).size();
          if (auto* gp = grad_of(p))
            for (std::size_t i = 0; i < len; ++i) (*gp)[i] += gy[off + i];
          off += len;
        }
        break;
      }
      case OpKind::kSlice:
        if (auto* ga = grad_of(n.inputs[0]))
          for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[n.aux + i] += gy[i];
        break;
      case OpKind::kEmbed:
        if (auto* gt = grad_of(n.inputs[0])) {
          const std::size_t cols = gy.size();
          for (std::size_t i = 0; i < cols; ++i) (*gt)[n.aux * cols + i] += gy[i];
        }
        break;
      case OpKind::kLogSoftmax:
        if (auto* ga = grad_of(n.inputs[0])) {
          double total = 0.0;
          for (double v : gy) total += v;
          for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i] - std::exp(n.value[i]) * total;
        }
        break;
      case OpKind::kPick:
        if (auto* ga = grad_of(n.inputs[0])) (*ga)[n.aux] += gy[0];
        break;
      case OpKind::kLogSoftmaxPick:
        if (auto* ga = grad_of(n.inputs[0])) {
          for (std::size_t i = 0; i < n.mask.size(); ++i) (*ga)[i] -= gy[0] * n.mask[i];
          (*ga)[n.aux] += gy[0];
        }
        break;
      case OpKind::kDropout:
        if (auto* ga = grad_of(n.inputs[0]))
          for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i] * n.mask[i];
        break;
      case OpKind::kSum:
        for (NodeId p : n.inputs)
          if (auto* gp = grad_of(p))
            for (std::size_t i = 0; i < gy.size(); ++i) (*gp)[i] += gy[i];
        break;
      case OpKind::kStack:
        for (std::size_t i = 0; i < n.inputs.size(); ++i)
          if (auto* gp = grad_of(n.inputs[i])) (*gp)[0] += gy[i];
        break;
      case OpKind::kLogSumExp:
        if (auto* ga = grad_of(n.inputs[0]))
          for (std::size_t i = 0; i < n.mask.size(); ++i) (*ga)[i] += gy[0] * n.mask[i];
        break;
      case OpKind::kConv2d: {
        const Tensor& K = value(n.inputs[0]);
        const Tensor& X = value(n.inputs[2]);
        const std::size_t co = K.dim(0), ci = K.dim(1), ks = K.dim(2);
        const std::size_t h = X.dim(1), w = X.dim(2);
        const std::size_t oh = h - ks + 1, ow = w - ks + 1;
        auto* gk = grad_of(n.inputs[0]);
        auto* gb = grad_of(n.inputs[1]);
        auto* gx = grad_of(n.inputs[2]);
        for (std::size_t o = 0; o < co; ++o) {
          const double* go = gy.data() + o * oh * ow;
          if (gb)
            for (std::size_t i = 0; i < oh * ow; ++i) (*gb)[o] += go[i];
          if (!gk && !gx) continue;
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t ky = 0; ky < ks; ++ky)
              for (std::size_t kx = 0; kx < ks; ++kx) {
                const std::size_t kidx = ((o * ci + c) * ks + ky) * ks + kx;
                const double kv = K.data[kidx];
                double kacc = 0.0;
                for (std::size_t r = 0; r < oh; ++r)
                  for (std::size_t q = 0; q < ow; ++q) {
                    const std::size_t xidx = (c * h + r + ky) * w + q + kx;
                    const double g = go[r * ow + q];
                    kacc += g * X.data[xidx];
                    if (gx) (*gx)[xidx] += g * kv;
                  }
                if (gk) (*gk)[kidx] += kacc;
              }
        }
        break;
      }
      case OpKind::kAvgPool2:
        if (auto* ga = grad_of(n.inputs[0])) {
          const Tensor& X = value(n.inputs[0]);
          const std::size_t c = X.dim(0), h = X.dim(1), w = X.dim(2);
          const std::size_t oh = h / 2, ow = w / 2;
          for (std::size_t k = 0; k < c; ++k)
            for (std::size_t r = 0; r < oh; ++r)
              for (std::size_t q = 0; q < ow; ++q) {
                const double g = 0.25 * gy[(k * oh + r) * ow + q];
                double* x = ga->data() + k * h * w;
                x[(2 * r) * w + 2 * q] += g;
                x[(2 * r) * w + 2 * q + 1] += g;
                x[(2 * r + 1) * w + 2 * q] += g;
                x[(2 * r + 1) * w + 2 * q + 1] += g;
              }
        }
        break;
    }
  }
}

}  // namespace refexp
