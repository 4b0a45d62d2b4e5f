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

#ifndef REFEXP_TAPE_HPP_
#define REFEXP_TAPE_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refexp/tensor.hpp"

namespace refexp {

using ParamId = std::size_t;
using NodeId = std::uint32_t;

// Named, ordered collection of trainable arrays.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor value, bool trainable = true);

  std::size_t size() const { return entries_.size(); }
  const std::string& name(ParamId id) const { return entries_.at(id).name; }
  Tensor& value(ParamId id) { return entries_.at(id).value; }
  const Tensor& value(ParamId id) const { return entries_.at(id).value; }
  bool trainable(ParamId id) const { return entries_.at(id).trainable; }
  void set_trainable(ParamId id, bool flag) { entries_.at(id).trainable = flag; }
  std::optional<ParamId> find(std::string_view name) const;

  // Number of scalar entries over all arrays.
  std::size_t entry_count() const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  std::vector<Entry> entries_;
};

// One gradient array per parameter, shaped like the parameter.
struct Gradients {
  std::vector<Tensor> tensors;

  static Gradients zeros_like(const ParamStore& params);

  Tensor& operator[](ParamId id) { return tensors.at(id); }
  const Tensor& operator[](ParamId id) const { return tensors.at(id); }
  std::size_t size() const { return tensors.size(); }

  // L2 norm over all entries of all tensors jointly.
  double global_norm() const;
  void accumulate(const Gradients& other);
  void scale(double factor);
  bool all_finite() const;

  friend bool operator==(const Gradients&, const Gradients&) = default;
};

enum class OpKind {
  kInput,
  kParam,
  kAffine,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kSigmoid,
  kTanh,
  kRelu,
  kConcat,
  kSlice,
  kEmbed,
  kLogSoftmax,
  kPick,
  kLogSoftmaxPick,
  kDropout,
  kSum,
  kStack,
  kLogSumExp,
  kConv2d,
  kAvgPool2,
};

std::string_view op_name(OpKind kind);

// Reverse-mode tape over dense tensors. Nodes are appended in evaluation
// order, so the recording is topologically sorted by construction.
class Tape {
 public:
  explicit Tape(const ParamStore* params = nullptr) : params_(params) {}

  NodeId input(Tensor value);
  // Binds a parameter of the attached store; repeated calls return the same node.
  NodeId param(ParamId id);

  // y = W x (+ b). W is [m, n]; x has n entries; b has m entries.
  NodeId affine(NodeId weight, NodeId x, std::optional<NodeId> bias = std::nullopt);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId add_scalar(NodeId a, double offset);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId concat(std::span<const NodeId> parts);
  NodeId slice(NodeId a, std::size_t offset, std::size_t length);
  // Row `index` of a [rows, cols] table.
  NodeId embed(NodeId table, std::size_t index);
  NodeId log_softmax(NodeId logits);
  NodeId pick(NodeId a, std::size_t index);
  NodeId log_softmax_pick(NodeId logits, std::size_t index);
  // Multiplies by a fixed, already-scaled mask.
  NodeId dropout(NodeId a, Tensor mask);
  // Elementwise sum of same-shaped nodes.
  NodeId sum(std::span<const NodeId> terms);
  // Packs scalar nodes into a vector.
  NodeId stack(std::span<const NodeId> scalars);
  NodeId logsumexp(NodeId a);
  // Valid 2-d convolution, stride 1. input [C, H, W], kernel [K, C, k, k], bias [K].
  NodeId conv2d(NodeId kernel, NodeId bias, NodeId input);
  // 2x2 average pooling over [C, H, W]; odd trailing rows/columns are dropped.
  NodeId avgpool2(NodeId input);

  const Tensor& value(NodeId id) const;
  double scalar(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }

  Gradients backward(NodeId loss) const;
  // Adds d(loss)/d(param) into `acc`, which must be shaped like the store.
  void backward_into(NodeId loss, Gradients& acc) const;

 private:
  struct Node {
    OpKind kind = OpKind::kInput;
    std::vector<NodeId> inputs;
    Tensor value;
    const Tensor* external = nullptr;
    std::optional<ParamId> param;
    bool requires_grad = false;
    std::size_t aux = 0;
    std::size_t aux2 = 0;
    double factor = 0.0;
    Tensor mask;
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  void check_same_shape(std::string_view op, NodeId a, NodeId b) const;

  const ParamStore* params_;
  std::vector<Node> nodes_;
  std::vector<std::optional<NodeId>> param_nodes_;
};

}  // namespace refexp

#endif  // REFEXP_TAPE_HPP_
