// Copyright 2026 The VISTA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VISTA_TENSOR_HPP_
#define VISTA_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vista/error.hpp"

namespace vista {

// Extents of a dense row-major tensor. Rank may be anything >= 1; most
// operations view the tensor as [rows x cols] with cols = last extent.
using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
int shape_cols(const Shape& shape);
int64_t shape_rows(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

// Lightweight handle to a node owned by a Graph. Values are immutable after
// the producing operation completes; only gradient buffers mutate later.
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return graph_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  bool requires_grad() const;
  std::span<const double> value() const;
  std::span<const double> grad() const;
  double scalar() const;  // numel() == 1 only

 private:
  friend class Graph;
  Tensor(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Tape of executed differentiable operations. Creation order is the
// topological order; backward() walks it once in reverse. A graph and its
// tensors must not be shared across threads; independent graphs may run
// concurrently.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves. Values must be finite; copies the data in.
  Tensor leaf(Shape shape, std::span<const double> data, bool requires_grad = false);
  Tensor constant(Shape shape, std::span<const double> data);
  Tensor zeros(Shape shape, bool requires_grad = false);
  Tensor scalar_constant(double v);

  // Elementwise (identical shapes; no broadcasting beyond scalar constants).
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);
  Tensor gelu(const Tensor& a);

  // Linear algebra on 2-d tensors.
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);

  // y[r, :] = x[r, :] + v for a length-cols vector v (affine bias).
  Tensor add_rows(const Tensor& x, const Tensor& v);

  // Layout.
  Tensor reshape(const Tensor& a, Shape shape);
  Tensor concat_rows(std::span<const Tensor> parts);
  Tensor concat_cols(std::span<const Tensor> parts);
  Tensor slice_rows(const Tensor& a, int64_t row_begin, int64_t row_end);
  Tensor slice_cols(const Tensor& a, int col_begin, int col_end);

  // Row-wise nonlinearities over the last axis.
  Tensor softmax(const Tensor& a);
  Tensor log_softmax(const Tensor& a);
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

  // Lookup.
  Tensor embedding_gather(const Tensor& table, std::span<const int> ids);
  // out[r] = x[r, ids[r]] for a [rows x cols] input.
  Tensor pick(const Tensor& x, std::span<const int> ids);

  // Reductions.
  Tensor sum(const Tensor& a);
  // sum_i w[i] * x[i] over the flat buffer; weights are plain constants.
  Tensor weighted_sum(const Tensor& x, std::span<const double> weights);
  Tensor squared_l2(const Tensor& a, const Tensor& b);
  Tensor cosine_sim(const Tensor& a, const Tensor& b, double eps);

  // Fused scaled-dot-product attention over contiguous per-example row
  // blocks: q, k, v are [batch*seq x d] with d split into n_heads column
  // blocks; additive_mask is [seq x seq] and is shared by every example and
  // head. Equivalent to the composition of slice/matmul/softmax primitives,
  // fused for speed.
  Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                             const Tensor& additive_mask, int batch, int n_heads);

  // Grouped alignment reductions: rows of x are grouped in blocks of
  // group_size, each block compared against one row of anchors.
  //   sum_r w[r] * ||x_r - anchor_{r/group_size}||^2
  Tensor group_weighted_sqdist(const Tensor& x, const Tensor& anchors,
                               std::span<const double> weights, int group_size);
  //   sum_r w[r] * cos(x_r, anchor_{r/group_size})
  Tensor group_weighted_cosine(const Tensor& x, const Tensor& anchors,
                               std::span<const double> weights, int group_size,
                               double eps);

  // Reverse pass from a scalar loss. Gradients of requires_grad leaves
  // accumulate across calls; call zero_grad() between optimization steps.
  void backward(const Tensor& loss);
  void zero_grad();

  // Drops every node but keeps allocated capacity for reuse.
  void reset();

  size_t size() const { return nodes_.size(); }

  // Test hook: when nonzero, backward() seeds the loss gradient with
  // 1 + debug_seed_perturbation instead of 1, corrupting every gradient by a
  // known relative amount.
  double debug_seed_perturbation = 0.0;

 private:
  friend class Tensor;

  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::function<void(Graph&)> backward;
  };

  Tensor make(Shape shape, bool requires_grad, bool is_leaf,
              std::function<void(Graph&)> backward_fn);
  void check_finite(const Tensor& t, const char* op) const;

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  std::vector<Node> nodes_;
};

// Independent finite-difference gradient audit. `fn` must be a deterministic
// map from one input tensor to a scalar; determinism is verified by a repeated
// evaluation. Returns max_i |analytic_i - central_i| / max(1, |analytic_i|).
double grad_check(const std::function<Tensor(Graph&, const Tensor&)>& fn,
                  const Shape& shape, std::span<const double> x0, double h);

}  // namespace vista

#endif  // VISTA_TENSOR_HPP_
