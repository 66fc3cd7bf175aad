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

#include "vista/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

namespace vista {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

int shape_cols(const Shape& shape) { return shape.back(); }

int64_t shape_rows(const Shape& shape) {
  int64_t n = 1;
  for (size_t i = 0; i + 1 < shape.size(); ++i) n *= shape[i];
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

const Shape& Tensor::shape() const { return graph_->node(id_).shape; }

int64_t Tensor::numel() const { return shape_numel(shape()); }

bool Tensor::requires_grad() const { return graph_->node(id_).requires_grad; }

std::span<const double> Tensor::value() const { return graph_->node(id_).value; }

std::span<const double> Tensor::grad() const {
  const auto& n = graph_->node(id_);
  require(n.requires_grad, ErrorKind::kInvalid, "grad requested on a tensor without requires_grad");
  return n.grad;
}

double Tensor::scalar() const {
  require(numel() == 1, ErrorKind::kInvalid, "scalar() on a non-scalar tensor");
  return value()[0];
}

Tensor Graph::make(Shape shape, bool requires_grad, bool is_leaf,
                   std::function<void(Graph&)> backward_fn) {
  require(!shape.empty(), ErrorKind::kInvalid, "tensor rank must be >= 1");
  for (int e : shape) require(e >= 1, ErrorKind::kInvalid, "tensor extents must be positive");
  Node n;
  n.shape = std::move(shape);
  n.value.assign(static_cast<size_t>(shape_numel(n.shape)), 0.0);
  n.requires_grad = requires_grad;
  n.is_leaf = is_leaf;
  n.backward = std::move(backward_fn);
  if (requires_grad) n.grad.assign(n.value.size(), 0.0);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size() - 1));
}

void Graph::check_finite(const Tensor& t, const char* op) const {
  if (!all_finite(node(t.id_).value)) {
    fail(ErrorKind::kDiverged, std::string(op) + " produced a non-finite value");
  }
}

Tensor Graph::leaf(Shape shape, std::span<const double> data, bool requires_grad) {
  require(shape_numel(shape) == static_cast<int64_t>(data.size()), ErrorKind::kInvalid,
          "leaf: data length does not match shape " + shape_str(shape));
  require(all_finite(data), ErrorKind::kInvalid, "leaf: data contains non-finite values");
  Tensor t = make(std::move(shape), requires_grad, /*is_leaf=*/true, nullptr);
  std::copy(data.begin(), data.end(), node(t.id_).value.begin());
  return t;
}

Tensor Graph::constant(Shape shape, std::span<const double> data) {
  return leaf(std::move(shape), data, false);
}

Tensor Graph::zeros(Shape shape, bool requires_grad) {
  return make(std::move(shape), requires_grad, /*is_leaf=*/true, nullptr);
}

Tensor Graph::scalar_constant(double v) {
  const double data[1] = {v};
  return constant({1}, data);
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::kInvalid,
          "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const bool rg = a.requires_grad() || b.requires_grad();
  const int ia = a.id_, ib = b.id_;
  Tensor out = make(a.shape(), rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, ib, io](Graph& g) {
      const auto& go = g.node(io).grad;
      if (g.node(ia).requires_grad) {
        auto& ga = g.node(ia).grad;
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (g.node(ib).requires_grad) {
        auto& gb = g.node(ib).grad;
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  const auto& bv = node(ib).value;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  check_finite(out, "add");
  return out;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::kInvalid,
          "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const bool rg = a.requires_grad() || b.requires_grad();
  const int ia = a.id_, ib = b.id_;
  Tensor out = make(a.shape(), rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, ib, io](Graph& g) {
      const auto& go = g.node(io).grad;
      if (g.node(ia).requires_grad) {
        auto& ga = g.node(ia).grad;
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (g.node(ib).requires_grad) {
        auto& gb = g.node(ib).grad;
        for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  const auto& bv = node(ib).value;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  check_finite(out, "sub");
  return out;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::kInvalid,
          "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const bool rg = a.requires_grad() || b.requires_grad();
  const int ia = a.id_, ib = b.id_;
  Tensor out = make(a.shape(), rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, ib, io](Graph& g) {
      const auto& go = g.node(io).grad;
      const auto& av = g.node(ia).value;
      const auto& bv = g.node(ib).value;
      if (g.node(ia).requires_grad) {
        auto& ga = g.node(ia).grad;
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
      }
      if (g.node(ib).requires_grad) {
        auto& gb = g.node(ib).grad;
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
      }
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  const auto& bv = node(ib).value;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  check_finite(out, "mul");
  return out;
}

Tensor Graph::scale(const Tensor& a, double c) {
  const bool rg = a.requires_grad();
  const int ia = a.id_;
  Tensor out = make(a.shape(), rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, io, c](Graph& g) {
      const auto& go = g.node(io).grad;
      auto& ga = g.node(ia).grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = c * av[i];
  check_finite(out, "scale");
  return out;
}

Tensor Graph::add_scalar(const Tensor& a, double c) {
  const bool rg = a.requires_grad();
  const int ia = a.id_;
  Tensor out = make(a.shape(), rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, io](Graph& g) {
      const auto& go = g.node(io).grad;
      auto& ga = g.node(ia).grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
  check_finite(out, "add_scalar");
  return out;
}

Tensor Graph::gelu(const Tensor& a) {
  const bool rg = a.requires_grad();
  const int ia = a.id_;
  Tensor out = make(a.shape(), rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, io](Graph& g) {
      const auto& go = g.node(io).grad;
      const auto& av = g.node(ia).value;
      auto& ga = g.node(ia).grad;
      for (size_t i = 0; i < go.size(); ++i) {
        const double x = av[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        ga[i] += go[i] * (cdf + x * pdf);
      }
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  for (size_t i = 0; i < ov.size(); ++i) {
    const double x = av[i];
    ov[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  check_finite(out, "gelu");
  return out;
}

Tensor Graph::add_rows(const Tensor& x, const Tensor& v) {
  const int64_t rows = shape_rows(x.shape());
  const int cols = shape_cols(x.shape());
  require(v.numel() == cols, ErrorKind::kInvalid,
          "add_rows: vector length must equal the last extent");
  const bool rg = x.requires_grad() || v.requires_grad();
  const int ix = x.id_, iv = v.id_;
  Tensor out = make(x.shape(), rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ix, iv, io, rows, cols](Graph& g) {
      const auto& go = g.node(io).grad;
      if (g.node(ix).requires_grad) {
        auto& gx = g.node(ix).grad;
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (g.node(iv).requires_grad) {
        auto& gv = g.node(iv).grad;
        for (int64_t i = 0; i < rows; ++i) {
          const size_t off = static_cast<size_t>(i) * cols;
          for (int j = 0; j < cols; ++j) gv[j] += go[off + j];
        }
      }
    };
  }
  auto& ov = node(io).value;
  const auto& xv = node(ix).value;
  const auto& vv = node(iv).value;
  for (int64_t i = 0; i < rows; ++i) {
    const size_t off = static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) ov[off + j] = xv[off + j] + vv[j];
  }
  check_finite(out, "add_rows");
  return out;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2, ErrorKind::kInvalid,
          "matmul: operands must be 2-d, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int r = a.shape()[0], k = a.shape()[1];
  const int k2 = b.shape()[0], c = b.shape()[1];
  require(k == k2, ErrorKind::kInvalid,
          "matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const bool rg = a.requires_grad() || b.requires_grad();
  const int ia = a.id_, ib = b.id_;
  Tensor out = make({r, c}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, ib, io, r, k, c](Graph& g) {
      const double* go = g.node(io).grad.data();
      const double* av = g.node(ia).value.data();
      const double* bv = g.node(ib).value.data();
      if (g.node(ia).requires_grad) {
        double* __restrict ga = g.node(ia).grad.data();
        for (int i = 0; i < r; ++i) {
          const double* grow = go + static_cast<size_t>(i) * c;
          for (int kk = 0; kk < k; ++kk) {
            const double* __restrict brow = bv + static_cast<size_t>(kk) * c;
            double s = 0.0;
            for (int j = 0; j < c; ++j) s += grow[j] * brow[j];
            ga[static_cast<size_t>(i) * k + kk] += s;
          }
        }
      }
      if (g.node(ib).requires_grad) {
        double* gb = g.node(ib).grad.data();
        for (int i = 0; i < r; ++i) {
          const double* grow = go + static_cast<size_t>(i) * c;
          const double* arow = av + static_cast<size_t>(i) * k;
          for (int kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            double* __restrict gbrow = gb + static_cast<size_t>(kk) * c;
            for (int j = 0; j < c; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
    };
  }
  double* __restrict ov = node(io).value.data();
  const double* av = node(ia).value.data();
  const double* bv = node(ib).value.data();
  for (int i = 0; i < r; ++i) {
    double* __restrict orow = ov + static_cast<size_t>(i) * c;
    const double* arow = av + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* __restrict brow = bv + static_cast<size_t>(kk) * c;
      for (int j = 0; j < c; ++j) orow[j] += aik * brow[j];
    }
  }
  check_finite(out, "matmul");
  return out;
}

Tensor Graph::transpose(const Tensor& a) {
  require(a.shape().size() == 2, ErrorKind::kInvalid, "transpose: operand must be 2-d");
  const int r = a.shape()[0], c = a.shape()[1];
  const bool rg = a.requires_grad();
  const int ia = a.id_;
  Tensor out = make({c, r}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, io, r, c](Graph& g) {
      const auto& go = g.node(io).grad;
      auto& ga = g.node(ia).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          ga[static_cast<size_t>(i) * c + j] += go[static_cast<size_t>(j) * r + i];
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) ov[static_cast<size_t>(j) * r + i] = av[static_cast<size_t>(i) * c + j];
  return out;
}

Tensor Graph::reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.numel(), ErrorKind::kInvalid,
          "reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
  const bool rg = a.requires_grad();
  const int ia = a.id_;
  Tensor out = make(std::move(shape), rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, io](Graph& g) {
      const auto& go = g.node(io).grad;
      auto& ga = g.node(ia).grad;
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  std::copy(av.begin(), av.end(), ov.begin());
  return out;
}

Tensor Graph::concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), ErrorKind::kInvalid, "concat_rows: no inputs");
  const int cols = shape_cols(parts[0].shape());
  int64_t rows = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require(shape_cols(p.shape()) == cols, ErrorKind::kInvalid, "concat_rows: column mismatch");
    rows += shape_rows(p.shape());
    rg = rg || p.requires_grad();
  }
  std::vector<int> ids(parts.size());
  for (size_t i = 0; i < parts.size(); ++i) ids[i] = parts[i].id_;
  Tensor out = make({static_cast<int>(rows), cols}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ids, io](Graph& g) {
      const auto& go = g.node(io).grad;
      size_t off = 0;
      for (int id : ids) {
        auto& in = g.node(id);
        const size_t n = in.value.size();
        if (in.requires_grad) {
          for (size_t i = 0; i < n; ++i) in.grad[i] += go[off + i];
        }
        off += n;
      }
    };
  }
  auto& ov = node(io).value;
  size_t off = 0;
  for (int id : ids) {
    const auto& iv = node(id).value;
    std::copy(iv.begin(), iv.end(), ov.begin() + off);
    off += iv.size();
  }
  return out;
}

Tensor Graph::concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), ErrorKind::kInvalid, "concat_cols: no inputs");
  const int64_t rows = shape_rows(parts[0].shape());
  int cols = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require(p.shape().size() == 2, ErrorKind::kInvalid, "concat_cols: operands must be 2-d");
    require(shape_rows(p.shape()) == rows, ErrorKind::kInvalid, "concat_cols: row mismatch");
    cols += shape_cols(p.shape());
    rg = rg || p.requires_grad();
  }
  std::vector<int> ids(parts.size());
  std::vector<int> widths(parts.size());
  for (size_t i = 0; i < parts.size(); ++i) {
    ids[i] = parts[i].id_;
    widths[i] = shape_cols(parts[i].shape());
  }
  Tensor out = make({static_cast<int>(rows), cols}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ids, widths, io, rows, cols](Graph& g) {
      const auto& go = g.node(io).grad;
      int col_off = 0;
      for (size_t p = 0; p < ids.size(); ++p) {
        auto& in = g.node(ids[p]);
        const int w = widths[p];
        if (in.requires_grad) {
          for (int64_t i = 0; i < rows; ++i)
            for (int j = 0; j < w; ++j)
              in.grad[static_cast<size_t>(i) * w + j] +=
                  go[static_cast<size_t>(i) * cols + col_off + j];
        }
        col_off += w;
      }
    };
  }
  auto& ov = node(io).value;
  int col_off = 0;
  for (size_t p = 0; p < ids.size(); ++p) {
    const auto& iv = node(ids[p]).value;
    const int w = widths[p];
    for (int64_t i = 0; i < rows; ++i)
      for (int j = 0; j < w; ++j)
        ov[static_cast<size_t>(i) * cols + col_off + j] = iv[static_cast<size_t>(i) * w + j];
    col_off += w;
  }
  return out;
}

Tensor Graph::slice_rows(const Tensor& a, int64_t row_begin, int64_t row_end) {
  const int64_t rows = shape_rows(a.shape());
  const int cols = shape_cols(a.shape());
  require(0 <= row_begin && row_begin < row_end && row_end <= rows, ErrorKind::kInvalid,
          "slice_rows: range out of bounds");
  const bool rg = a.requires_grad();
  const int ia = a.id_;
  Tensor out = make({static_cast<int>(row_end - row_begin), cols}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, io, row_begin, cols](Graph& g) {
      const auto& go = g.node(io).grad;
      auto& ga = g.node(ia).grad;
      const size_t off = static_cast<size_t>(row_begin) * cols;
      for (size_t i = 0; i < go.size(); ++i) ga[off + i] += go[i];
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  std::copy(av.begin() + row_begin * cols, av.begin() + row_end * cols, ov.begin());
  return out;
}

Tensor Graph::slice_cols(const Tensor& a, int col_begin, int col_end) {
  require(a.shape().size() == 2, ErrorKind::kInvalid, "slice_cols: operand must be 2-d");
  const int r = a.shape()[0], c = a.shape()[1];
  require(0 <= col_begin && col_begin < col_end && col_end <= c, ErrorKind::kInvalid,
          "slice_cols: range out of bounds");
  const int w = col_end - col_begin;
  const bool rg = a.requires_grad();
  const int ia = a.id_;
  Tensor out = make({r, w}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, io, r, c, col_begin, w](Graph& g) {
      const auto& go = g.node(io).grad;
      auto& ga = g.node(ia).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
          ga[static_cast<size_t>(i) * c + col_begin + j] += go[static_cast<size_t>(i) * w + j];
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j) ov[static_cast<size_t>(i) * w + j] = av[static_cast<size_t>(i) * c + col_begin + j];
  return out;
}

Tensor Graph::softmax(const Tensor& a) {
  const int64_t rows = shape_rows(a.shape());
  const int cols = shape_cols(a.shape());
  require(cols >= 1, ErrorKind::kInvalid, "softmax: empty last axis");
  const bool rg = a.requires_grad();
  const int ia = a.id_;
  Tensor out = make(a.shape(), rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, io, rows, cols](Graph& g) {
      const auto& go = g.node(io).grad;
      const auto& pv = g.node(io).value;
      auto& ga = g.node(ia).grad;
      for (int64_t i = 0; i < rows; ++i) {
        const size_t off = static_cast<size_t>(i) * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += go[off + j] * pv[off + j];
        for (int j = 0; j < cols; ++j) ga[off + j] += pv[off + j] * (go[off + j] - dot);
      }
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  for (int64_t i = 0; i < rows; ++i) {
    const size_t off = static_cast<size_t>(i) * cols;
    double mx = av[off];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, av[off + j]);
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double e = std::exp(av[off + j] - mx);
      ov[off + j] = e;
      denom += e;
    }
    for (int j = 0; j < cols; ++j) ov[off + j] /= denom;
  }
  check_finite(out, "softmax");
  return out;
}

Tensor Graph::log_softmax(const Tensor& a) {
  const int64_t rows = shape_rows(a.shape());
  const int cols = shape_cols(a.shape());
  require(cols >= 1, ErrorKind::kInvalid, "log_softmax: empty last axis");
  const bool rg = a.requires_grad();
  const int ia = a.id_;
  Tensor out = make(a.shape(), rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, io, rows, cols](Graph& g) {
      const auto& go = g.node(io).grad;
      const auto& lv = g.node(io).value;
      auto& ga = g.node(ia).grad;
      for (int64_t i = 0; i < rows; ++i) {
        const size_t off = static_cast<size_t>(i) * cols;
        double gsum = 0.0;
        for (int j = 0; j < cols; ++j) gsum += go[off + j];
        for (int j = 0; j < cols; ++j) ga[off + j] += go[off + j] - std::exp(lv[off + j]) * gsum;
      }
    };
  }
  auto& ov = node(io).value;
  const auto& av = node(ia).value;
  for (int64_t i = 0; i < rows; ++i) {
    const size_t off = static_cast<size_t>(i) * cols;
    double mx = av[off];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, av[off + j]);
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) denom += std::exp(av[off + j] - mx);
    const double lse = mx + std::log(denom);
    for (int j = 0; j < cols; ++j) ov[off + j] = av[off + j] - lse;
  }
  check_finite(out, "log_softmax");
  return out;
}

Tensor Graph::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require(eps > 0.0, ErrorKind::kInvalid, "layer_norm: eps must be positive");
  const int64_t rows = shape_rows(x.shape());
  const int cols = shape_cols(x.shape());
  require(gain.numel() == cols && bias.numel() == cols, ErrorKind::kInvalid,
          "layer_norm: gain/bias must match the last extent");
  const bool rg = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  const int ix = x.id_, ig = gain.id_, ib = bias.id_;
  Tensor out = make(x.shape(), rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ix, ig, ib, io, rows, cols, eps](Graph& g) {
      const auto& go = g.node(io).grad;
      const auto& xv = g.node(ix).value;
      const auto& gv = g.node(ig).value;
      const bool need_x = g.node(ix).requires_grad;
      const bool need_g = g.node(ig).requires_grad;
      const bool need_b = g.node(ib).requires_grad;
      for (int64_t i = 0; i < rows; ++i) {
        const size_t off = static_cast<size_t>(i) * cols;
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += xv[off + j];
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
          const double d = xv[off + j] - mean;
          var += d * d;
        }
        var /= cols;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        if (need_g || need_b) {
          auto& gg = g.node(ig).grad;
          auto& gb = g.node(ib).grad;
          for (int j = 0; j < cols; ++j) {
            const double xhat = (xv[off + j] - mean) * inv_std;
            if (need_g) gg[j] += go[off + j] * xhat;
            if (need_b) gb[j] += go[off + j];
          }
        }
        if (need_x) {
          auto& gx = g.node(ix).grad;
          double h_mean = 0.0, hx_mean = 0.0;
          for (int j = 0; j < cols; ++j) {
            const double xhat = (xv[off + j] - mean) * inv_std;
            const double h = go[off + j] * gv[j];
            h_mean += h;
            hx_mean += h * xhat;
          }
          h_mean /= cols;
          hx_mean /= cols;
          for (int j = 0; j < cols; ++j) {
            const double xhat = (xv[off + j] - mean) * inv_std;
            const double h = go[off + j] * gv[j];
            gx[off + j] += (h - h_mean - xhat * hx_mean) * inv_std;
          }
        }
      }
    };
  }
  auto& ov = node(io).value;
  const auto& xv = node(ix).value;
  const auto& gv = node(ig).value;
  const auto& bv = node(ib).value;
  for (int64_t i = 0; i < rows; ++i) {
    const size_t off = static_cast<size_t>(i) * cols;
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += xv[off + j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = xv[off + j] - mean;
      var += d * d;
    }
    var /= cols;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < cols; ++j) {
      ov[off + j] = (xv[off + j] - mean) * inv_std * gv[j] + bv[j];
    }
  }
  check_finite(out, "layer_norm");
  return out;
}

Tensor Graph::embedding_gather(const Tensor& table, std::span<const int> ids) {
  require(table.shape().size() == 2, ErrorKind::kInvalid, "embedding_gather: table must be 2-d");
  const int v = table.shape()[0], d = table.shape()[1];
  for (int id : ids) {
    require(0 <= id && id < v, ErrorKind::kInvalid,
            "embedding_gather: id " + std::to_string(id) + " out of range [0, " + std::to_string(v) + ")");
  }
  const bool rg = table.requires_grad();
  const int it = table.id_;
  std::vector<int> own_ids(ids.begin(), ids.end());
  Tensor out = make({static_cast<int>(ids.size()), d}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [it, io, own_ids, d](Graph& g) {
      const auto& go = g.node(io).grad;
      auto& gt = g.node(it).grad;
      for (size_t i = 0; i < own_ids.size(); ++i) {
        const size_t src = i * d;
        const size_t dst = static_cast<size_t>(own_ids[i]) * d;
        for (int j = 0; j < d; ++j) gt[dst + j] += go[src + j];
      }
    };
  }
  auto& ov = node(io).value;
  const auto& tv = node(it).value;
  for (size_t i = 0; i < ids.size(); ++i) {
    const size_t src = static_cast<size_t>(ids[i]) * d;
    std::copy(tv.begin() + src, tv.begin() + src + d, ov.begin() + i * d);
  }
  return out;
}

Tensor Graph::pick(const Tensor& x, std::span<const int> ids) {
  const int64_t rows = shape_rows(x.shape());
  const int cols = shape_cols(x.shape());
  require(static_cast<int64_t>(ids.size()) == rows, ErrorKind::kInvalid,
          "pick: need one index per row");
  for (int id : ids) {
    require(0 <= id && id < cols, ErrorKind::kInvalid,
            "pick: index " + std::to_string(id) + " out of range [0, " + std::to_string(cols) + ")");
  }
  const bool rg = x.requires_grad();
  const int ix = x.id_;
  std::vector<int> own_ids(ids.begin(), ids.end());
  Tensor out = make({static_cast<int>(rows)}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ix, io, own_ids, cols](Graph& g) {
      const auto& go = g.node(io).grad;
      auto& gx = g.node(ix).grad;
      for (size_t i = 0; i < own_ids.size(); ++i) gx[i * cols + own_ids[i]] += go[i];
    };
  }
  auto& ov = node(io).value;
  const auto& xv = node(ix).value;
  for (size_t i = 0; i < own_ids.size(); ++i) ov[i] = xv[i * cols + own_ids[i]];
  return out;
}

Tensor Graph::sum(const Tensor& a) {
  const bool rg = a.requires_grad();
  const int ia = a.id_;
  Tensor out = make({1}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, io](Graph& g) {
      const double go = g.node(io).grad[0];
      auto& ga = g.node(ia).grad;
      for (double& v : ga) v += go;
    };
  }
  double s = 0.0;
  for (double v : node(ia).value) s += v;
  node(io).value[0] = s;
  check_finite(out, "sum");
  return out;
}

Tensor Graph::weighted_sum(const Tensor& x, std::span<const double> weights) {
  require(static_cast<int64_t>(weights.size()) == x.numel(), ErrorKind::kInvalid,
          "weighted_sum: weight length mismatch");
  const bool rg = x.requires_grad();
  const int ix = x.id_;
  std::vector<double> w(weights.begin(), weights.end());
  Tensor out = make({1}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ix, io, w](Graph& g) {
      const double go = g.node(io).grad[0];
      auto& gx = g.node(ix).grad;
      for (size_t i = 0; i < w.size(); ++i) gx[i] += go * w[i];
    };
  }
  double s = 0.0;
  const auto& xv = node(ix).value;
  for (size_t i = 0; i < w.size(); ++i) s += w[i] * xv[i];
  node(io).value[0] = s;
  check_finite(out, "weighted_sum");
  return out;
}

Tensor Graph::squared_l2(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::kInvalid,
          "squared_l2: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const bool rg = a.requires_grad() || b.requires_grad();
  const int ia = a.id_, ib = b.id_;
  Tensor out = make({1}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, ib, io](Graph& g) {
      const double go = g.node(io).grad[0];
      const auto& av = g.node(ia).value;
      const auto& bv = g.node(ib).value;
      if (g.node(ia).requires_grad) {
        auto& ga = g.node(ia).grad;
        for (size_t i = 0; i < av.size(); ++i) ga[i] += go * 2.0 * (av[i] - bv[i]);
      }
      if (g.node(ib).requires_grad) {
        auto& gb = g.node(ib).grad;
        for (size_t i = 0; i < av.size(); ++i) gb[i] -= go * 2.0 * (av[i] - bv[i]);
      }
    };
  }
  double s = 0.0;
  const auto& av = node(ia).value;
  const auto& bv = node(ib).value;
  for (size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  node(io).value[0] = s;
  check_finite(out, "squared_l2");
  return out;
}

namespace {

// Shared kernel for cosine similarity value + gradients with eps-guarded
// norms; when a true norm is at or below eps the guard freezes it, so its
// derivative contribution vanishes.
struct CosineParts {
  double sim = 0.0;
  double dot = 0.0;
  double na = 0.0, nb = 0.0;
  bool a_free = false, b_free = false;
};

CosineParts cosine_parts(const double* a, const double* b, size_t n, double eps) {
  CosineParts p;
  double naa = 0.0, nbb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    p.dot += a[i] * b[i];
    naa += a[i] * a[i];
    nbb += b[i] * b[i];
  }
  const double na_raw = std::sqrt(naa);
  const double nb_raw = std::sqrt(nbb);
  p.a_free = na_raw > eps;
  p.b_free = nb_raw > eps;
  p.na = std::max(na_raw, eps);
  p.nb = std::max(nb_raw, eps);
  p.sim = p.dot / (p.na * p.nb);
  return p;
}

void cosine_backward(const double* a, const double* b, size_t n, const CosineParts& p,
                     double upstream, double* ga, double* gb) {
  const double inv = 1.0 / (p.na * p.nb);
  for (size_t i = 0; i < n; ++i) {
    if (ga) {
      double d = b[i] * inv;
      if (p.a_free) d -= p.sim * a[i] / (p.na * p.na);
      ga[i] += upstream * d;
    }
    if (gb) {
      double d = a[i] * inv;
      if (p.b_free) d -= p.sim * b[i] / (p.nb * p.nb);
      gb[i] += upstream * d;
    }
  }
}

}  // namespace

Tensor Graph::cosine_sim(const Tensor& a, const Tensor& b, double eps) {
  require(a.shape() == b.shape(), ErrorKind::kInvalid,
          "cosine_sim: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  require(eps > 0.0, ErrorKind::kInvalid, "cosine_sim: eps must be positive");
  const bool rg = a.requires_grad() || b.requires_grad();
  const int ia = a.id_, ib = b.id_;
  Tensor out = make({1}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ia, ib, io, eps](Graph& g) {
      const double go = g.node(io).grad[0];
      const auto& av = g.node(ia).value;
      const auto& bv = g.node(ib).value;
      const CosineParts p = cosine_parts(av.data(), bv.data(), av.size(), eps);
      double* ga = g.node(ia).requires_grad ? g.node(ia).grad.data() : nullptr;
      double* gb = g.node(ib).requires_grad ? g.node(ib).grad.data() : nullptr;
      cosine_backward(av.data(), bv.data(), av.size(), p, go, ga, gb);
    };
  }
  const auto& av = node(ia).value;
  const auto& bv = node(ib).value;
  node(io).value[0] = cosine_parts(av.data(), bv.data(), av.size(), eps).sim;
  check_finite(out, "cosine_sim");
  return out;
}

Tensor Graph::multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                  const Tensor& additive_mask, int batch, int n_heads) {
  require(q.shape() == k.shape() && q.shape() == v.shape(), ErrorKind::kInvalid,
          "multihead_attention: q, k, v shapes must match");
  const int64_t rows = shape_rows(q.shape());
  const int d = shape_cols(q.shape());
  require(batch >= 1 && rows % batch == 0, ErrorKind::kInvalid,
          "multihead_attention: rows must divide into batch blocks");
  require(n_heads >= 1 && d % n_heads == 0, ErrorKind::kInvalid,
          "multihead_attention: d must divide into heads");
  const int seq = static_cast<int>(rows / batch);
  require(additive_mask.shape() == Shape{seq, seq}, ErrorKind::kInvalid,
          "multihead_attention: mask must be [seq x seq]");
  const int hd = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const bool rg = q.requires_grad() || k.requires_grad() || v.requires_grad();
  const int iq = q.id_, ik = k.id_, iv = v.id_, im = additive_mask.id_;

  // Softmax probabilities are kept for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<size_t>(batch) * n_heads * seq * seq, 0.0);

  Tensor out = make(q.shape(), rg, false, nullptr);
  const int io = out.id_;

  const auto head_base = [=](int e, int h) {
    return ((static_cast<size_t>(e) * n_heads) + h) * seq * seq;
  };

  {
    const double* qv = node(iq).value.data();
    const double* kv = node(ik).value.data();
    const double* vv = node(iv).value.data();
    const double* mv = node(im).value.data();
    double* __restrict ov = node(io).value.data();
    for (int e = 0; e < batch; ++e) {
      const size_t row0 = static_cast<size_t>(e) * seq;
      for (int h = 0; h < n_heads; ++h) {
        const int col0 = h * hd;
        double* __restrict p = probs->data() + head_base(e, h);
        for (int i = 0; i < seq; ++i) {
          const double* qi = qv + (row0 + i) * d + col0;
          double* __restrict prow = p + static_cast<size_t>(i) * seq;
          double mx = -std::numeric_limits<double>::infinity();
          for (int j = 0; j < seq; ++j) {
            const double* kj = kv + (row0 + j) * d + col0;
            double s = 0.0;
            for (int c = 0; c < hd; ++c) s += qi[c] * kj[c];
            s = s * scale + mv[static_cast<size_t>(i) * seq + j];
            prow[j] = s;
            mx = std::max(mx, s);
          }
          double denom = 0.0;
          for (int j = 0; j < seq; ++j) {
            prow[j] = std::exp(prow[j] - mx);
            denom += prow[j];
          }
          double* __restrict orow = ov + (row0 + i) * d + col0;
          for (int c = 0; c < hd; ++c) orow[c] = 0.0;
          for (int j = 0; j < seq; ++j) {
            prow[j] /= denom;
            const double pij = prow[j];
            const double* vj = vv + (row0 + j) * d + col0;
            for (int c = 0; c < hd; ++c) orow[c] += pij * vj[c];
          }
        }
      }
    }
  }

  if (rg) {
    node(io).backward = [iq, ik, iv, io, probs, batch, n_heads, seq, hd, scale,
                         head_base](Graph& g) {
      const int d = n_heads * hd;
      const double* go = g.node(io).grad.data();
      const double* qv = g.node(iq).value.data();
      const double* kv = g.node(ik).value.data();
      const double* vv = g.node(iv).value.data();
      double* gq = g.node(iq).requires_grad ? g.node(iq).grad.data() : nullptr;
      double* gk = g.node(ik).requires_grad ? g.node(ik).grad.data() : nullptr;
      double* gv = g.node(iv).requires_grad ? g.node(iv).grad.data() : nullptr;
      std::vector<double> dp(static_cast<size_t>(seq) * seq);
      for (int e = 0; e < batch; ++e) {
        const size_t row0 = static_cast<size_t>(e) * seq;
        for (int h = 0; h < n_heads; ++h) {
          const int col0 = h * hd;
          const double* p = probs->data() + head_base(e, h);
          // dP = dctx . V^T, then dS = P (dP - rowsum(dP o P)).
          for (int i = 0; i < seq; ++i) {
            const double* grow = go + (row0 + i) * d + col0;
            double* __restrict dprow = dp.data() + static_cast<size_t>(i) * seq;
            for (int j = 0; j < seq; ++j) {
              const double* vj = vv + (row0 + j) * d + col0;
              double s = 0.0;
              for (int c = 0; c < hd; ++c) s += grow[c] * vj[c];
              dprow[j] = s;
            }
            const double* prow = p + static_cast<size_t>(i) * seq;
            double dot = 0.0;
            for (int j = 0; j < seq; ++j) dot += dprow[j] * prow[j];
            for (int j = 0; j < seq; ++j) dprow[j] = prow[j] * (dprow[j] - dot) * scale;
          }
          if (gv) {
            for (int j = 0; j < seq; ++j) {
              double* __restrict gvrow = gv + (row0 + j) * d + col0;
              for (int i = 0; i < seq; ++i) {
                const double pij = p[static_cast<size_t>(i) * seq + j];
                const double* grow = go + (row0 + i) * d + col0;
                for (int c = 0; c < hd; ++c) gvrow[c] += pij * grow[c];
              }
            }
          }
          if (gq) {
            for (int i = 0; i < seq; ++i) {
              double* __restrict gqrow = gq + (row0 + i) * d + col0;
              const double* dprow = dp.data() + static_cast<size_t>(i) * seq;
              for (int j = 0; j < seq; ++j) {
                const double ds = dprow[j];
                const double* kj = kv + (row0 + j) * d + col0;
                for (int c = 0; c < hd; ++c) gqrow[c] += ds * kj[c];
              }
            }
          }
          if (gk) {
            for (int j = 0; j < seq; ++j) {
              double* __restrict gkrow = gk + (row0 + j) * d + col0;
              for (int i = 0; i < seq; ++i) {
                const double ds = dp[static_cast<size_t>(i) * seq + j];
                const double* qi = qv + (row0 + i) * d + col0;
                for (int c = 0; c < hd; ++c) gkrow[c] += ds * qi[c];
              }
            }
          }
        }
      }
    };
  }
  check_finite(out, "multihead_attention");
  return out;
}

Tensor Graph::group_weighted_sqdist(const Tensor& x, const Tensor& anchors,
                                    std::span<const double> weights, int group_size) {
  const int64_t rows = shape_rows(x.shape());
  const int d = shape_cols(x.shape());
  const int64_t groups = shape_rows(anchors.shape());
  require(group_size >= 1 && rows == groups * group_size, ErrorKind::kInvalid,
          "group_weighted_sqdist: rows must equal groups * group_size");
  require(shape_cols(anchors.shape()) == d, ErrorKind::kInvalid,
          "group_weighted_sqdist: width mismatch");
  require(static_cast<int64_t>(weights.size()) == rows, ErrorKind::kInvalid,
          "group_weighted_sqdist: one weight per row required");
  const bool rg = x.requires_grad() || anchors.requires_grad();
  const int ix = x.id_, is = anchors.id_;
  std::vector<double> w(weights.begin(), weights.end());
  Tensor out = make({1}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ix, is, io, w, d, group_size](Graph& g) {
      const double go = g.node(io).grad[0];
      const auto& xv = g.node(ix).value;
      const auto& sv = g.node(is).value;
      double* gx = g.node(ix).requires_grad ? g.node(ix).grad.data() : nullptr;
      double* gs = g.node(is).requires_grad ? g.node(is).grad.data() : nullptr;
      for (size_t r = 0; r < w.size(); ++r) {
        const size_t xoff = r * d;
        const size_t soff = (r / group_size) * d;
        const double c = go * 2.0 * w[r];
        for (int j = 0; j < d; ++j) {
          const double diff = xv[xoff + j] - sv[soff + j];
          if (gx) gx[xoff + j] += c * diff;
          if (gs) gs[soff + j] -= c * diff;
        }
      }
    };
  }
  double total = 0.0;
  const auto& xv = node(ix).value;
  const auto& sv = node(is).value;
  for (int64_t r = 0; r < rows; ++r) {
    const size_t xoff = static_cast<size_t>(r) * d;
    const size_t soff = static_cast<size_t>(r / group_size) * d;
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double diff = xv[xoff + j] - sv[soff + j];
      s += diff * diff;
    }
    total += w[static_cast<size_t>(r)] * s;
  }
  node(io).value[0] = total;
  check_finite(out, "group_weighted_sqdist");
  return out;
}

Tensor Graph::group_weighted_cosine(const Tensor& x, const Tensor& anchors,
                                    std::span<const double> weights, int group_size,
                                    double eps) {
  const int64_t rows = shape_rows(x.shape());
  const int d = shape_cols(x.shape());
  const int64_t groups = shape_rows(anchors.shape());
  require(group_size >= 1 && rows == groups * group_size, ErrorKind::kInvalid,
          "group_weighted_cosine: rows must equal groups * group_size");
  require(shape_cols(anchors.shape()) == d, ErrorKind::kInvalid,
          "group_weighted_cosine: width mismatch");
  require(static_cast<int64_t>(weights.size()) == rows, ErrorKind::kInvalid,
          "group_weighted_cosine: one weight per row required");
  require(eps > 0.0, ErrorKind::kInvalid, "group_weighted_cosine: eps must be positive");
  const bool rg = x.requires_grad() || anchors.requires_grad();
  const int ix = x.id_, is = anchors.id_;
  std::vector<double> w(weights.begin(), weights.end());
  Tensor out = make({1}, rg, false, nullptr);
  const int io = out.id_;
  if (rg) {
    node(io).backward = [ix, is, io, w, d, group_size, eps](Graph& g) {
      const double go = g.node(io).grad[0];
      const auto& xv = g.node(ix).value;
      const auto& sv = g.node(is).value;
      double* gx = g.node(ix).requires_grad ? g.node(ix).grad.data() : nullptr;
      double* gs = g.node(is).requires_grad ? g.node(is).grad.data() : nullptr;
      for (size_t r = 0; r < w.size(); ++r) {
        if (w[r] == 0.0) continue;
        const double* xr = xv.data() + r * d;
        const double* sr = sv.data() + (r / group_size) * d;
        const CosineParts p = cosine_parts(xr, sr, static_cast<size_t>(d), eps);
        cosine_backward(xr, sr, static_cast<size_t>(d), p, go * w[r],
                        gx ? gx + r * d : nullptr, gs ? gs + (r / group_size) * d : nullptr);
      }
    };
  }
  double total = 0.0;
  const auto& xv = node(ix).value;
  const auto& sv = node(is).value;
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + static_cast<size_t>(r) * d;
    const double* sr = sv.data() + static_cast<size_t>(r / group_size) * d;
    total += w[static_cast<size_t>(r)] * cosine_parts(xr, sr, static_cast<size_t>(d), eps).sim;
  }
  node(io).value[0] = total;
  check_finite(out, "group_weighted_cosine");
  return out;
}

void Graph::backward(const Tensor& loss) {
  require(loss.valid() && loss.graph_ == this, ErrorKind::kInvalid,
          "backward: loss does not belong to this graph");
  require(loss.numel() == 1, ErrorKind::kInvalid, "backward: loss must be a scalar");
  // Intermediate gradients are scratch per pass; leaf gradients accumulate
  // across passes until zero_grad().
  for (auto& n : nodes_) {
    if (!n.is_leaf && n.requires_grad) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  }
  Node& loss_node = node(loss.id_);
  if (loss_node.requires_grad) {
    loss_node.grad[0] += 1.0 + debug_seed_perturbation;
  }
  for (int id = loss.id_; id >= 0; --id) {
    Node& n = node(id);
    if (n.backward && n.requires_grad) n.backward(*this);
  }
}

void Graph::zero_grad() {
  for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void Graph::reset() { nodes_.clear(); }

double grad_check(const std::function<Tensor(Graph&, const Tensor&)>& fn,
                  const Shape& shape, std::span<const double> x0, double h) {
  require(h >= 1e-7 && h <= 1e-3, ErrorKind::kInvalid,
          "grad_check: step must lie in [1e-7, 1e-3]");
  require(shape_numel(shape) == static_cast<int64_t>(x0.size()), ErrorKind::kInvalid,
          "grad_check: data length does not match shape");

  const auto eval = [&](std::span<const double> xs) {
    Graph g;
    Tensor x = g.leaf(shape, xs, false);
    Tensor y = fn(g, x);
    require(y.numel() == 1, ErrorKind::kInvalid, "grad_check: fn must return a scalar");
    return y.scalar();
  };

  // Analytic gradient plus a repeated evaluation to detect nondeterminism.
  Graph g;
  Tensor x = g.leaf(shape, x0, true);
  Tensor y = fn(g, x);
  require(y.numel() == 1, ErrorKind::kInvalid, "grad_check: fn must return a scalar");
  const double y0 = y.scalar();
  g.backward(y);
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  const double y_repeat = eval(x0);
  require(y_repeat == y0, ErrorKind::kInvalid,
          "grad_check: fn is not deterministic (repeated evaluations differ)");

  std::vector<double> xs(x0.begin(), x0.end());
  double max_rel_err = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double saved = xs[i];
    xs[i] = saved + h;
    const double fp = eval(xs);
    xs[i] = saved - h;
    const double fm = eval(xs);
    xs[i] = saved;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    max_rel_err = std::max(max_rel_err, err);
  }
  return max_rel_err;
}

}  // namespace vista
