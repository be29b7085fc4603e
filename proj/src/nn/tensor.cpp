#include "smsat/nn/tensor.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

namespace smsat::nn {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Index shape_numel(const Shape& s) {
  Index n = 1;
  for (auto d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

Array& Node::grad_buffer() {
  if (grad.size() != value.size()) grad = Array::Zero(value.size());
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const Index n = shape_numel(shape);
  return from(std::move(shape), Array::Constant(n, v), requires_grad);
}

Tensor Tensor::from(Shape shape, Array values, bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) + " values");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, Array::Constant(1, v), requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value(0);
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  return Tensor(std::move(n));
}

Eigen::Map<const RowMatrix> Tensor::mat() const {
  if (ndim() != 2) throw ShapeError("mat() needs a 2-D tensor, got " + shape_str(shape()));
  return {node_->value.data(), dim(0), dim(1)};
}

Eigen::Map<RowMatrix> Tensor::mat() {
  if (ndim() != 2) throw ShapeError("mat() needs a 2-D tensor, got " + shape_str(shape()));
  return {node_->value.data(), dim(0), dim(1)};
}

void Tensor::backward() {
  if (numel() != 1) throw ShapeError("backward() needs a scalar output, got " + shape_str(shape()));
  if (!requires_grad()) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer() += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

namespace {

Tensor make_result(Shape shape, Array value, std::vector<Tensor> inputs, const char* op,
                   std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  for (const auto& t : inputs)
    if (t.defined() && t.requires_grad()) n->requires_grad = true;
  if (n->requires_grad) {
    for (const auto& t : inputs)
      if (t.defined()) n->parents.push_back(t.node());
    n->backward_fn = std::move(backward);
  }
  return Tensor(std::move(n));
}

// Parent i's grad buffer when it requires grad, else nullptr.
Array* pgrad(Node& n, std::size_t i) {
  Node* p = n.parents[i].get();
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_ndim(const Tensor& a, std::size_t nd, const char* op) {
  if (a.ndim() != nd)
    throw ShapeError(std::string(op) + ": expected " + std::to_string(nd) + "-D input, got " + shape_str(a.shape()));
}

using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  return make_result(a.shape(), a.value() + b.value(), {a, b}, "add", [](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += n.grad;
    if (auto* g = pgrad(n, 1)) *g += n.grad;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  return make_result(a.shape(), a.value() - b.value(), {a, b}, "sub", [](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += n.grad;
    if (auto* g = pgrad(n, 1)) *g -= n.grad;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  return make_result(a.shape(), a.value() * b.value(), {a, b}, "mul", [](Node& n) {
    const Array& av = n.parents[0]->value;
    const Array& bv = n.parents[1]->value;
    if (auto* g = pgrad(n, 0)) *g += n.grad * bv;
    if (auto* g = pgrad(n, 1)) *g += n.grad * av;
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.shape(), a.value() * s, {a}, "scale", [s](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += n.grad * s;
  });
}

Tensor relu(const Tensor& a) {
  return make_result(a.shape(), a.value().max(0.0), {a}, "relu", [](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += (n.parents[0]->value > 0.0).cast<double>() * n.grad;
  });
}

Tensor sigmoid(const Tensor& a) {
  Array y = 1.0 / (1.0 + (-a.value()).exp());
  return make_result(a.shape(), y, {a}, "sigmoid", [](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += n.grad * n.value * (1.0 - n.value);
  });
}

Tensor tanh(const Tensor& a) {
  return make_result(a.shape(), a.value().tanh(), {a}, "tanh", [](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += n.grad * (1.0 - n.value.square());
  });
}

Tensor log(const Tensor& a) {
  return make_result(a.shape(), a.value().log(), {a}, "log", [](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += n.grad / n.parents[0]->value;
  });
}

Tensor sqrt(const Tensor& a) {
  return make_result(a.shape(), a.value().sqrt(), {a}, "sqrt", [](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += n.grad * 0.5 / n.value;
  });
}

Tensor sum(const Tensor& a) {
  return make_result({}, Array::Constant(1, a.value().sum()), {a}, "sum", [](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += n.grad(0);
  });
}

Tensor mean(const Tensor& a) {
  const double k = static_cast<double>(std::max<Index>(1, a.numel()));
  return make_result({}, Array::Constant(1, a.value().sum() / k), {a}, "mean", [k](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += n.grad(0) / k;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  return make_result(std::move(shape), a.value(), {a}, "reshape", [](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += n.grad;
  });
}

Tensor sum_rows(const Tensor& a) {
  require_ndim(a, 2, "sum_rows");
  const Index rows = a.dim(0), cols = a.dim(1);
  Array out = ConstRowMap(a.value().data(), rows, cols).rowwise().sum().array();
  return make_result({rows}, out, {a}, "sum_rows", [rows, cols](Node& n) {
    if (auto* g = pgrad(n, 0)) RowMap(g->data(), rows, cols).colwise() += n.grad.matrix();
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_ndim(a, 2, "matmul");
  require_ndim(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Array out(m * n);
  RowMap(out.data(), m, n).noalias() = a.mat() * b.mat();
  return make_result({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](Node& node) {
    ConstRowMap dy(node.grad.data(), m, n);
    ConstRowMap av(node.parents[0]->value.data(), m, k);
    ConstRowMap bv(node.parents[1]->value.data(), k, n);
    if (auto* g = pgrad(node, 0)) RowMap(g->data(), m, k).noalias() += dy * bv.transpose();
    if (auto* g = pgrad(node, 1)) RowMap(g->data(), k, n).noalias() += av.transpose() * dy;
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_ndim(x, 2, "linear");
  require_ndim(w, 2, "linear");
  if (x.dim(1) != w.dim(1))
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  const Index batch = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != out_dim))
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match weight " + shape_str(w.shape()));
  Array out(batch * out_dim);
  RowMap y(out.data(), batch, out_dim);
  y.noalias() = x.mat() * w.mat().transpose();
  if (b.defined()) y.rowwise() += b.value().matrix().transpose();
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  const bool has_bias = b.defined();
  return make_result({batch, out_dim}, std::move(out), inputs, "linear", [batch, in, out_dim, has_bias](Node& n) {
    ConstRowMap dy(n.grad.data(), batch, out_dim);
    ConstRowMap xv(n.parents[0]->value.data(), batch, in);
    ConstRowMap wv(n.parents[1]->value.data(), out_dim, in);
    if (auto* g = pgrad(n, 0)) RowMap(g->data(), batch, in).noalias() += dy * wv;
    if (auto* g = pgrad(n, 1)) RowMap(g->data(), out_dim, in).noalias() += dy.transpose() * xv;
    if (has_bias)
      if (auto* g = pgrad(n, 2)) g->matrix() += dy.colwise().sum().transpose();
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_ndim(a, 2, "concat_cols");
  require_ndim(b, 2, "concat_cols");
  if (a.dim(0) != b.dim(0))
    throw ShapeError("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const Index rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Array out(rows * (ca + cb));
  RowMap y(out.data(), rows, ca + cb);
  y.leftCols(ca) = a.mat();
  y.rightCols(cb) = b.mat();
  return make_result({rows, ca + cb}, std::move(out), {a, b}, "concat_cols", [rows, ca, cb](Node& n) {
    ConstRowMap dy(n.grad.data(), rows, ca + cb);
    if (auto* g = pgrad(n, 0)) RowMap(g->data(), rows, ca) += dy.leftCols(ca);
    if (auto* g = pgrad(n, 1)) RowMap(g->data(), rows, cb) += dy.rightCols(cb);
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index len) {
  require_ndim(a, 2, "slice_cols");
  const Index rows = a.dim(0), cols = a.dim(1);
  if (start < 0 || len < 0 || start + len > cols)
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(len) + ") out of " + shape_str(a.shape()));
  Array out(rows * len);
  RowMap(out.data(), rows, len) = a.mat().middleCols(start, len);
  return make_result({rows, len}, std::move(out), {a}, "slice_cols", [rows, cols, start, len](Node& n) {
    if (auto* g = pgrad(n, 0)) RowMap(g->data(), rows, cols).middleCols(start, len) += ConstRowMap(n.grad.data(), rows, len);
  });
}

Tensor slice_rows(const Tensor& a, Index start, Index len) {
  require_ndim(a, 2, "slice_rows");
  const Index rows = a.dim(0), cols = a.dim(1);
  if (start < 0 || len < 0 || start + len > rows)
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(len) + ") out of " + shape_str(a.shape()));
  Array out = a.value().segment(start * cols, len * cols);
  return make_result({len, cols}, std::move(out), {a}, "slice_rows", [cols, start, len](Node& n) {
    if (auto* g = pgrad(n, 0)) g->segment(start * cols, len * cols) += n.grad;
  });
}

Index conv_out_size(Index in, Index kernel, Index stride, Index pad) {
  const Index span = in + 2 * pad - kernel;
  if (span < 0 || stride < 1) return 0;
  return span / stride + 1;
}

namespace {

struct ConvGeom {
  Index n, c, h, w, o, kh, kw, oh, ow, stride, pad;
};

// cols[(ci*kh + i)*kw + j, y*ow + x] = x[ci, y*s - p + i, x*s - p + j]
void im2col(const double* img, const ConvGeom& g, RowMatrix& cols) {
  cols.resize(g.c * g.kh * g.kw, g.oh * g.ow);
  for (Index ci = 0; ci < g.c; ++ci)
    for (Index i = 0; i < g.kh; ++i)
      for (Index j = 0; j < g.kw; ++j) {
        const Index row = (ci * g.kh + i) * g.kw + j;
        double* dst = cols.row(row).data();
        for (Index y = 0; y < g.oh; ++y) {
          const Index iy = y * g.stride - g.pad + i;
          for (Index x = 0; x < g.ow; ++x) {
            const Index ix = x * g.stride - g.pad + j;
            dst[y * g.ow + x] =
                (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? img[(ci * g.h + iy) * g.w + ix] : 0.0;
          }
        }
      }
}

void col2im(const RowMatrix& cols, const ConvGeom& g, double* img) {
  for (Index ci = 0; ci < g.c; ++ci)
    for (Index i = 0; i < g.kh; ++i)
      for (Index j = 0; j < g.kw; ++j) {
        const Index row = (ci * g.kh + i) * g.kw + j;
        const double* src = cols.row(row).data();
        for (Index y = 0; y < g.oh; ++y) {
          const Index iy = y * g.stride - g.pad + i;
          if (iy < 0 || iy >= g.h) continue;
          for (Index x = 0; x < g.ow; ++x) {
            const Index ix = x * g.stride - g.pad + j;
            if (ix >= 0 && ix < g.w) img[(ci * g.h + iy) * g.w + ix] += src[y * g.ow + x];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dSpec spec, const Tensor& b) {
  require_ndim(x, 4, "conv2d");
  require_ndim(w, 4, "conv2d");
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " has " + std::to_string(x.dim(1)) +
                     " channels, weight " + shape_str(w.shape()) + " expects " + std::to_string(w.dim(1)));
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0, spec.stride, spec.pad};
  g.oh = conv_out_size(g.h, g.kh, g.stride, g.pad);
  g.ow = conv_out_size(g.w, g.kw, g.stride, g.pad);
  if (g.oh < 1 || g.ow < 1)
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " too small for kernel " + shape_str(w.shape()));
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != g.o)) throw ShapeError("conv2d: bias shape " + shape_str(b.shape()));

  const Index ckk = g.c * g.kh * g.kw, plane = g.oh * g.ow;
  Array out(g.n * g.o * plane);
  ConstRowMap wm(w.value().data(), g.o, ckk);
  RowMatrix cols;
  for (Index s = 0; s < g.n; ++s) {
    im2col(x.value().data() + s * g.c * g.h * g.w, g, cols);
    RowMap y(out.data() + s * g.o * plane, g.o, plane);
    y.noalias() = wm * cols;
    if (b.defined()) y.colwise() += b.value().matrix();
  }
  std::vector<Tensor> inputs{x, w};
  const bool has_bias = b.defined();
  if (has_bias) inputs.push_back(b);
  return make_result({g.n, g.o, g.oh, g.ow}, std::move(out), inputs, "conv2d", [g, ckk, plane, has_bias](Node& n) {
    const Array& xv = n.parents[0]->value;
    ConstRowMap wm(n.parents[1]->value.data(), g.o, ckk);
    Array* gx = pgrad(n, 0);
    Array* gw = pgrad(n, 1);
    Array* gb = has_bias ? pgrad(n, 2) : nullptr;
    RowMatrix cols, dcols;
    for (Index s = 0; s < g.n; ++s) {
      ConstRowMap dy(n.grad.data() + s * g.o * plane, g.o, plane);
      if (gw) {
        im2col(xv.data() + s * g.c * g.h * g.w, g, cols);
        RowMap(gw->data(), g.o, ckk).noalias() += dy * cols.transpose();
      }
      if (gx) {
        dcols.noalias() = wm.transpose() * dy;
        col2im(dcols, g, gx->data() + s * g.c * g.h * g.w);
      }
      if (gb) gb->matrix() += dy.rowwise().sum();
    }
  });
}

Tensor max_pool2d(const Tensor& x, Index kernel, Index stride, Index pad) {
  require_ndim(x, 4, "max_pool2d");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = conv_out_size(h, kernel, stride, pad), ow = conv_out_size(w, kernel, stride, pad);
  if (oh < 1 || ow < 1) throw ShapeError("max_pool2d: input " + shape_str(x.shape()) + " too small");
  Array out(n * c * oh * ow);
  std::vector<Index> argmax(static_cast<std::size_t>(out.size()));
  const double* xv = x.value().data();
  for (Index p = 0; p < n * c; ++p)
    for (Index y = 0; y < oh; ++y)
      for (Index xo = 0; xo < ow; ++xo) {
        double best = -std::numeric_limits<double>::infinity();
        Index best_idx = -1;
        for (Index i = 0; i < kernel; ++i) {
          const Index iy = y * stride - pad + i;
          if (iy < 0 || iy >= h) continue;
          for (Index j = 0; j < kernel; ++j) {
            const Index ix = xo * stride - pad + j;
            if (ix < 0 || ix >= w) continue;
            const Index idx = (p * h + iy) * w + ix;
            if (xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
            }
          }
        }
        const Index o = (p * oh + y) * ow + xo;
        out(o) = best;
        argmax[static_cast<std::size_t>(o)] = best_idx;
      }
  return make_result({n, c, oh, ow}, std::move(out), {x}, "max_pool2d", [argmax = std::move(argmax)](Node& node) {
    if (auto* g = pgrad(node, 0))
      for (std::size_t o = 0; o < argmax.size(); ++o) (*g)(argmax[o]) += node.grad(static_cast<Index>(o));
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require_ndim(x, 4, "global_avg_pool");
  const Index n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Array out = ConstRowMap(x.value().data(), n * c, plane).rowwise().mean().array();
  return make_result({n, c}, std::move(out), {x}, "global_avg_pool", [n, c, plane](Node& node) {
    if (auto* g = pgrad(node, 0))
      RowMap(g->data(), n * c, plane).colwise() += (node.grad / static_cast<double>(plane)).matrix();
  });
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool train) {
  require_ndim(x, 4, "batchnorm2d");
  const Index n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("batchnorm2d: " + std::to_string(c) + " channels, gamma " + shape_str(gamma.shape()) + ", beta " +
                     shape_str(beta.shape()));
  if (state.running_mean.size() != c) state.running_mean = Array::Zero(c);
  if (state.running_var.size() != c) state.running_var = Array::Ones(c);
  const Index m = n * plane;
  Array mu(c), inv_std(c);
  const double* xv = x.value().data();
  if (train) {
    if (m < 2) throw ShapeError("batchnorm2d: need more than one value per channel in train mode");
    for (Index ch = 0; ch < c; ++ch) {
      double s = 0.0, s2 = 0.0;
      for (Index b = 0; b < n; ++b) {
        const double* p = xv + (b * c + ch) * plane;
        for (Index i = 0; i < plane; ++i) s += p[i];
      }
      const double mean_c = s / static_cast<double>(m);
      for (Index b = 0; b < n; ++b) {
        const double* p = xv + (b * c + ch) * plane;
        for (Index i = 0; i < plane; ++i) s2 += (p[i] - mean_c) * (p[i] - mean_c);
      }
      const double var = s2 / static_cast<double>(m);
      mu(ch) = mean_c;
      inv_std(ch) = 1.0 / std::sqrt(var + state.eps);
      state.running_mean(ch) = (1.0 - state.momentum) * state.running_mean(ch) + state.momentum * mean_c;
      state.running_var(ch) = (1.0 - state.momentum) * state.running_var(ch) +
                              state.momentum * s2 / static_cast<double>(m - 1);
    }
  } else {
    mu = state.running_mean;
    inv_std = 1.0 / (state.running_var + state.eps).sqrt();
  }
  Array xhat(x.numel()), out(x.numel());
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (b * c + ch) * plane;
      xhat.segment(off, plane) = (x.value().segment(off, plane) - mu(ch)) * inv_std(ch);
      out.segment(off, plane) = xhat.segment(off, plane) * gamma.value()(ch) + beta.value()(ch);
    }
  return make_result(x.shape(), std::move(out), {x, gamma, beta}, "batchnorm2d",
                     [n, c, plane, m, train, xhat = std::move(xhat), inv_std](Node& node) {
                       const Array& gam = node.parents[1]->value;
                       Array* gx = pgrad(node, 0);
                       Array* gg = pgrad(node, 1);
                       Array* gb = pgrad(node, 2);
                       for (Index ch = 0; ch < c; ++ch) {
                         double sdy = 0.0, sdyx = 0.0;
                         for (Index b = 0; b < n; ++b) {
                           const Index off = (b * c + ch) * plane;
                           sdy += node.grad.segment(off, plane).sum();
                           sdyx += (node.grad.segment(off, plane) * xhat.segment(off, plane)).sum();
                         }
                         if (gg) (*gg)(ch) += sdyx;
                         if (gb) (*gb)(ch) += sdy;
                         if (!gx) continue;
                         const double k = gam(ch) * inv_std(ch);
                         for (Index b = 0; b < n; ++b) {
                           const Index off = (b * c + ch) * plane;
                           if (train)
                             gx->segment(off, plane) +=
                                 k / static_cast<double>(m) *
                                 (static_cast<double>(m) * node.grad.segment(off, plane) - sdy -
                                  xhat.segment(off, plane) * sdyx);
                           else
                             gx->segment(off, plane) += k * node.grad.segment(off, plane);
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, double p, bool train, CounterRng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw Error("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (!train || p == 0.0) return x;
  Array mask(x.numel());
  const double keep = 1.0 - p;
  for (Index i = 0; i < mask.size(); ++i) mask(i) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return make_result(x.shape(), x.value() * mask, {x}, "dropout", [mask](Node& n) {
    if (auto* g = pgrad(n, 0)) *g += n.grad * mask;
  });
}

Array softmax_rows(const Tensor& logits) {
  require_ndim(logits, 2, "softmax");
  const Index rows = logits.dim(0), k = logits.dim(1);
  Array out(rows * k);
  ConstRowMap z(logits.value().data(), rows, k);
  RowMap p(out.data(), rows, k);
  for (Index r = 0; r < rows; ++r) {
    const double mx = z.row(r).maxCoeff();
    p.row(r) = (z.row(r).array() - mx).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  require_ndim(logits, 2, "softmax_cross_entropy");
  const Index rows = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(targets.size()) != rows)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(logits.shape()));
  Array probs = softmax_rows(logits);
  ConstRowMap z(logits.value().data(), rows, k);
  double loss = 0.0;
  for (Index r = 0; r < rows; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= k) throw Error("softmax_cross_entropy: target " + std::to_string(t) + " out of range");
    const double mx = z.row(r).maxCoeff();
    const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
    loss += lse - z(r, t);
  }
  loss /= static_cast<double>(rows);
  return make_result({}, Array::Constant(1, loss), {logits}, "softmax_cross_entropy",
                     [probs = std::move(probs), targets, rows, k](Node& n) {
                       auto* g = pgrad(n, 0);
                       if (!g) return;
                       const double s = n.grad(0) / static_cast<double>(rows);
                       RowMap gm(g->data(), rows, k);
                       ConstRowMap p(probs.data(), rows, k);
                       gm += s * p;
                       for (Index r = 0; r < rows; ++r) gm(r, targets[static_cast<std::size_t>(r)]) -= s;
                     });
}

LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmWeights& w) {
  const Index hidden = w.hidden();
  if (w.w_ih.ndim() != 2 || w.w_ih.dim(0) != 4 * hidden || w.w_hh.dim(0) != 4 * hidden || w.bias.numel() != 4 * hidden)
    throw ShapeError("lstm_cell: inconsistent weights w_ih " + shape_str(w.w_ih.shape()) + ", w_hh " +
                     shape_str(w.w_hh.shape()) + ", bias " + shape_str(w.bias.shape()));
  if (prev.h.ndim() != 2 || prev.h.dim(1) != hidden || prev.c.shape() != prev.h.shape() || x.dim(0) != prev.h.dim(0))
    throw ShapeError("lstm_cell: state " + shape_str(prev.h.shape()) + " / input " + shape_str(x.shape()) +
                     " inconsistent with hidden size " + std::to_string(hidden));
  const Tensor gates = add(linear(x, w.w_ih, w.bias), linear(prev.h, w.w_hh));
  const Tensor i = sigmoid(slice_cols(gates, 0, hidden));
  const Tensor f = sigmoid(slice_cols(gates, hidden, hidden));
  const Tensor g = tanh(slice_cols(gates, 2 * hidden, hidden));
  const Tensor o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
  const Tensor c = add(mul(f, prev.c), mul(i, g));
  const Tensor h = mul(o, tanh(c));
  return {h, c};
}

}  // namespace smsat::nn
