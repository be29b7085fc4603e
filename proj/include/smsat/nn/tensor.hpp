#pragma once

#include "smsat/common.hpp"
#include "smsat/rng.hpp"

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace smsat::nn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Array = Eigen::ArrayXd;

std::string shape_str(const Shape& s);
Index shape_numel(const Shape& s);

/// Graph node. Values are stored flat in row-major order.
struct Node {
  Shape shape;
  Array value;
  Array grad;  // empty until the first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  Array& grad_buffer();
};

/// Shared handle to a node. Copying a Tensor aliases the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, Array values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t ndim() const { return node_->shape.size(); }
  Index numel() const { return node_->value.size(); }

  Array& value() { return node_->value; }
  const Array& value() const { return node_->value; }
  /// Gradient buffer, zero-filled on first access.
  Array& grad() { return node_->grad_buffer(); }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad = Array(); }

  double item() const;
  /// Reverse-mode sweep from a scalar output.
  void backward();
  /// Same storage semantics, no history.
  Tensor detach() const;

  /// 2-D row-major view helpers.
  Eigen::Map<const RowMatrix> mat() const;
  Eigen::Map<RowMatrix> mat();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// ----- element-wise and algebraic ops -----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Row sums of a 2-D tensor: [N, M] -> [N].
Tensor sum_rows(const Tensor& a);

/// [m, k] x [k, n] -> [m, n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[N, in] W[out, in]^T (+ b[out]) -> [N, out]. `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});
/// [N, A] ++ [N, B] -> [N, A + B].
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Columns [start, start + len) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, Index start, Index len);
/// Rows [start, start + len) of a 2-D tensor.
Tensor slice_rows(const Tensor& a, Index start, Index len);

// ----- convolutional ops on NCHW tensors -----
struct Conv2dSpec {
  Index stride = 1;
  Index pad = 0;
};
Index conv_out_size(Index in, Index kernel, Index stride, Index pad);
/// x[N, C, H, W] * w[O, C, kh, kw] -> [N, O, OH, OW]; `b` [O] optional.
Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dSpec spec, const Tensor& b = {});
Tensor max_pool2d(const Tensor& x, Index kernel, Index stride, Index pad);
/// [N, C, H, W] -> [N, C].
Tensor global_avg_pool(const Tensor& x);

/// Running statistics of a batchnorm layer (buffers, not parameters).
struct BatchNormState {
  Array running_mean;
  Array running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};
/// Train mode normalizes with batch statistics over (N, H, W) and updates the
/// running stats; eval mode uses the running stats.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool train);

/// Inverted dropout: keeps with probability 1 - p and rescales by 1/(1 - p).
/// Identity when !train.
Tensor dropout(const Tensor& x, double p, bool train, CounterRng& rng);

/// Row-wise softmax of [N, K] (no gradient).
Array softmax_rows(const Tensor& logits);
/// Mean over the batch of -log softmax(logits)[n, target[n]].
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// ----- recurrent cell -----
/// Gate order in the stacked weights: input, forget, candidate, output.
struct LstmWeights {
  Tensor w_ih;  // [4H, in]
  Tensor w_hh;  // [4H, H]
  Tensor bias;  // [4H]
  Index hidden() const { return w_hh.dim(1); }
};

struct LstmState {
  Tensor h;
  Tensor c;
};

/// h_t = o * tanh(c_t), c_t = f * c_{t-1} + i * g.
LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmWeights& w);

}  // namespace smsat::nn
