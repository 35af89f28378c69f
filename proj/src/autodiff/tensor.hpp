// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode autodiff over dense row-major float64 tensors.
// One Tape per training step; leaves (parameters) outlive tapes. Broadcasting
// is limited to scalar / shape-prefix / shape-suffix operands.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace proxlab::ad {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0 = not produced by a live tape (leaf/constant)

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor constant_scalar(double v);
  static Tensor zeros(Shape shape);
  // Leaf with requires_grad; participates in every tape it is used on.
  static Tensor param(Shape shape, std::vector<double> data);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::int64_t size() const { return static_cast<std::int64_t>(d_->value.size()); }
  std::span<const double> value() const { return d_->value; }
  std::span<double> mutable_value() { return d_->value; }
  std::span<const double> grad() const { return d_->grad; }
  bool requires_grad() const { return d_->requires_grad; }
  double item() const;

  void zero_grad() { d_->grad.assign(d_->value.size(), 0.0); }

  TensorData* data_ptr() const { return d_.get(); }
  std::shared_ptr<TensorData> handle() const { return d_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

// Append-only operation tape. Single-writer; distinct tapes are independent.
class Tape {
 public:
  Tape();
  explicit Tape(bool grad_enabled);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::uint64_t id() const { return id_; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Seeds d(loss)=1 and runs every recorded node's backward once, in reverse
  // topological (= recording) order.
  void backward(const Tensor& loss);

  // --- op set ---
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);
  // a: [..., M, K]; b: [K, N] shared or [..., K, N] with matching leading dims.
  // transpose_b treats b as [N, K] (resp. [..., N, K]).
  Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
  Tensor exp(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor gelu(const Tensor& a);
  Tensor logsigmoid(const Tensor& a);
  Tensor log_softmax(const Tensor& a);  // over last dim
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-5);
  // Row lookup: table [V, D], ids over any shape -> [ids..., D].
  Tensor embed(const Tensor& table, const std::vector<int>& ids, Shape ids_shape);
  // Last-dim index: x [..., V], ids shaped like x's leading dims -> [...].
  Tensor gather(const Tensor& x, const std::vector<int>& ids);
  Tensor sum(const Tensor& a);       // -> scalar
  Tensor mean(const Tensor& a);      // -> scalar
  Tensor row_sum(const Tensor& a);   // reduce last dim
  // Gradient passes only where lo <= x <= hi; bounds may be +-infinity.
  Tensor clip(const Tensor& a, double lo, double hi);
  // Elementwise min; on ties the gradient goes to the first operand.
  Tensor minimum(const Tensor& a, const Tensor& b);
  Tensor reshape(const Tensor& a, Shape shape);
  Tensor transpose_12(const Tensor& a);  // [A,B,C,D] -> [A,C,B,D]
  // Insert a zero at the front of the last dim: [..., L] -> [..., L+1].
  Tensor pad_front_zero(const Tensor& a);

  // Constant copy outside any graph; blocks gradient flow.
  static Tensor detach(const Tensor& a);

 private:
  struct Node {
    std::function<void()> backward;
  };

  Tensor make_output(Shape shape, bool any_input_grad);
  void record(std::function<void()> fn);
  Tensor unary_map(const Tensor& a, const std::function<double(double)>& f,
                   const std::function<double(double, double)>& df_yx);

  std::uint64_t id_;
  bool grad_enabled_ = true;
  std::vector<Node> nodes_;
};

}  // namespace proxlab::ad
