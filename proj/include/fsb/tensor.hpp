#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fsb {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
class Tensor;

namespace detail {

template <class T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty when no gradient has been accumulated
  bool requires_grad = false;
  std::int64_t node = -1;  // tape index of the producing op, -1 for leaves
  std::uint64_t generation = 0;
};

}  // namespace detail

/// Dense row-major array with an optional gradient slot.
///
/// A Tensor is a shared handle: copies alias the same storage. Values
/// produced by ops are immutable; only leaves (parameters, inputs) expose
/// mutable data, which is how optimizers update them in place.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t flat_index) const { return impl_->data.at(flat_index); }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return impl_->node < 0; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }
  void accumulate_grad(std::span<const T> g);

  /// Fresh leaf holding a copy of the data and no history.
  Tensor detach() const;

  std::int64_t node() const { return impl_->node; }
  std::uint64_t generation() const { return impl_->generation; }
  const void* identity() const { return impl_.get(); }

  // Used by the op layer to tag results.
  void attach_node(std::int64_t node, std::uint64_t generation);

 private:
  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

// ---------------------------------------------------------------------------
// Gradient mode

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool prev_;
};

// ---------------------------------------------------------------------------
// Tape

template <class T>
using BackwardFn = std::function<std::vector<Tensor<T>>(const Tensor<T>& grad_out)>;

template <class T>
struct TapeNode {
  const char* op = "";
  std::vector<Tensor<T>> inputs;
  BackwardFn<T> backward;
  bool higher_order = true;  // backward is itself built from differentiable ops
};

/// Append-only op record for the calling thread. Inputs of a node always
/// precede it, so append order is a topological order.
template <class T>
class Tape {
 public:
  static Tape& current();

  std::int64_t record(TapeNode<T> node);
  const TapeNode<T>& node(std::int64_t i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }

  /// Drops every node. Tensors produced before the reset become detached
  /// history and cannot be differentiated through any more.
  void reset();

 private:
  std::vector<TapeNode<T>> nodes_;
  std::uint64_t generation_ = 1;
};

/// Records `op` when gradients are enabled and some input requires them.
template <class T>
Tensor<T> make_op_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                         const char* op, BackwardFn<T> backward, bool higher_order = true);

/// Reverse pass from a scalar `loss`. Accumulates into the grad slot of every
/// leaf that requires gradients, then frees the tape. Calling it again on the
/// same loss raises ContractError.
template <class T>
void backward(const Tensor<T>& loss);

/// Gradients of `loss` with respect to `wrt`, returned as tensors instead of
/// written into grad slots. With create_graph the gradient computation is
/// itself recorded (dense ops only) and the tape is kept; otherwise the tape
/// is freed. Unreachable inputs get zero gradients.
template <class T>
std::vector<Tensor<T>> grad(const Tensor<T>& loss, std::span<const Tensor<T>> wrt,
                            bool create_graph = false);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace fsb
