#include "fsb/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "fsb/errors.hpp"
#include "fsb/ops.hpp"

namespace fsb {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl<T>>()) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <class T>
std::span<T> Tensor<T>::mutable_data() {
  if (!is_leaf()) throw ContractError("mutable_data() is only available on leaf tensors");
  return impl_->data;
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <class T>
void Tensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("requires_grad can only be toggled on leaf tensors");
  impl_->requires_grad = on;
}

template <class T>
void Tensor<T>::accumulate_grad(std::span<const T> g) {
  if (g.size() != numel()) throw DimensionError("gradient size mismatch for " + shape_str(shape()));
  if (impl_->grad.empty()) {
    impl_->grad.assign(g.begin(), g.end());
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) impl_->grad[i] += g[i];
  }
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data, false);
}

template <class T>
void Tensor<T>::attach_node(std::int64_t node, std::uint64_t generation) {
  impl_->node = node;
  impl_->generation = generation;
  impl_->requires_grad = true;
}

template class Tensor<float>;
template class Tensor<double>;

// ---------------------------------------------------------------------------

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

GradModeGuard::GradModeGuard(bool enabled) : prev_(g_grad_enabled) { g_grad_enabled = enabled; }
GradModeGuard::~GradModeGuard() { g_grad_enabled = prev_; }

// ---------------------------------------------------------------------------

template <class T>
Tape<T>& Tape<T>::current() {
  thread_local Tape<T> tape;
  return tape;
}

template <class T>
std::int64_t Tape<T>::record(TapeNode<T> node) {
  nodes_.push_back(std::move(node));
  return static_cast<std::int64_t>(nodes_.size()) - 1;
}

template <class T>
void Tape<T>::reset() {
  nodes_.clear();
  nodes_.shrink_to_fit();
  ++generation_;
}

template class Tape<float>;
template class Tape<double>;

namespace {

template <class T>
bool on_live_tape(const Tensor<T>& t, const Tape<T>& tape) {
  return t.node() >= 0 && t.generation() == tape.generation() &&
         static_cast<std::size_t>(t.node()) < tape.size();
}

}  // namespace

template <class T>
Tensor<T> make_op_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                         const char* op, BackwardFn<T> backward, bool higher_order) {
  Tensor<T> out(std::move(shape), std::move(data), false);
  if (!grad_enabled()) return out;
  auto& tape = Tape<T>::current();
  bool needs = false;
  for (const auto& in : inputs) {
    if (!in.requires_grad()) continue;
    if (!in.is_leaf() && !on_live_tape(in, tape)) {
      throw ContractError(std::string(op) + ": input belongs to a freed graph");
    }
    needs = true;
  }
  if (!needs) return out;
  const auto id = tape.record(TapeNode<T>{op, std::move(inputs), std::move(backward), higher_order});
  out.attach_node(id, tape.generation());
  return out;
}

template Tensor<float> make_op_result(Shape, std::vector<float>, std::vector<Tensor<float>>,
                                      const char*, BackwardFn<float>, bool);
template Tensor<double> make_op_result(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                       const char*, BackwardFn<double>, bool);

// ---------------------------------------------------------------------------

namespace {

template <class T>
struct ReverseResult {
  std::vector<Tensor<T>> node_grads;
  std::unordered_map<const void*, std::pair<Tensor<T>, Tensor<T>>> leaf_grads;
};

template <class T>
Tensor<T> accumulate(const Tensor<T>& acc, const Tensor<T>& g) {
  return acc.defined() ? add(acc, g) : g;
}

// Walks the tape once in reverse append order starting at the loss node.
// `keep` marks nodes whose gradient the caller wants to read afterwards.
template <class T>
ReverseResult<T> reverse_pass(const Tensor<T>& loss, bool create_graph,
                              const std::vector<bool>& keep) {
  auto& tape = Tape<T>::current();
  ReverseResult<T> r;
  const auto top = static_cast<std::size_t>(loss.node());
  r.node_grads.resize(top + 1);
  r.node_grads[top] = Tensor<T>::full(loss.shape(), T(1));

  GradModeGuard mode(create_graph);
  for (std::size_t i = top + 1; i-- > 0;) {
    Tensor<T> g = r.node_grads[i];
    if (!g.defined()) continue;
    if (i >= keep.size() || !keep[i]) r.node_grads[i] = Tensor<T>();
    // With create_graph the backward closures append to the tape, which may
    // reallocate it, so the node is copied out first.
    const TapeNode<T> node = tape.node(static_cast<std::int64_t>(i));
    if (create_graph && !node.higher_order) {
      throw ContractError(std::string("higher-order gradients are not supported through ") +
                          node.op);
    }
    auto in_grads = node.backward(g);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const auto& in = node.inputs[j];
      if (!in.requires_grad() || !in_grads[j].defined()) continue;
      if (in.shape() != in_grads[j].shape()) {
        throw DimensionError(std::string(node.op) + ": backward produced " +
                             shape_str(in_grads[j].shape()) + " for input " + shape_str(in.shape()));
      }
      if (in.is_leaf()) {
        auto [it, fresh] = r.leaf_grads.try_emplace(in.identity(), in, in_grads[j]);
        if (!fresh) it->second.second = accumulate(it->second.second, in_grads[j]);
      } else {
        auto& slot = r.node_grads[static_cast<std::size_t>(in.node())];
        slot = accumulate(slot, in_grads[j]);
      }
    }
  }
  return r;
}

template <class T>
void check_loss(const Tensor<T>& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
}

}  // namespace

template <class T>
void backward(const Tensor<T>& loss) {
  check_loss(loss);
  auto& tape = Tape<T>::current();
  if (loss.is_leaf()) {
    if (!loss.requires_grad()) throw ContractError("loss is not connected to the tape");
    Tensor<T> leaf = loss;
    leaf.accumulate_grad(std::vector<T>{T(1)});
    return;
  }
  if (!on_live_tape(loss, tape)) {
    throw ContractError("backward called on a freed graph (reset or already differentiated)");
  }
  auto r = reverse_pass(loss, false, {});
  for (auto& [key, entry] : r.leaf_grads) {
    entry.first.accumulate_grad(entry.second.data());
  }
  tape.reset();
}

template <class T>
std::vector<Tensor<T>> grad(const Tensor<T>& loss, std::span<const Tensor<T>> wrt,
                            bool create_graph) {
  check_loss(loss);
  auto& tape = Tape<T>::current();
  std::vector<Tensor<T>> out;
  out.reserve(wrt.size());

  if (!loss.requires_grad()) {
    for (const auto& w : wrt) out.push_back(Tensor<T>::zeros(w.shape()));
    return out;
  }
  if (loss.is_leaf()) {
    for (const auto& w : wrt) {
      out.push_back(w.identity() == loss.identity() ? Tensor<T>::full(w.shape(), T(1))
                                                    : Tensor<T>::zeros(w.shape()));
    }
    return out;
  }
  if (!on_live_tape(loss, tape)) {
    throw ContractError("grad called on a freed graph (reset or already differentiated)");
  }

  std::vector<bool> keep(static_cast<std::size_t>(loss.node()) + 1, false);
  for (const auto& w : wrt) {
    if (!w.is_leaf() && on_live_tape(w, tape) && w.node() <= loss.node()) {
      keep[static_cast<std::size_t>(w.node())] = true;
    }
  }
  auto r = reverse_pass(loss, create_graph, keep);
  for (const auto& w : wrt) {
    Tensor<T> g;
    if (w.is_leaf()) {
      auto it = r.leaf_grads.find(w.identity());
      if (it != r.leaf_grads.end()) g = it->second.second;
    } else if (on_live_tape(w, tape) && w.node() <= loss.node()) {
      g = r.node_grads[static_cast<std::size_t>(w.node())];
    }
    out.push_back(g.defined() ? g : Tensor<T>::zeros(w.shape()));
  }
  if (!create_graph) tape.reset();
  return out;
}

template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template std::vector<Tensor<float>> grad(const Tensor<float>&, std::span<const Tensor<float>>,
                                         bool);
template std::vector<Tensor<double>> grad(const Tensor<double>&, std::span<const Tensor<double>>,
                                          bool);

}  // namespace fsb
