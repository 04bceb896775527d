#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lfsr {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Scalar>
struct TensorImpl {
  Shape shape;
  Array<Scalar> value;
  Array<Scalar> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
  std::ptrdiff_t node_id = -1;

  Array<Scalar>& grad_buffer() {
    if (grad.size() != value.size()) grad = Array<Scalar>::Zero(value.size());
    return grad;
  }
};

template <typename Scalar>
class Tape;

/// Dense row-major tensor handle. Copies share storage; use clone() for a deep copy.
template <typename Scalar>
class Tensor {
 public:
  using Impl = TensorImpl<Scalar>;

  Tensor() : impl_(std::make_shared<Impl>()) {}

  explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : impl_(std::make_shared<Impl>()) {
    validate(shape);
    impl_->value = Array<Scalar>::Constant(lfsr::numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, Array<Scalar> values) : impl_(std::make_shared<Impl>()) {
    validate(shape);
    if (lfsr::numel(shape) != values.size())
      throw ShapeError("tensor: value count " + std::to_string(values.size()) +
                       " does not match shape " + lfsr::to_string(shape));
    impl_->shape = std::move(shape);
    impl_->value = std::move(values);
  }

  static Tensor scalar(Scalar v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return impl_->shape; }
  Index dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  Index numel() const { return impl_->value.size(); }

  Array<Scalar>& values() { return impl_->value; }
  const Array<Scalar>& values() const { return impl_->value; }
  Scalar* data() { return impl_->value.data(); }
  const Scalar* data() const { return impl_->value.data(); }

  Scalar item() const {
    if (numel() != 1) throw ShapeError("item: tensor is not a scalar " + lfsr::to_string(shape()));
    return impl_->value[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return impl_->grad.size() == impl_->value.size() && numel() > 0; }

  /// Gradient buffer; zeros when nothing has been accumulated.
  Array<Scalar> grad() const {
    if (has_grad()) return impl_->grad;
    return Array<Scalar>::Zero(numel());
  }
  void zero_grad() { impl_->grad.resize(0); }

  std::ptrdiff_t node_id() const { return impl_->node_id; }

  Tensor clone() const { return Tensor(shape(), values()); }
  Tensor detach() const { return clone(); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<Impl>& impl() const { return impl_; }

  bool all_finite() const { return impl_->value.isFinite().all(); }

 private:
  static void validate(const Shape& shape) {
    for (Index e : shape)
      if (e <= 0) throw ShapeError("tensor: extents must be positive, got " + lfsr::to_string(shape));
  }

  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations. Ops record onto the tape that
/// is active on the calling thread (see Tape::Scope) whenever one of their
/// inputs requires a gradient.
template <typename Scalar>
class Tape {
 public:
  using Impl = TensorImpl<Scalar>;
  using BackwardFn = std::function<void()>;

  struct Op {
    std::vector<std::shared_ptr<Impl>> inputs;
    std::shared_ptr<Impl> output;
    BackwardFn backward;
  };

  class Scope {
   public:
    explicit Scope(Tape& tape) : previous_(active_) { active_ = &tape; }
    ~Scope() { active_ = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  std::size_t size() const { return ops_.size(); }
  bool consumed() const { return consumed_; }

  void record(std::vector<std::shared_ptr<Impl>> inputs, const std::shared_ptr<Impl>& output,
              BackwardFn backward) {
    if (consumed_) throw std::logic_error("tape: cannot record after backward; call reset()");
    output->requires_grad = true;
    output->node_id = static_cast<std::ptrdiff_t>(ops_.size());
    ops_.push_back(Op{std::move(inputs), output, std::move(backward)});
  }

  /// Reverse sweep from a scalar loss. A loss that is not on this tape is
  /// treated as detached: no gradients flow and nothing throws.
  void backward(const Tensor<Scalar>& loss) {
    if (loss.numel() != 1)
      throw ShapeError("backward: loss must be a scalar, got " + to_string(loss.shape()));
    if (consumed_) throw std::logic_error("backward: tape already consumed; call reset()");
    consumed_ = true;
    const auto id = loss.node_id();
    if (id < 0 || static_cast<std::size_t>(id) >= ops_.size() || ops_[id].output != loss.impl())
      return;
    loss.impl()->grad_buffer().setConstant(Scalar(1));
    for (std::size_t i = static_cast<std::size_t>(id) + 1; i-- > 0;) {
      Op& op = ops_[i];
      if (op.output->grad.size() == 0) continue;
      op.backward();
    }
  }

  /// Drops every recorded op (releasing intermediates) and re-arms the tape.
  void reset() {
    for (auto& op : ops_) op.output->node_id = -1;
    ops_.clear();
    consumed_ = false;
  }

 private:
  static inline thread_local Tape* active_ = nullptr;
  std::vector<Op> ops_;
  bool consumed_ = false;
};

namespace detail {

template <typename Scalar, typename... Ts>
Tape<Scalar>* recording_tape(const Ts&... inputs) {
  Tape<Scalar>* tape = Tape<Scalar>::active();
  if (tape == nullptr) return nullptr;
  const bool any = (inputs.requires_grad() || ...);
  return any ? tape : nullptr;
}

template <typename Scalar>
Tape<Scalar>* recording_tape_list(const std::vector<Tensor<Scalar>>& inputs) {
  Tape<Scalar>* tape = Tape<Scalar>::active();
  if (tape == nullptr) return nullptr;
  for (const auto& t : inputs)
    if (t.requires_grad()) return tape;
  return nullptr;
}

}  // namespace detail

}  // namespace lfsr
