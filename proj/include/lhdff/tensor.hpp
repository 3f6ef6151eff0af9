#pragma once

// Dense row-major f64 tensors with a reverse-mode tape.
//
// A Tensor is a cheap handle to shared storage. Ops in ops.hpp produce new
// tensors and, when any input requires a gradient and grad mode is on,
// append a node to the calling thread's Tape. Tape::backward walks the
// recorded nodes once in reverse order and accumulates into `grad`.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lhdff {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorStorage {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  // Lazily sized gradient buffer.
  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(storage_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the end.
  std::size_t dim(int axis) const;
  std::size_t numel() const { return storage_->value.size(); }

  std::span<const double> data() const { return storage_->value; }
  // Direct mutation is reserved for parameters, buffers and optimizers.
  std::span<double> mutable_data() { return storage_->value; }

  bool requires_grad() const { return storage_ && storage_->requires_grad; }
  void set_requires_grad(bool flag) { storage_->requires_grad = flag; }
  bool has_grad() const { return !storage_->grad.empty(); }
  std::span<const double> grad() const { return storage_->grad; }
  std::span<double> mutable_grad() { return storage_->grad_buffer(); }
  void zero_grad() { storage_->grad.clear(); }

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  // Deep copy without tape history.
  Tensor detach() const;

  const std::shared_ptr<TensorStorage>& storage() const { return storage_; }
  const TensorStorage* id() const { return storage_.get(); }

 private:
  std::shared_ptr<TensorStorage> storage_;
};

// Per-thread record of differentiable ops.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::vector<std::shared_ptr<TensorStorage>> inputs;
    std::shared_ptr<TensorStorage> output;
    BackwardFn backward;
  };

  static Tape& active();

  // True when grad mode is on and one of `inputs` needs a gradient.
  static bool should_record(std::initializer_list<const Tensor*> inputs);

  // Marks `output` as requiring grad and appends the node.
  void record(std::vector<std::shared_ptr<TensorStorage>> inputs, Tensor& output, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded node in reverse.
  // Consumes the tape.
  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

bool grad_enabled();

// Disables recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

void backward(const Tensor& loss);

}  // namespace lhdff
