#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace dualmod {

class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {
inline thread_local bool grad_mode = true;
}

inline bool grad_enabled() { return detail::grad_mode; }

// Disables graph recording on the current thread while alive.
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

struct Node;

// Dense row-major float64 tensor. Copies are shallow: they share the value
// buffer, the gradient buffer and the graph node, so a Parameter's tensor can
// flow through many ops while gradients accumulate into one place.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(shape_numel(shape_), fill)) {
    if (shape_.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (std::size_t d : shape_)
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
  }

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (shape_numel(shape_) != data_->size())
      throw DimensionError("tensor data length " + std::to_string(data_->size()) +
                           " does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }
  static Tensor zeros(Shape s) { return Tensor(std::move(s), 0.0); }
  static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_ ? data_->size() : 0; }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  std::vector<double>& values() { return *data_; }
  const std::vector<double>& values() const { return *data_; }
  std::shared_ptr<std::vector<double>> data_buffer() const { return data_; }

  double& operator[](std::size_t i) { return (*data_)[i]; }
  double operator[](std::size_t i) const { return (*data_)[i]; }

  double& operator()(std::size_t i, std::size_t j) {
    assert(shape_.size() == 2);
    return (*data_)[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(shape_.size() == 2);
    return (*data_)[i * shape_[1] + j];
  }
  double& operator()(std::size_t c, std::size_t y, std::size_t x) {
    assert(shape_.size() == 3);
    return (*data_)[(c * shape_[1] + y) * shape_[2] + x];
  }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const {
    assert(shape_.size() == 3);
    return (*data_)[(c * shape_[1] + y) * shape_[2] + x];
  }

  bool requires_grad() const { return static_cast<bool>(grad_); }

  Tensor& set_requires_grad(bool on) {
    if (on && !grad_) grad_ = std::make_shared<std::vector<double>>(size(), 0.0);
    if (!on) grad_.reset();
    return *this;
  }

  std::vector<double>& grad() {
    if (!grad_) throw ContractError("tensor has no gradient buffer");
    return *grad_;
  }
  const std::vector<double>& grad() const {
    if (!grad_) throw ContractError("tensor has no gradient buffer");
    return *grad_;
  }
  std::shared_ptr<std::vector<double>> grad_buffer() const { return grad_; }

  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
  }

  bool all_finite() const {
    for (double v : *data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::shared_ptr<Node> node;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;
};

// One recorded op. `parents` keeps the inputs (and through them the upstream
// graph) alive; `backward` adds d(out)/d(parent) * out_grad into each
// differentiable parent's grad buffer.
struct Node {
  const char* op = "";
  std::vector<Tensor> parents;
  std::shared_ptr<std::vector<double>> out_grad;
  std::function<void()> backward;
};

// Named trainable tensor. The gradient buffer persists across forward passes
// and accumulates until zero_grad(); copies alias the same buffers.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value) : name_(std::move(name)), value_(std::move(value)) {
    value_.set_requires_grad(true);
  }

  const std::string& name() const { return name_; }
  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }
  std::vector<double>& grad() { return value_.grad(); }
  const std::vector<double>& grad() const { return value_.grad(); }
  std::size_t size() const { return value_.size(); }
  void zero_grad() { value_.zero_grad(); }

 private:
  std::string name_;
  Tensor value_;
};

// Reverse-mode pass. Accumulates dLoss/dP into every reachable leaf with a
// grad buffer; intermediate grads are reset first, so calling backward twice
// on the same graph adds the same leaf gradients twice.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;
  if (!loss.node) {
    (*loss.grad_buffer())[0] += 1.0;
    return;
  }

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* n;
    std::size_t next;
  };
  std::vector<Frame> stack{{loss.node.get(), 0}};
  seen.insert(loss.node.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].node.get();
      if (p && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  for (Node* n : order) std::fill(n->out_grad->begin(), n->out_grad->end(), 0.0);
  (*loss.node->out_grad)[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward();
}

}  // namespace dualmod
