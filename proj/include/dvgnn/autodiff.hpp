#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvgnn/tensor.hpp"

namespace dvgnn {

// Named parameters with gradients of matching shape. Ordered by name so that
// every iteration over the store is deterministic.
class ParamStore {
 public:
  void add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return values_.count(name) != 0; }

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;

  void zero_grad();
  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(std::string_view prefix) const;
  std::size_t size() const { return values_.size(); }

  // Euclidean norm over the gradients of the given parameters.
  double grad_norm(std::span<const std::string> names) const;

 private:
  std::map<std::string, Tensor> values_;
  std::map<std::string, Tensor> grads_;
};

using GradientMap = std::map<std::string, Tensor>;

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// What a backward function sees: the forward output, the incoming gradient,
// input values, and gradient accumulators (null where no gradient is needed).
struct BackwardContext {
  const Tensor& output;
  const Tensor& output_grad;
  std::span<const Tensor* const> inputs;
  std::span<Tensor* const> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

// Records a forward computation and replays it in reverse. One tape per
// forward pass; nothing is reused across optimizer steps.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Differentiable leaf not bound to a parameter store.
  Var leaf(Tensor value);
  Var parameter(const ParamStore& store, const std::string& name);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string op);

  // Fills store gradients with d(loss)/d(param); parameters not reached get zeros.
  void backward(Var loss, ParamStore& store);
  // Gradients of every parameter bound on this tape, keyed by name.
  GradientMap backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  // Gradient of a node after backward(); zero tensor when unreached.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // When on, every recorded value is checked and a NumericError names the op.
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::string op;
    std::string param;  // bound parameter name, empty otherwise
    bool requires_grad = false;
  };

  void run_backward(Var loss);

  std::vector<Node> nodes_;
  bool check_finite_ = false;
};

namespace ops {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
// Softmax over the last axis of a rank-2 tensor (each row sums to 1).
Var softmax_rows(Var a);
Var sum(Var a);
Var mean(Var a);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
// Rows [begin, begin + count) of a matrix.
Var slice_rows(Var a, std::size_t begin, std::size_t count);
// Adds a 1 x cols row vector to every row of a.
Var add_row(Var a, Var row);
// Concatenate rank-2 tensors along columns / rows.
Var hstack(std::span<const Var> parts);
Var vstack(std::span<const Var> parts);

}  // namespace ops

// A deterministic scalar program over the parameters in a store.
using TapeProgram = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Compares reverse-mode gradients against central differences for every entry
// of every parameter. Relative error is |analytic - numeric| / max(1, |numeric|).
GradCheckResult grad_check(const TapeProgram& program, const ParamStore& point, double epsilon);

}  // namespace dvgnn
