#include "dvgnn/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dvgnn/errors.hpp"

namespace dvgnn {

void ParamStore::add(const std::string& name, Tensor init) {
  if (values_.count(name)) throw ContractError("parameter already registered: " + name);
  grads_[name] = Tensor(init.shape());
  values_[name] = std::move(init);
}

Tensor& ParamStore::value(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

Tensor& ParamStore::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::grad(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, g] : grads_) g = Tensor(values_.at(name).shape());
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& kv : values_) out.push_back(kv.first);
  return out;
}

std::vector<std::string> ParamStore::names_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& kv : values_)
    if (std::string_view(kv.first).substr(0, prefix.size()) == prefix) out.push_back(kv.first);
  return out;
}

double ParamStore::grad_norm(std::span<const std::string> names) const {
  double acc = 0.0;
  for (const auto& n : names)
    for (double g : grad(n).values()) acc += g * g;
  return std::sqrt(acc);
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  return record(std::move(value), {}, nullptr, "constant");
}

Var Tape::leaf(Tensor value) {
  Var v = record(std::move(value), {}, nullptr, "leaf");
  nodes_[v.id()].requires_grad = true;
  return v;
}

Var Tape::parameter(const ParamStore& store, const std::string& name) {
  Var v = record(store.value(name), {}, nullptr, "param:" + name);
  nodes_[v.id()].requires_grad = true;
  nodes_[v.id()].param = name;
  return v;
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, std::string op) {
  if (check_finite_ && !value.all_finite())
    throw NumericError("non-finite value produced by op '" + op + "'");
  Node node;
  node.value = std::move(value);
  node.op = std::move(op);
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractError("op '" + node.op + "' mixes Vars from different tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::run_backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss recorded on another tape");
  const Tensor& lv = nodes_[loss.id()].value;
  if (lv.size() != 1 || lv.rank() > 2)
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(lv.shape()));
  for (auto& n : nodes_) n.grad = n.requires_grad ? Tensor(n.value.shape()) : Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad[0] = 1.0;

  std::vector<const Tensor*> in_vals;
  std::vector<Tensor*> in_grads;
  for (std::size_t k = loss.id() + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.requires_grad || !n.backward) continue;
    in_vals.clear();
    in_grads.clear();
    for (std::size_t id : n.inputs) {
      in_vals.push_back(&nodes_[id].value);
      in_grads.push_back(nodes_[id].requires_grad ? &nodes_[id].grad : nullptr);
    }
    BackwardContext ctx{n.value, n.grad, in_vals, in_grads};
    n.backward(ctx);
    if (check_finite_) {
      for (Tensor* g : in_grads)
        if (g && !g->all_finite())
          throw NumericError("non-finite gradient from op '" + n.op + "'");
    }
  }
}

void Tape::backward(Var loss, ParamStore& store) {
  run_backward(loss);
  store.zero_grad();
  for (const auto& n : nodes_) {
    if (n.param.empty()) continue;
    Tensor& g = store.grad(n.param);
    if (g.shape() != n.grad.shape())
      throw DimensionError("backward: gradient shape " + shape_str(n.grad.shape()) +
                           " does not match parameter " + n.param);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
  }
}

GradientMap Tape::backward(Var loss) {
  run_backward(loss);
  GradientMap out;
  for (const auto& n : nodes_) {
    if (n.param.empty()) continue;
    auto [it, fresh] = out.try_emplace(n.param, n.grad);
    if (!fresh)
      for (std::size_t k = 0; k < n.grad.size(); ++k) it->second[k] += n.grad[k];
  }
  return out;
}

const Tensor& Tape::grad(Var v) const {
  return nodes_[v.id()].grad;
}

namespace ops {
namespace {

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected matrix, got " + shape_str(a.shape()));
}

template <class F, class D>
Var unary(Var a, const char* name, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = f(x[k]);
  return a.tape().record(std::move(y), {a}, [dfdx](const BackwardContext& c) {
    if (!c.input_grads[0]) return;
    const Tensor& x = *c.inputs[0];
    Tensor& gx = *c.input_grads[0];
    for (std::size_t k = 0; k < x.size(); ++k) gx[k] += c.output_grad[k] * dfdx(x[k], c.output[k]);
  }, name);
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
    throw DimensionError("matmul: " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  return a.tape().record(dvgnn::matmul(A, B), {a, b}, [](const BackwardContext& c) {
    const Tensor& A = *c.inputs[0];
    const Tensor& B = *c.inputs[1];
    const Tensor& G = c.output_grad;
    std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (Tensor* gA = c.input_grads[0]) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double g = G(i, j);
          if (g == 0.0) continue;
          for (std::size_t t = 0; t < k; ++t) (*gA)(i, t) += g * B(t, j);
        }
    }
    if (Tensor* gB = c.input_grads[1]) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
          double av = A(i, t);
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) (*gB)(t, j) += av * G(i, j);
        }
    }
  }, "matmul");
}

Var add(Var a, Var b) {
  require_same("add", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += b.value()[k];
  return a.tape().record(std::move(y), {a, b}, [](const BackwardContext& c) {
    for (Tensor* g : c.input_grads)
      if (g)
        for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] += c.output_grad[k];
  }, "add");
}

Var sub(Var a, Var b) {
  require_same("sub", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] -= b.value()[k];
  return a.tape().record(std::move(y), {a, b}, [](const BackwardContext& c) {
    if (Tensor* g = c.input_grads[0])
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] += c.output_grad[k];
    if (Tensor* g = c.input_grads[1])
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] -= c.output_grad[k];
  }, "sub");
}

Var hadamard(Var a, Var b) {
  require_same("hadamard", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] *= b.value()[k];
  return a.tape().record(std::move(y), {a, b}, [](const BackwardContext& c) {
    if (Tensor* g = c.input_grads[0])
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] += c.output_grad[k] * (*c.inputs[1])[k];
    if (Tensor* g = c.input_grads[1])
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] += c.output_grad[k] * (*c.inputs[0])[k];
  }, "hadamard");
}

Var scale(Var a, double factor) {
  return unary(a, "scale", [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid",
               [](double x) {
                 if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                 double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  require_matrix("softmax_rows", x);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = x(r, 0);
    for (std::size_t c = 1; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += (y(r, c) = std::exp(x(r, c) - mx));
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= s;
  }
  return a.tape().record(std::move(y), {a}, [](const BackwardContext& c) {
    Tensor* g = c.input_grads[0];
    if (!g) return;
    const Tensor& y = c.output;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t k = 0; k < y.cols(); ++k) dot += c.output_grad(r, k) * y(r, k);
      for (std::size_t k = 0; k < y.cols(); ++k) (*g)(r, k) += y(r, k) * (c.output_grad(r, k) - dot);
    }
  }, "softmax_rows");
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().record(Tensor::scalar(s), {a}, [](const BackwardContext& c) {
    if (Tensor* g = c.input_grads[0])
      for (double& v : g->values()) v += c.output_grad[0];
  }, "sum");
}

Var mean(Var a) {
  std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean: empty tensor");
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().record(Tensor::scalar(s / n), {a}, [n](const BackwardContext& c) {
    if (Tensor* g = c.input_grads[0])
      for (double& v : g->values()) v += c.output_grad[0] / n;
  }, "mean");
}

Var transpose(Var a) {
  require_matrix("transpose", a.value());
  return a.tape().record(dvgnn::transpose(a.value()), {a}, [](const BackwardContext& c) {
    Tensor* g = c.input_grads[0];
    if (!g) return;
    for (std::size_t r = 0; r < g->rows(); ++r)
      for (std::size_t k = 0; k < g->cols(); ++k) (*g)(r, k) += c.output_grad(k, r);
  }, "transpose");
}

Var reshape(Var a, Shape shape) {
  if (shape_size(shape) != a.value().size())
    throw DimensionError("reshape: " + shape_str(a.value().shape()) + " to " + shape_str(shape));
  return a.tape().record(a.value().reshaped(std::move(shape)), {a}, [](const BackwardContext& c) {
    if (Tensor* g = c.input_grads[0])
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] += c.output_grad[k];
  }, "reshape");
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  require_matrix("slice_rows", x);
  if (begin + count > x.rows())
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") of " + shape_str(x.shape()));
  std::size_t w = x.cols();
  std::vector<double> data(x.data().begin() + begin * w, x.data().begin() + (begin + count) * w);
  return a.tape().record(Tensor({count, w}, std::move(data)), {a}, [begin](const BackwardContext& c) {
    if (Tensor* g = c.input_grads[0]) {
      std::size_t off = begin * c.output.cols();
      for (std::size_t k = 0; k < c.output.size(); ++k) (*g)[off + k] += c.output_grad[k];
    }
  }, "slice_rows");
}

Var add_row(Var a, Var row) {
  const Tensor& x = a.value();
  const Tensor& b = row.value();
  require_matrix("add_row", x);
  if (b.rank() != 2 || b.rows() != 1 || b.cols() != x.cols())
    throw DimensionError("add_row: " + shape_str(x.shape()) + " + row " + shape_str(b.shape()));
  Tensor y = x;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t k = 0; k < y.cols(); ++k) y(r, k) += b(0, k);
  return a.tape().record(std::move(y), {a, row}, [](const BackwardContext& c) {
    if (Tensor* g = c.input_grads[0])
      for (std::size_t k = 0; k < g->size(); ++k) (*g)[k] += c.output_grad[k];
    if (Tensor* g = c.input_grads[1])
      for (std::size_t r = 0; r < c.output.rows(); ++r)
        for (std::size_t k = 0; k < c.output.cols(); ++k) (*g)(0, k) += c.output_grad(r, k);
  }, "add_row");
}

Var hstack(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("hstack: no inputs");
  std::size_t rows = parts[0].value().rows(), cols = 0;
  for (const Var& p : parts) {
    require_matrix("hstack", p.value());
    if (p.value().rows() != rows)
      throw DimensionError("hstack: " + shape_str(parts[0].value().shape()) + " vs " + shape_str(p.value().shape()));
    cols += p.value().cols();
  }
  Tensor y = Tensor::matrix(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < x.cols(); ++k) y(r, off + k) = x(r, k);
    off += x.cols();
  }
  return parts[0].tape().record(std::move(y), {parts.begin(), parts.end()}, [](const BackwardContext& c) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < c.inputs.size(); ++p) {
      std::size_t w = c.inputs[p]->cols();
      if (Tensor* g = c.input_grads[p])
        for (std::size_t r = 0; r < g->rows(); ++r)
          for (std::size_t k = 0; k < w; ++k) (*g)(r, k) += c.output_grad(r, off + k);
      off += w;
    }
  }, "hstack");
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("vstack: no inputs");
  std::size_t cols = parts[0].value().cols(), rows = 0;
  for (const Var& p : parts) {
    require_matrix("vstack", p.value());
    if (p.value().cols() != cols)
      throw DimensionError("vstack: " + shape_str(parts[0].value().shape()) + " vs " + shape_str(p.value().shape()));
    rows += p.value().rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const Var& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return parts[0].tape().record(Tensor({rows, cols}, std::move(data)), {parts.begin(), parts.end()},
                                [](const BackwardContext& c) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < c.inputs.size(); ++p) {
      std::size_t len = c.inputs[p]->size();
      if (Tensor* g = c.input_grads[p])
        for (std::size_t k = 0; k < len; ++k) (*g)[k] += c.output_grad[off + k];
      off += len;
    }
  }, "vstack");
}

}  // namespace ops

GradCheckResult grad_check(const TapeProgram& program, const ParamStore& point, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractError("grad_check: epsilon must be positive");
  ParamStore work = point;
  GradientMap analytic;
  {
    Tape tape;
    tape.set_check_finite(true);
    Var loss = program(tape, work);
    analytic = tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape;
    tape.set_check_finite(true);
    return program(tape, work).value().item();
  };
  GradCheckResult res;
  for (const auto& name : work.names()) {
    Tensor& w = work.value(name);
    for (std::size_t k = 0; k < w.size(); ++k) {
      double orig = w[k];
      w[k] = orig + epsilon;
      double up = eval();
      w[k] = orig - epsilon;
      double dn = eval();
      w[k] = orig;
      double numeric = (up - dn) / (2.0 * epsilon);
      auto it = analytic.find(name);
      double a = it == analytic.end() ? 0.0 : it->second[k];
      double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      if (res.worst_param.empty() || err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = name;
        res.worst_index = k;
      }
    }
  }
  return res;
}

}  // namespace dvgnn
