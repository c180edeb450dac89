#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <utility>
#include <vector>
#include <string>

#include "dvgnn/autodiff.hpp"
#include "dvgnn/random.hpp"
#include "dvgnn/tensor.hpp"

namespace testutil {

using dvgnn::ParamStore;
using dvgnn::Rng;
using dvgnn::Tensor;

inline Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor normal_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

// Loss value of a tape program, evaluated on a fresh tape.
inline double evaluate(const dvgnn::TapeProgram& program, const ParamStore& point) {
  dvgnn::Tape tape;
  return program(tape, point).value().item();
}

// Central differences computed entry by entry, independent of the library's grad_check.
inline std::map<std::string, Tensor> numeric_gradients(const dvgnn::TapeProgram& program, ParamStore point,
                                                       double h = 1e-6) {
  std::map<std::string, Tensor> out;
  for (const auto& name : point.names()) {
    Tensor g(point.value(name).shape());
    for (std::size_t k = 0; k < g.size(); ++k) {
      double keep = point.value(name)[k];
      point.value(name)[k] = keep + h;
      double up = evaluate(program, point);
      point.value(name)[k] = keep - h;
      double down = evaluate(program, point);
      point.value(name)[k] = keep;
      g[k] = (up - down) / (2.0 * h);
    }
    out[name] = std::move(g);
  }
  return out;
}

// max |analytic - numeric| / max(1, |numeric|) over every parameter entry.
inline double fd_relative_error(const dvgnn::TapeProgram& program, const ParamStore& point, double h = 1e-6) {
  dvgnn::Tape tape;
  auto analytic = tape.backward(program(tape, point));
  auto numeric = numeric_gradients(program, point, h);
  double worst = 0.0;
  for (const auto& [name, num] : numeric) {
    auto it = analytic.find(name);
    for (std::size_t k = 0; k < num.size(); ++k) {
      double a = it == analytic.end() ? 0.0 : it->second[k];
      worst = std::max(worst, std::abs(a - num[k]) / std::max(1.0, std::abs(num[k])));
    }
  }
  return worst;
}

// Contracts an op output against a fixed random weight so every entry matters.
inline dvgnn::Var weighted_sum(dvgnn::Var y, Rng& rng) {
  Tensor w = random_matrix(rng, y.value().rows(), y.value().cols());
  return dvgnn::ops::sum(dvgnn::ops::hadamard(y, y.tape().constant(std::move(w))));
}

// One random instance of a single op wrapped into a scalar loss.
using OpMaker = std::function<std::pair<dvgnn::TapeProgram, ParamStore>(Rng&)>;

inline std::vector<std::pair<const char*, OpMaker>> op_cases() {
  using dvgnn::Shape;
  using dvgnn::Tape;
  using dvgnn::TapeProgram;
  using dvgnn::Var;
  namespace ops = dvgnn::ops;
  auto unary = [](std::function<Var(Var)> op, double lo, double hi) -> OpMaker {
    return [=](Rng& rng) {
      ParamStore p;
      p.add("a", random_matrix(rng, 3, 4, lo, hi));
      std::uint64_t wseed = static_cast<std::uint64_t>(rng.index(1u << 30));
      TapeProgram f = [=](Tape& t, const ParamStore& s) {
        Rng wr(wseed);
        return weighted_sum(op(t.parameter(s, "a")), wr);
      };
      return std::make_pair(f, p);
    };
  };
  auto binary = [](std::function<Var(Var, Var)> op, Shape sa, Shape sb) -> OpMaker {
    return [=](Rng& rng) {
      ParamStore p;
      p.add("a", random_matrix(rng, sa[0], sa[1]));
      p.add("b", random_matrix(rng, sb[0], sb[1]));
      std::uint64_t wseed = static_cast<std::uint64_t>(rng.index(1u << 30));
      TapeProgram f = [=](Tape& t, const ParamStore& s) {
        Rng wr(wseed);
        return weighted_sum(op(t.parameter(s, "a"), t.parameter(s, "b")), wr);
      };
      return std::make_pair(f, p);
    };
  };
  return {
      {"matmul", binary(ops::matmul, {3, 4}, {4, 2})},
      {"add", binary(ops::add, {3, 4}, {3, 4})},
      {"sub", binary(ops::sub, {3, 4}, {3, 4})},
      {"hadamard", binary(ops::hadamard, {3, 4}, {3, 4})},
      {"add_row", binary(ops::add_row, {3, 4}, {1, 4})},
      {"scale", unary([](Var a) { return ops::scale(a, -1.7); }, -1, 1)},
      {"relu", unary(ops::relu, -1, 1)},
      {"sigmoid", unary(ops::sigmoid, -3, 3)},
      {"tanh", unary(ops::tanh, -2, 2)},
      {"exp", unary(ops::exp, -1, 1)},
      {"log", unary(ops::log, 0.5, 2)},
      {"square", unary(ops::square, -1, 1)},
      {"softmax_rows", unary(ops::softmax_rows, -2, 2)},
      {"transpose", unary(ops::transpose, -1, 1)},
      {"reshape", unary([](Var a) { return ops::reshape(a, {2, 6}); }, -1, 1)},
      {"slice_rows", unary([](Var a) { return ops::slice_rows(a, 1, 2); }, -1, 1)},
      {"sum", unary([](Var a) { return ops::reshape(ops::sum(a), {1, 1}); }, -1, 1)},
      {"mean", unary([](Var a) { return ops::reshape(ops::mean(a), {1, 1}); }, -1, 1)},
      {"hstack", binary([](Var a, Var b) { Var parts[] = {a, b, a}; return ops::hstack(parts); }, {3, 2}, {3, 4})},
      {"vstack", binary([](Var a, Var b) { Var parts[] = {b, a}; return ops::vstack(parts); }, {2, 4}, {3, 4})},
  };
}

}  // namespace testutil
