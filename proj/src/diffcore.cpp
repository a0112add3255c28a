#include "gramdiff/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "gramdiff/errors.hpp"

namespace gramdiff {

namespace kernels {

void matmul(std::span<const double> a, std::size_t m, std::size_t k,
            std::span<const double> b, std::size_t n, std::span<double> out) {
  // p-outer order keeps the inner loop contiguous; every out entry still
  // accumulates its products in increasing p.
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    std::fill(row, row + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double x = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += x * brow[j];
    }
  }
}

void softmax(std::span<const double> x, std::span<const double> noise,
             double temperature, std::span<double> out) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (noise.empty() ? x[i] : x[i] + noise[i]) / temperature;
  }
  const double peak = *std::max_element(out.begin(), out.begin() + n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(out[i] - peak);
    total += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= total;
}

void sigmoid(std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Branch on sign so exp never overflows.
    if (x[i] >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x[i]));
    } else {
      const double e = std::exp(x[i]);
      out[i] = e / (1.0 + e);
    }
  }
}

void log(std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::log(std::max(x[i], kLogFloor));
}

double bce(std::span<const double> pred, std::span<const double> target) {
  double loss = 0.0;
  for (std::size_t c = 0; c < pred.size(); ++c) {
    const double p = std::clamp(pred[c], kProbEpsilon, 1.0 - kProbEpsilon);
    const double z = target[c];
    // Terms with a zero coefficient are skipped; the sum is unchanged.
    double term = 0.0;
    if (z != 0.0) term += z * std::log(p);
    if (z != 1.0) term += (1.0 - z) * std::log(1.0 - p);
    loss -= term;
  }
  return loss;
}

void inflate_block_diagonal(std::span<const double> compact, std::size_t n,
                            std::size_t r, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t width = r * n;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < r; ++j) out[i * width + i * r + j] = compact[i * r + j];
  }
}

}  // namespace kernels

std::size_t Tensor::rows() const { return value().rows(); }
std::size_t Tensor::cols() const { return value().cols(); }
const Matrix& Tensor::value() const { return graph_->value(*this); }

Tensor Graph::push(Node node) {
  if (backward_done_) throw Error("graph is closed: backward() already ran");
  nodes_.push_back(std::move(node));
  return Tensor(this, nodes_.size() - 1);
}

const Graph::Node& Graph::node(Tensor t) const {
  if (t.graph_ != this || t.id_ >= nodes_.size()) {
    throw Error("tensor does not belong to this graph");
  }
  return nodes_[t.id_];
}

Tensor Graph::constant(Matrix value) {
  return push(Node{.op = Op::constant, .value = std::move(value)});
}

Tensor Graph::parameter(Matrix value) {
  return push(Node{.op = Op::parameter, .value = std::move(value)});
}

Tensor Graph::matmul(Tensor a, Tensor b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul shape mismatch: " + av.shape() + " * " + bv.shape());
  }
  Matrix out(av.rows(), bv.cols());
  kernels::matmul(av.values(), av.rows(), av.cols(), bv.values(), bv.cols(), out.values());
  return push(Node{.op = Op::matmul, .lhs = a.id(), .rhs = b.id(), .value = std::move(out)});
}

Tensor Graph::softmax(Tensor x, double temperature) {
  return gumbel_softmax(x, temperature, std::span<const double>{});
}

Tensor Graph::gumbel_softmax(Tensor logits, double temperature,
                             std::span<const double> noise) {
  if (!(temperature > 0.0)) {
    throw ParameterError("temperature must be positive, got " + std::to_string(temperature));
  }
  const Matrix& xv = node(logits).value;
  if (xv.size() == 0) throw DimensionError("softmax of an empty tensor");
  if (!noise.empty() && (xv.rows() != 1 || noise.size() != xv.cols())) {
    throw DimensionError("gumbel noise length " + std::to_string(noise.size()) +
                         " does not match logits " + xv.shape());
  }
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    kernels::softmax(xv.row(r), noise, temperature, out.row(r));
  }
  return push(Node{.op = Op::softmax,
                   .lhs = logits.id(),
                   .value = std::move(out),
                   .temperature = temperature});
}

Tensor Graph::gumbel_softmax(Tensor logits, double temperature, Rng& rng) {
  std::vector<double> noise(node(logits).value.size());
  fill_gumbel(rng, noise);
  return gumbel_softmax(logits, temperature, noise);
}

Tensor Graph::sigmoid(Tensor x) {
  const Matrix& xv = node(x).value;
  Matrix out(xv.rows(), xv.cols());
  kernels::sigmoid(xv.values(), out.values());
  return push(Node{.op = Op::sigmoid, .lhs = x.id(), .value = std::move(out)});
}

Tensor Graph::log(Tensor x) {
  const Matrix& xv = node(x).value;
  Matrix out(xv.rows(), xv.cols());
  kernels::log(xv.values(), out.values());
  return push(Node{.op = Op::log, .lhs = x.id(), .value = std::move(out)});
}

Tensor Graph::bce(Tensor pred, std::span<const double> target) {
  const Matrix& pv = node(pred).value;
  if (pv.size() != target.size()) {
    throw DimensionError("bce length mismatch: prediction " + pv.shape() + " vs " +
                         std::to_string(target.size()) + " targets");
  }
  Matrix out(1, 1, kernels::bce(pv.values(), target));
  return push(Node{.op = Op::bce,
                   .lhs = pred.id(),
                   .value = std::move(out),
                   .aux = std::vector<double>(target.begin(), target.end())});
}

Tensor Graph::add(Tensor a, Tensor b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) {
    throw DimensionError("add shape mismatch: " + av.shape() + " + " + bv.shape());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += bv.values()[i];
  return push(Node{.op = Op::add, .lhs = a.id(), .rhs = b.id(), .value = std::move(out)});
}

Tensor Graph::sum(Tensor x) {
  double total = 0.0;
  for (double v : node(x).value.values()) total += v;
  return push(Node{.op = Op::sum, .lhs = x.id(), .value = Matrix(1, 1, total)});
}

Tensor Graph::weighted_sum(Tensor x, const Matrix& weights) {
  const Matrix& xv = node(x).value;
  if (xv.rows() != weights.rows() || xv.cols() != weights.cols()) {
    throw DimensionError("weighted_sum shape mismatch: " + xv.shape() + " vs weights " +
                         weights.shape());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv.values()[i] * weights.values()[i];
  return push(Node{.op = Op::weighted_sum,
                   .lhs = x.id(),
                   .value = Matrix(1, 1, total),
                   .aux = std::vector<double>(weights.values().begin(), weights.values().end())});
}

Tensor Graph::inflate_block_diagonal(Tensor compact) {
  const Matrix& cv = node(compact).value;
  const std::size_t n = cv.rows();
  const std::size_t r = cv.cols();
  Matrix out(n, r * n);
  kernels::inflate_block_diagonal(cv.values(), n, r, out.values());
  return push(Node{.op = Op::inflate, .lhs = compact.id(), .value = std::move(out)});
}

const Matrix& Graph::value(Tensor t) const { return node(t).value; }

const Matrix& Graph::grad(Tensor t) const {
  const Node& n = node(t);
  if (!backward_done_) throw Error("grad() requested before backward()");
  return n.grad;
}

void Graph::backward(Tensor loss) {
  if (backward_done_) throw Error("backward() may only run once per graph");
  const Matrix& lv = node(loss).value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw DimensionError("backward() needs a scalar loss, got " + lv.shape());
  }
  backward_done_ = true;
  for (Node& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
  nodes_[loss.id()].grad(0, 0) = 1.0;

  for (std::size_t idx = loss.id() + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::constant:
      case Op::parameter:
        break;
      case Op::matmul: {
        Node& a = nodes_[n.lhs];
        Node& b = nodes_[n.rhs];
        const std::size_t m = a.value.rows();
        const std::size_t k = a.value.cols();
        const std::size_t cols = b.value.cols();
        // dA = G * B^T, dB = A^T * G
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += g(i, j) * b.value(p, j);
            a.grad(i, p) += acc;
          }
        }
        for (std::size_t p = 0; p < k; ++p) {
          for (std::size_t j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += a.value(i, p) * g(i, j);
            b.grad(p, j) += acc;
          }
        }
        break;
      }
      case Op::softmax: {
        Node& x = nodes_[n.lhs];
        for (std::size_t r = 0; r < n.value.rows(); ++r) {
          const auto y = n.value.row(r);
          const auto gr = g.row(r);
          double dot = 0.0;
          for (std::size_t i = 0; i < y.size(); ++i) dot += gr[i] * y[i];
          auto xg = x.grad.row(r);
          for (std::size_t i = 0; i < y.size(); ++i) {
            xg[i] += y[i] * (gr[i] - dot) / n.temperature;
          }
        }
        break;
      }
      case Op::log: {
        Node& x = nodes_[n.lhs];
        const auto xv = x.value.values();
        for (std::size_t i = 0; i < xv.size(); ++i) {
          if (xv[i] > kLogFloor) x.grad.values()[i] += g.values()[i] / xv[i];
        }
        break;
      }
      case Op::sigmoid: {
        Node& x = nodes_[n.lhs];
        const auto y = n.value.values();
        for (std::size_t i = 0; i < y.size(); ++i) {
          x.grad.values()[i] += g.values()[i] * y[i] * (1.0 - y[i]);
        }
        break;
      }
      case Op::bce: {
        Node& p = nodes_[n.lhs];
        const double upstream = g(0, 0);
        const auto pv = p.value.values();
        for (std::size_t c = 0; c < pv.size(); ++c) {
          // Clipped region has zero slope.
          if (pv[c] <= kProbEpsilon || pv[c] >= 1.0 - kProbEpsilon) continue;
          const double z = n.aux[c];
          p.grad.values()[c] += upstream * (-z / pv[c] + (1.0 - z) / (1.0 - pv[c]));
        }
        break;
      }
      case Op::add: {
        Node& a = nodes_[n.lhs];
        Node& b = nodes_[n.rhs];
        for (std::size_t i = 0; i < g.size(); ++i) {
          a.grad.values()[i] += g.values()[i];
          b.grad.values()[i] += g.values()[i];
        }
        break;
      }
      case Op::sum: {
        Node& x = nodes_[n.lhs];
        for (double& v : x.grad.values()) v += g(0, 0);
        break;
      }
      case Op::weighted_sum: {
        Node& x = nodes_[n.lhs];
        for (std::size_t i = 0; i < x.grad.size(); ++i) {
          x.grad.values()[i] += g(0, 0) * n.aux[i];
        }
        break;
      }
      case Op::inflate: {
        Node& c = nodes_[n.lhs];
        const std::size_t rows = c.value.rows();
        const std::size_t r = c.value.cols();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < r; ++j) c.grad(i, j) += g(i, i * r + j);
        }
        break;
      }
    }
  }
}

}  // namespace gramdiff
