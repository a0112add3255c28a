#pragma once

// Minimal reverse-mode differentiation over small dense matrices.
//
// A Graph records every operation applied to its tensors. Calling backward()
// on a scalar result walks the records in reverse and accumulates gradients
// into every node. Graphs are single-use: build, backward once, read grads.

#include <cstddef>
#include <span>
#include <vector>

#include "gramdiff/matrix.hpp"
#include "gramdiff/random.hpp"

namespace gramdiff {

// Probabilities are clipped to [kProbEpsilon, 1 - kProbEpsilon] inside logs.
inline constexpr double kProbEpsilon = 1e-7;
// Floor applied before taking logs of rule probabilities.
inline constexpr double kLogFloor = 1e-300;

// Raw forward kernels. The graph ops and the graph-free branch evaluator in
// training both call these, so the two paths produce bit-identical values.
namespace kernels {

// out[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::size_t m, std::size_t k,
            std::span<const double> b, std::size_t n, std::span<double> out);

// out = softmax((x + noise) / temperature); `noise` may be empty.
void softmax(std::span<const double> x, std::span<const double> noise,
             double temperature, std::span<double> out);

void sigmoid(std::span<const double> x, std::span<double> out);

// out = log(max(x, kLogFloor))
void log(std::span<const double> x, std::span<double> out);

// -sum_c [z_c log p_c + (1 - z_c) log(1 - p_c)] with p clipped.
double bce(std::span<const double> pred, std::span<const double> target);

// N x R compact rule weights -> N x (R*N) block-diagonal matrix.
void inflate_block_diagonal(std::span<const double> compact, std::size_t n,
                            std::size_t r, std::span<double> out);

}  // namespace kernels

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
class Tensor {
 public:
  Tensor() = default;

  std::size_t id() const { return id_; }
  std::size_t rows() const;
  std::size_t cols() const;
  const Matrix& value() const;
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Tensor(const Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that never propagates gradient further.
  Tensor constant(Matrix value);
  // Leaf whose gradient is read back after backward().
  Tensor parameter(Matrix value);

  Tensor matmul(Tensor a, Tensor b);
  // Row-wise softmax of x / temperature.
  Tensor softmax(Tensor x, double temperature = 1.0);
  // softmax((logits + noise) / temperature). Gradients flow through the soft
  // sample; there is no straight-through estimator.
  Tensor gumbel_softmax(Tensor logits, double temperature,
                        std::span<const double> noise);
  // Same, drawing the noise from `rng`.
  Tensor gumbel_softmax(Tensor logits, double temperature, Rng& rng);
  Tensor sigmoid(Tensor x);
  // Elementwise log with inputs floored at kLogFloor (zero slope below it).
  Tensor log(Tensor x);
  // Scalar binary cross entropy of a 1 x T prediction against T targets.
  Tensor bce(Tensor pred, std::span<const double> target);
  Tensor add(Tensor a, Tensor b);
  Tensor sum(Tensor x);
  // sum_ij x_ij * weights_ij, a scalar.
  Tensor weighted_sum(Tensor x, const Matrix& weights);
  // N x R -> N x (R*N), row i of the input placed in columns [i*R, i*R+R).
  Tensor inflate_block_diagonal(Tensor compact);

  // Reverse sweep from a 1 x 1 loss. May be called once per graph.
  void backward(Tensor loss);

  const Matrix& value(Tensor t) const;
  // Gradient of the loss passed to backward() with respect to `t`.
  const Matrix& grad(Tensor t) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    constant,
    parameter,
    matmul,
    softmax,
    sigmoid,
    log,
    bce,
    add,
    sum,
    weighted_sum,
    inflate,
  };

  struct Node {
    Op op;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    Matrix value;
    Matrix grad;
    // Op-specific saved data: bce targets, weighted_sum weights.
    std::vector<double> aux;
    double temperature = 1.0;
  };

  Tensor push(Node node);
  const Node& node(Tensor t) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace gramdiff
