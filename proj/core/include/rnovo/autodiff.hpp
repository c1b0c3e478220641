// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

// Minimal tape-based reverse-mode differentiation over dense row-major
// matrices. Each op evaluates eagerly and, when the tape is recording,
// pushes a closure that maps the output adjoint onto its inputs. backward()
// replays those closures in reverse creation order.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

namespace rnovo::ad {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

/// Query rows [q_begin, q_begin + q_rows) attend to key rows
/// [k_begin, k_begin + k_rows). Blocks may share key rows.
struct AttentionBlock {
  int q_begin = 0;
  int q_rows = 0;
  int k_begin = 0;
  int k_rows = 0;
};

template <typename T>
class Tape {
 public:
  using Backprop = std::function<void(Tape&)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  /// A value that never receives a gradient.
  Var constant(Matrix<T> value);
  /// A differentiable input whose storage lives outside the tape and must
  /// outlive it.
  Var parameter(const Matrix<T>& value);

  const Matrix<T>& value(Var v) const;
  /// Empty matrix when nothing flowed into `v`.
  const Matrix<T>& grad(Var v) const { return nodes_[v.id].grad; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates adjoints.
  void backward(Var out);

  // Used by ops.
  Var push(Matrix<T> value, bool needs_grad);
  void set_backprop(Var v, Backprop fn);
  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    auto& node = nodes_[v.id];
    if (!node.needs_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }
  Matrix<T>& mutable_grad(Var v);

 private:
  struct Node {
    Matrix<T> owned;
    const Matrix<T>* external = nullptr;
    Matrix<T> grad;
    bool needs_grad = false;
    Backprop backprop;
  };

  bool recording_;
  std::vector<Node> nodes_;
};

/// a * b
template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b);

/// x * w + bias (bias is 1 x cols, broadcast over rows)
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var bias);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

/// tanh approximation of GELU.
template <typename T>
Var gelu(Tape<T>& tape, Var x);

/// Row-wise layer normalization with affine gamma/beta (1 x cols each).
template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, T eps = T(1e-5));

/// Row r of the result is table.row(ids[r]), or zeros when ids[r] < 0.
template <typename T>
Var gather_rows(Tape<T>& tape, Var table, std::vector<int> ids);

/// Multi-head scaled dot-product attention, evaluated independently per
/// block. q, k and v carry all heads side by side in their columns. With
/// `causal`, query i of a block only sees keys j <= i + (k_rows - q_rows).
template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::vector<AttentionBlock> blocks, int heads,
              bool causal);

/// Mean token cross-entropy over rows whose mask is nonzero; 1 x 1 result.
/// Masked rows contribute nothing and receive an exactly zero gradient.
template <typename T>
Var masked_cross_entropy(Tape<T>& tape, Var logits, std::vector<int> targets,
                         std::vector<std::uint8_t> mask);

/// Row-wise log-softmax, used at inference.
template <typename T>
Matrix<T> log_softmax_rows(const Matrix<T>& logits);

}  // namespace rnovo::ad
