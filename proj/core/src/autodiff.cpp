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

#include "rnovo/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "rnovo/error.hpp"

namespace rnovo::ad {

template <typename T>
Var Tape<T>::push(Matrix<T> value, bool needs_grad) {
  Node node;
  node.owned = std::move(value);
  node.needs_grad = needs_grad && recording_;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::constant(Matrix<T> value) {
  return push(std::move(value), false);
}

template <typename T>
Var Tape<T>::parameter(const Matrix<T>& value) {
  Node node;
  node.external = &value;
  node.needs_grad = recording_;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
const Matrix<T>& Tape<T>::value(Var v) const {
  const auto& node = nodes_[v.id];
  return node.external ? *node.external : node.owned;
}

template <typename T>
void Tape<T>::set_backprop(Var v, Backprop fn) {
  if (nodes_[v.id].needs_grad) nodes_[v.id].backprop = std::move(fn);
}

template <typename T>
Matrix<T>& Tape<T>::mutable_grad(Var v) {
  auto& node = nodes_[v.id];
  if (node.grad.size() == 0) node.grad = Matrix<T>::Zero(value(v).rows(), value(v).cols());
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var out) {
  if (!recording_) throw UsageError("backward() on a non-recording tape");
  const auto& v = value(out);
  if (v.rows() != 1 || v.cols() != 1) throw UsageError("backward() needs a scalar output");
  if (!nodes_[out.id].needs_grad) return;
  nodes_[out.id].grad = Matrix<T>::Ones(1, 1);
  for (int i = out.id; i >= 0; --i) {
    auto& node = nodes_[i];
    if (node.backprop && node.grad.size() != 0) node.backprop(*this);
  }
}

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.cols() != bv.rows()) throw UsageError("matmul shape mismatch");
  Var out = tape.push(av * bv, tape.needs_grad(a) || tape.needs_grad(b));
  tape.set_backprop(out, [a, b, out](Tape<T>& t) {
    const auto& g = t.grad(out);
    if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
  return out;
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var bias) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(w);
  const auto& bv = tape.value(bias);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw UsageError("linear shape mismatch");
  }
  Matrix<T> y = xv * wv;
  y.rowwise() += bv.row(0);
  Var out = tape.push(std::move(y), tape.needs_grad(x) || tape.needs_grad(w) || tape.needs_grad(bias));
  tape.set_backprop(out, [x, w, bias, out](Tape<T>& t) {
    const auto& g = t.grad(out);
    if (t.needs_grad(x)) t.accumulate(x, g * t.value(w).transpose());
    if (t.needs_grad(w)) t.accumulate(w, t.value(x).transpose() * g);
    if (t.needs_grad(bias)) t.accumulate(bias, g.colwise().sum());
  });
  return out;
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw UsageError("add shape mismatch");
  Var out = tape.push(av + bv, tape.needs_grad(a) || tape.needs_grad(b));
  tape.set_backprop(out, [a, b, out](Tape<T>& t) {
    const auto& g = t.grad(out);
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
  return out;
}

template <typename T>
Var gelu(Tape<T>& tape, Var x) {
  const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  const T k = static_cast<T>(0.044715);
  const auto& xv = tape.value(x);
  Matrix<T> th = (c * (xv.array() + k * xv.array().cube())).tanh().matrix();
  Matrix<T> y = (T(0.5) * xv.array() * (T(1) + th.array())).matrix();
  Var out = tape.push(std::move(y), tape.needs_grad(x));
  if (tape.needs_grad(out)) {
    tape.set_backprop(out, [x, out, th = std::move(th), c, k](Tape<T>& t) {
      const auto& xv = t.value(x).array();
      const auto dy = T(0.5) * (T(1) + th.array()) +
                      T(0.5) * xv * (T(1) - th.array().square()) * c * (T(1) + T(3) * k * xv.square());
      t.accumulate(x, (t.grad(out).array() * dy).matrix());
    });
  }
  return out;
}

template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, T eps) {
  const auto& xv = tape.value(x);
  const auto& gv = tape.value(gamma);
  const auto& bv = tape.value(beta);
  const auto n = xv.cols();
  if (gv.cols() != n || bv.cols() != n || gv.rows() != 1 || bv.rows() != 1) {
    throw UsageError("layer_norm shape mismatch");
  }
  Matrix<T> centered = xv.colwise() - xv.rowwise().mean();
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<T>(n)) + eps).rsqrt();
  Matrix<T> xhat = centered.array().colwise() * inv_std.array();
  Matrix<T> y = (xhat.array().rowwise() * gv.row(0).array()).matrix();
  y.rowwise() += bv.row(0);
  Var out = tape.push(std::move(y), tape.needs_grad(x) || tape.needs_grad(gamma) || tape.needs_grad(beta));
  if (tape.needs_grad(out)) {
    tape.set_backprop(out, [x, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t) {
      const auto& g = t.grad(out);
      if (t.needs_grad(gamma)) t.accumulate(gamma, (g.array() * xhat.array()).colwise().sum().matrix());
      if (t.needs_grad(beta)) t.accumulate(beta, g.colwise().sum());
      if (t.needs_grad(x)) {
        const auto n = static_cast<T>(xhat.cols());
        Matrix<T> dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
        auto mean_d = dxhat.rowwise().sum() / n;
        auto mean_dx = (dxhat.array() * xhat.array()).rowwise().sum() / n;
        Matrix<T> dx = (dxhat.array().colwise() - mean_d.array() -
                        xhat.array().colwise() * mean_dx.array())
                           .colwise() *
                       inv_std.array();
        t.accumulate(x, dx);
      }
    });
  }
  return out;
}

template <typename T>
Var gather_rows(Tape<T>& tape, Var table, std::vector<int> ids) {
  const auto& tv = tape.value(table);
  Matrix<T> y = Matrix<T>::Zero(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0) continue;
    if (ids[r] >= tv.rows()) throw UsageError("gather_rows index out of range");
    y.row(static_cast<Eigen::Index>(r)) = tv.row(ids[r]);
  }
  Var out = tape.push(std::move(y), tape.needs_grad(table));
  if (tape.needs_grad(out)) {
    tape.set_backprop(out, [table, out, ids = std::move(ids)](Tape<T>& t) {
      auto& gt = t.mutable_grad(table);
      const auto& g = t.grad(out);
      for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= 0) gt.row(ids[r]) += g.row(static_cast<Eigen::Index>(r));
      }
    });
  }
  return out;
}

namespace {

template <typename T>
void softmax_rows_inplace(Matrix<T>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const T m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
}

}  // namespace

template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::vector<AttentionBlock> blocks, int heads,
              bool causal) {
  const auto& qv = tape.value(q);
  const auto& kv = tape.value(k);
  const auto& vv = tape.value(v);
  const auto d = qv.cols();
  if (heads < 1 || d % heads != 0 || kv.cols() != d || vv.cols() != d || kv.rows() != vv.rows()) {
    throw UsageError("attention shape mismatch");
  }
  const auto dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const bool grad = tape.recording() &&
                    (tape.needs_grad(q) || tape.needs_grad(k) || tape.needs_grad(v));

  Matrix<T> y = Matrix<T>::Zero(qv.rows(), d);
  // Attention probabilities per (block, head), kept for the backward pass.
  auto probs = std::make_shared<std::vector<Matrix<T>>>();
  if (grad) probs->reserve(blocks.size() * static_cast<std::size_t>(heads));

  for (const auto& b : blocks) {
    if (b.q_begin < 0 || b.k_begin < 0 || b.q_begin + b.q_rows > qv.rows() ||
        b.k_begin + b.k_rows > kv.rows() || b.k_rows < 1) {
      throw UsageError("attention block out of range");
    }
    const int shift = b.k_rows - b.q_rows;
    for (int h = 0; h < heads; ++h) {
      const auto qb = qv.block(b.q_begin, h * dh, b.q_rows, dh);
      const auto kb = kv.block(b.k_begin, h * dh, b.k_rows, dh);
      const auto vb = vv.block(b.k_begin, h * dh, b.k_rows, dh);
      Matrix<T> s = (qb * kb.transpose()) * scale;
      if (causal) {
        for (int i = 0; i < b.q_rows; ++i) {
          for (int j = std::max(0, i + shift + 1); j < b.k_rows; ++j) {
            s(i, j) = -std::numeric_limits<T>::infinity();
          }
        }
      }
      softmax_rows_inplace(s);
      y.block(b.q_begin, h * dh, b.q_rows, dh).noalias() = s * vb;
      if (grad) probs->push_back(std::move(s));
    }
  }

  Var out = tape.push(std::move(y), grad);
  if (grad) {
    tape.set_backprop(out, [q, k, v, out, blocks = std::move(blocks), heads, dh, scale, probs](Tape<T>& t) {
      const auto& g = t.grad(out);
      const auto& qv = t.value(q);
      const auto& kv = t.value(k);
      const auto& vv = t.value(v);
      Matrix<T> dq = Matrix<T>::Zero(qv.rows(), qv.cols());
      Matrix<T> dk = Matrix<T>::Zero(kv.rows(), kv.cols());
      Matrix<T> dv = Matrix<T>::Zero(vv.rows(), vv.cols());
      std::size_t idx = 0;
      for (const auto& b : blocks) {
        for (int h = 0; h < heads; ++h) {
          const auto& p = (*probs)[idx++];
          const auto gb = g.block(b.q_begin, h * dh, b.q_rows, dh);
          const auto qb = qv.block(b.q_begin, h * dh, b.q_rows, dh);
          const auto kb = kv.block(b.k_begin, h * dh, b.k_rows, dh);
          const auto vb = vv.block(b.k_begin, h * dh, b.k_rows, dh);
          dv.block(b.k_begin, h * dh, b.k_rows, dh).noalias() += p.transpose() * gb;
          Matrix<T> dp = gb * vb.transpose();
          // Softmax Jacobian: ds = p * (dp - rowsum(dp * p)).
          Eigen::Matrix<T, Eigen::Dynamic, 1> inner = (dp.array() * p.array()).rowwise().sum();
          Matrix<T> ds = (p.array() * (dp.array().colwise() - inner.array())).matrix() * scale;
          dq.block(b.q_begin, h * dh, b.q_rows, dh).noalias() += ds * kb;
          dk.block(b.k_begin, h * dh, b.k_rows, dh).noalias() += ds.transpose() * qb;
        }
      }
      t.accumulate(q, dq);
      t.accumulate(k, dk);
      t.accumulate(v, dv);
    });
  }
  return out;
}

template <typename T>
Matrix<T> log_softmax_rows(const Matrix<T>& logits) {
  Matrix<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    const T m = row.maxCoeff();
    const T lse = m + std::log((row.array() - m).exp().sum());
    out.row(r) = row.array() - lse;
  }
  return out;
}

template <typename T>
Var masked_cross_entropy(Tape<T>& tape, Var logits, std::vector<int> targets,
                         std::vector<std::uint8_t> mask) {
  const auto& lv = tape.value(logits);
  if (static_cast<std::size_t>(lv.rows()) != targets.size() || targets.size() != mask.size()) {
    throw UsageError("cross-entropy shape mismatch");
  }
  std::size_t count = 0;
  for (auto m : mask) count += m ? 1 : 0;
  if (count == 0) throw UsageError("every position is masked; the loss is undefined");

  T total = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (!mask[r]) continue;
    if (targets[r] < 0 || targets[r] >= lv.cols()) throw UsageError("target id out of range");
    const auto row = lv.row(static_cast<Eigen::Index>(r));
    const T m = row.maxCoeff();
    const T lse = m + std::log((row.array() - m).exp().sum());
    total += lse - row(targets[r]);
  }
  Matrix<T> y(1, 1);
  y(0, 0) = total / static_cast<T>(count);
  Var out = tape.push(std::move(y), tape.needs_grad(logits));
  if (tape.needs_grad(out)) {
    tape.set_backprop(out, [logits, out, count, targets = std::move(targets), mask = std::move(mask)](Tape<T>& t) {
      const auto& lv = t.value(logits);
      const T scale = t.grad(out)(0, 0) / static_cast<T>(count);
      Matrix<T> g = Matrix<T>::Zero(lv.rows(), lv.cols());
      for (std::size_t r = 0; r < targets.size(); ++r) {
        if (!mask[r]) continue;
        const auto ri = static_cast<Eigen::Index>(r);
        const auto row = lv.row(ri);
        const T m = row.maxCoeff();
        auto e = (row.array() - m).exp();
        g.row(ri) = (e / e.sum()) * scale;
        g(ri, targets[r]) -= scale;
      }
      t.accumulate(logits, g);
    });
  }
  return out;
}

#define RNOVO_INSTANTIATE(T)                                                                        \
  template class Tape<T>;                                                                           \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                       \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                                  \
  template Var add<T>(Tape<T>&, Var, Var);                                                          \
  template Var gelu<T>(Tape<T>&, Var);                                                              \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                           \
  template Var gather_rows<T>(Tape<T>&, Var, std::vector<int>);                                     \
  template Var attention<T>(Tape<T>&, Var, Var, Var, std::vector<AttentionBlock>, int, bool);       \
  template Var masked_cross_entropy<T>(Tape<T>&, Var, std::vector<int>, std::vector<std::uint8_t>); \
  template Matrix<T> log_softmax_rows<T>(const Matrix<T>&);

RNOVO_INSTANTIATE(float)
RNOVO_INSTANTIATE(double)

#undef RNOVO_INSTANTIATE

}  // namespace rnovo::ad
