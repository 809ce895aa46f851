#pragma once

// Reverse-mode differentiation over dense Tensor2 values.
//
// A Tape records each primitive's output together with a closure that
// scatters the output gradient into its inputs. backward() walks the record
// once in reverse. Parameters are bound by reference so a forward pass never
// copies model weights.

#include "mcst/ops.hpp"
#include "mcst/random.hpp"
#include "mcst/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mcst::ad {

enum class Mode { Train, Infer };

/// Softmax weights of one attention call, kept for inspection/export.
/// Row (b * heads + h) * queries + q holds the weights over `keys` tokens.
template <typename Scalar>
struct AttentionRecord {
  std::string label;
  Index batch = 0;
  Index heads = 0;
  Index queries = 0;
  Index keys = 0;
  Tensor2<Scalar> weights;
};

template <typename Scalar>
class Tape {
 public:
  using Matrix = Tensor2<Scalar>;

  struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
  };

  using Backward = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(Mode mode = Mode::Infer, std::uint64_t seed = 0, bool record_gradients = true)
      : mode_(mode), rng_(seed), record_(record_gradients) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const { return mode_; }
  bool training() const { return mode_ == Mode::Train; }
  Rng& rng() { return rng_; }
  bool recording() const { return record_; }

  Var constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, {}, false});
    return Var{nodes_.size() - 1};
  }

  /// Binds external storage as a differentiable leaf. `value` must outlive the tape.
  Var parameter(const Matrix& value) {
    nodes_.push_back(Node{{}, &value, {}, {}, record_});
    return Var{nodes_.size() - 1};
  }

  const Matrix& value(Var v) const {
    const Node& n = node(v.id);
    return n.ref ? *n.ref : n.owned;
  }

  bool requires_grad(Var v) const { return node(v.id).requires_grad; }

  /// Gradient after backward(); exactly zero when the node did not influence the output.
  Matrix grad(Var v) const {
    const Node& n = node(v.id);
    if (n.grad.size() == 0) {
      const Matrix& val = value(v);
      return Matrix::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Primitive plumbing: append an output node.
  Var push(Matrix value, bool requires_grad, Backward backward) {
    const bool track = record_ && requires_grad;
    nodes_.push_back(Node{std::move(value), nullptr, {}, track ? std::move(backward) : Backward{}, track});
    return Var{nodes_.size() - 1};
  }

  /// Accumulation target for an input's gradient, zero-initialized on first use.
  Matrix& grad_slot(Var v) {
    Node& n = node(v.id);
    if (n.grad.size() == 0) {
      const Matrix& val = n.ref ? *n.ref : n.owned;
      n.grad = Matrix::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  const Matrix& output_grad(std::size_t self) const { return nodes_[self].grad; }

  void backward(Var output) {
    require(record_, "backward: tape was created without gradient recording");
    const Matrix& out = value(output);
    require(out.rows() == 1 && out.cols() == 1, "backward: output must be 1x1, got " + shape_of(out));
    for (auto& n : nodes_) n.grad.resize(0, 0);
    node(output.id).grad = Matrix::Ones(1, 1);
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this, i);
    }
  }

  void set_capture_attention(bool on) { capture_ = on; }
  bool capturing_attention() const { return capture_; }
  std::vector<AttentionRecord<Scalar>>& attention() { return attention_; }
  const std::vector<AttentionRecord<Scalar>>& attention() const { return attention_; }

 private:
  struct Node {
    Matrix owned;
    const Matrix* ref = nullptr;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };

  Node& node(std::size_t id) {
    require(id < nodes_.size(), "tape: unknown variable");
    return nodes_[id];
  }
  const Node& node(std::size_t id) const {
    require(id < nodes_.size(), "tape: unknown variable");
    return nodes_[id];
  }

  Mode mode_;
  Rng rng_;
  bool record_;
  bool capture_ = false;
  std::vector<Node> nodes_;
  std::vector<AttentionRecord<Scalar>> attention_;
};

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

template <typename Scalar>
using Var = typename Tape<Scalar>::Var;

template <typename Scalar>
Var<Scalar> matmul(Tape<Scalar>& t, Var<Scalar> a, Var<Scalar> b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  require(A.cols() == B.rows(), "matmul: " + shape_of(A) + " * " + shape_of(B));
  return t.push(A * B, t.requires_grad(a) || t.requires_grad(b), [a, b](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    if (tp.requires_grad(a)) tp.grad_slot(a).noalias() += g * tp.value(b).transpose();
    if (tp.requires_grad(b)) tp.grad_slot(b).noalias() += tp.value(a).transpose() * g;
  });
}

/// x * W + 1 * bias, bias is 1 x out.
template <typename Scalar>
Var<Scalar> linear(Tape<Scalar>& t, Var<Scalar> x, Var<Scalar> w, Var<Scalar> bias) {
  const auto& X = t.value(x);
  const auto& W = t.value(w);
  const auto& b = t.value(bias);
  require(X.cols() == W.rows(), "linear: input " + shape_of(X) + " vs weight " + shape_of(W));
  require(b.rows() == 1 && b.cols() == W.cols(), "linear: bias " + shape_of(b) + " vs weight " + shape_of(W));
  Tensor2<Scalar> y = X * W;
  y.rowwise() += b.row(0);
  const bool req = t.requires_grad(x) || t.requires_grad(w) || t.requires_grad(bias);
  return t.push(std::move(y), req, [x, w, bias](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    if (tp.requires_grad(x)) tp.grad_slot(x).noalias() += g * tp.value(w).transpose();
    if (tp.requires_grad(w)) tp.grad_slot(w).noalias() += tp.value(x).transpose() * g;
    if (tp.requires_grad(bias)) tp.grad_slot(bias) += g.colwise().sum();
  });
}

template <typename Scalar>
Var<Scalar> add(Tape<Scalar>& t, Var<Scalar> a, Var<Scalar> b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add: " + shape_of(A) + " + " + shape_of(B));
  return t.push(A + B, t.requires_grad(a) || t.requires_grad(b), [a, b](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    if (tp.requires_grad(a)) tp.grad_slot(a) += g;
    if (tp.requires_grad(b)) tp.grad_slot(b) += g;
  });
}

template <typename Scalar>
Var<Scalar> scale(Tape<Scalar>& t, Var<Scalar> a, Scalar s) {
  return t.push(t.value(a) * s, t.requires_grad(a), [a, s](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_slot(a) += tp.output_grad(self) * s;
  });
}

/// Adds a (block x n) tile to every consecutive block of rows of x.
template <typename Scalar>
Var<Scalar> add_tiled(Tape<Scalar>& t, Var<Scalar> x, Var<Scalar> tile) {
  const auto& X = t.value(x);
  const auto& P = t.value(tile);
  const Index block = P.rows();
  require(block > 0 && X.rows() % block == 0 && X.cols() == P.cols(),
          "add_tiled: " + shape_of(X) + " vs tile " + shape_of(P));
  Tensor2<Scalar> y = X;
  for (Index r = 0; r < X.rows(); r += block) y.middleRows(r, block) += P;
  return t.push(std::move(y), t.requires_grad(x) || t.requires_grad(tile),
                [x, tile, block](Tape<Scalar>& tp, std::size_t self) {
                  const auto& g = tp.output_grad(self);
                  if (tp.requires_grad(x)) tp.grad_slot(x) += g;
                  if (tp.requires_grad(tile)) {
                    auto& gp = tp.grad_slot(tile);
                    for (Index r = 0; r < g.rows(); r += block) gp += g.middleRows(r, block);
                  }
                });
}

template <typename Scalar>
Var<Scalar> relu(Tape<Scalar>& t, Var<Scalar> x) {
  return t.push(t.value(x).cwiseMax(Scalar(0)), t.requires_grad(x), [x](Tape<Scalar>& tp, std::size_t self) {
    const auto& X = tp.value(x);
    tp.grad_slot(x) += (X.array() > Scalar(0)).select(tp.output_grad(self), Scalar(0)).matrix();
  });
}

template <typename Scalar>
Var<Scalar> elu(Tape<Scalar>& t, Var<Scalar> x) {
  Tensor2<Scalar> y = t.value(x).unaryExpr([](Scalar v) { return mcst::elu(v); });
  return t.push(std::move(y), t.requires_grad(x), [x](Tape<Scalar>& tp, std::size_t self) {
    const auto d = tp.value(x).unaryExpr([](Scalar v) { return elu_derivative(v); });
    tp.grad_slot(x) += tp.output_grad(self).cwiseProduct(d);
  });
}

/// Inverted dropout. Identity when p == 0 or the tape is in inference mode.
template <typename Scalar>
Var<Scalar> dropout(Tape<Scalar>& t, Var<Scalar> x, double p) {
  require(p >= 0.0 && p < 1.0, "dropout: rate must be in [0, 1)");
  if (p == 0.0 || !t.training()) return x;
  const auto& X = t.value(x);
  Tensor2<Scalar> mask(X.rows(), X.cols());
  const Scalar keep_scale = Scalar(1.0 / (1.0 - p));
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform01(t.rng()) >= p ? keep_scale : Scalar(0);
  Tensor2<Scalar> y = X.cwiseProduct(mask);
  return t.push(std::move(y), t.requires_grad(x), [x, mask = std::move(mask)](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_slot(x) += tp.output_grad(self).cwiseProduct(mask);
  });
}

/// Row-wise layer normalization with affine gain/bias (each 1 x n).
template <typename Scalar>
Var<Scalar> layer_norm(Tape<Scalar>& t, Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias) {
  const auto& X = t.value(x);
  const auto& G = t.value(gain);
  const auto& B = t.value(bias);
  require(G.rows() == 1 && G.cols() == X.cols() && B.rows() == 1 && B.cols() == X.cols(),
          "layer_norm: input " + shape_of(X) + " gain " + shape_of(G) + " bias " + shape_of(B));
  const Scalar n = static_cast<Scalar>(X.cols());
  Tensor2<Scalar> xhat(X.rows(), X.cols());
  Vector<Scalar> inv_std(X.rows());
  for (Index r = 0; r < X.rows(); ++r) {
    const Scalar mean = X.row(r).sum() / n;
    const auto centered = (X.row(r).array() - mean).eval();
    const Scalar var = centered.square().sum() / n;
    inv_std(r) = Scalar(1) / std::sqrt(var + Scalar(kLayerNormEpsilon));
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  Tensor2<Scalar> y = xhat.array().rowwise() * G.row(0).array();
  y.rowwise() += B.row(0);
  const bool req = t.requires_grad(x) || t.requires_grad(gain) || t.requires_grad(bias);
  return t.push(std::move(y), req,
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<Scalar>& tp,
                                                                                       std::size_t self) {
                  const auto& g = tp.output_grad(self);
                  if (tp.requires_grad(gain)) tp.grad_slot(gain) += g.cwiseProduct(xhat).colwise().sum();
                  if (tp.requires_grad(bias)) tp.grad_slot(bias) += g.colwise().sum();
                  if (tp.requires_grad(x)) {
                    const auto& G = tp.value(gain);
                    auto& gx = tp.grad_slot(x);
                    const Scalar n = static_cast<Scalar>(g.cols());
                    for (Index r = 0; r < g.rows(); ++r) {
                      const auto dxhat = (g.row(r).array() * G.row(0).array()).eval();
                      const Scalar sum_d = dxhat.sum();
                      const Scalar sum_dx = (dxhat * xhat.row(r).array()).sum();
                      gx.row(r).array() += inv_std(r) / n * (n * dxhat - sum_d - xhat.row(r).array() * sum_dx);
                    }
                  }
                });
}

/// Scaled dot-product multi-head attention over per-sample token blocks.
///
/// q is (batch*queries) x width, k and v are (batch*keys) x width. Each head
/// attends within its own sample block over a width/heads slice and scores
/// are scaled by 1/sqrt(width/heads). Output is (batch*queries) x width.
template <typename Scalar>
Var<Scalar> attention(Tape<Scalar>& t, Var<Scalar> q, Var<Scalar> k, Var<Scalar> v, Index heads, Index queries,
                      Index keys, const std::string& label = {}) {
  const auto& Q = t.value(q);
  const auto& K = t.value(k);
  const auto& V = t.value(v);
  const Index width = Q.cols();
  require(heads > 0 && width % heads == 0, "attention: width " + std::to_string(width) + " not divisible by heads");
  require(K.cols() == width && V.cols() == width, "attention: q/k/v widths differ");
  require(queries > 0 && keys > 0 && Q.rows() % queries == 0, "attention: query rows not a multiple of block");
  const Index batch = Q.rows() / queries;
  require(K.rows() == batch * keys && V.rows() == batch * keys, "attention: key/value rows do not match batch");
  const Index dh = width / heads;
  const Scalar s = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  Tensor2<Scalar> weights(batch * heads * queries, keys);
  Tensor2<Scalar> out(Q.rows(), width);
  for (Index b = 0; b < batch; ++b) {
    for (Index h = 0; h < heads; ++h) {
      const auto Qh = Q.block(b * queries, h * dh, queries, dh);
      const auto Kh = K.block(b * keys, h * dh, keys, dh);
      const auto Vh = V.block(b * keys, h * dh, keys, dh);
      Tensor2<Scalar> scores = (Qh * Kh.transpose()) * s;
      auto P = weights.middleRows((b * heads + h) * queries, queries);
      P = softmax_rows(scores);
      out.block(b * queries, h * dh, queries, dh).noalias() = P * Vh;
    }
  }
  if (t.capturing_attention()) t.attention().push_back({label, batch, heads, queries, keys, weights});

  const bool req = t.requires_grad(q) || t.requires_grad(k) || t.requires_grad(v);
  return t.push(std::move(out), req,
                [=, weights = std::move(weights)](Tape<Scalar>& tp, std::size_t self) {
                  const auto& g = tp.output_grad(self);
                  const auto& Qv = tp.value(q);
                  const auto& Kv = tp.value(k);
                  const auto& Vv = tp.value(v);
                  const bool gq = tp.requires_grad(q), gk = tp.requires_grad(k), gv = tp.requires_grad(v);
                  Tensor2<Scalar>* dq = gq ? &tp.grad_slot(q) : nullptr;
                  Tensor2<Scalar>* dk = gk ? &tp.grad_slot(k) : nullptr;
                  Tensor2<Scalar>* dv = gv ? &tp.grad_slot(v) : nullptr;
                  for (Index b = 0; b < batch; ++b) {
                    for (Index h = 0; h < heads; ++h) {
                      const auto P = weights.middleRows((b * heads + h) * queries, queries);
                      const auto dO = g.block(b * queries, h * dh, queries, dh);
                      const auto Vh = Vv.block(b * keys, h * dh, keys, dh);
                      if (dv) dv->block(b * keys, h * dh, keys, dh).noalias() += P.transpose() * dO;
                      if (!dq && !dk) continue;
                      const Tensor2<Scalar> dP = dO * Vh.transpose();
                      Tensor2<Scalar> dS = P.cwiseProduct(dP);
                      const Vector<Scalar> row_dot = dS.rowwise().sum();
                      dS -= (P.array().colwise() * row_dot.array()).matrix();
                      dS *= s;
                      if (dq) dq->block(b * queries, h * dh, queries, dh).noalias() +=
                          dS * Kv.block(b * keys, h * dh, keys, dh);
                      if (dk) dk->block(b * keys, h * dh, keys, dh).noalias() +=
                          dS.transpose() * Qv.block(b * queries, h * dh, queries, dh);
                    }
                  }
                });
}

/// Stacks per-sample token blocks along the token axis:
/// sample b gets parts[0]'s block, then parts[1]'s block, ...
template <typename Scalar>
Var<Scalar> concat_token_blocks(Tape<Scalar>& t, const std::vector<Var<Scalar>>& parts, Index batch) {
  require(!parts.empty() && batch > 0, "concat_token_blocks: no inputs");
  const Index width = t.value(parts.front()).cols();
  std::vector<Index> block(parts.size());
  Index total = 0;
  bool req = false;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& P = t.value(parts[i]);
    require(P.cols() == width && P.rows() % batch == 0, "concat_token_blocks: inconsistent part " + shape_of(P));
    block[i] = P.rows() / batch;
    total += block[i];
    req = req || t.requires_grad(parts[i]);
  }
  if (parts.size() == 1) return parts.front();
  Tensor2<Scalar> out(batch * total, width);
  for (Index b = 0; b < batch; ++b) {
    Index row = b * total;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      out.middleRows(row, block[i]) = t.value(parts[i]).middleRows(b * block[i], block[i]);
      row += block[i];
    }
  }
  return t.push(std::move(out), req, [parts, block, batch, total](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    for (Index b = 0; b < batch; ++b) {
      Index row = b * total;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (tp.requires_grad(parts[i])) tp.grad_slot(parts[i]).middleRows(b * block[i], block[i]) += g.middleRows(row, block[i]);
        row += block[i];
      }
    }
  });
}

/// Mean over each consecutive block of rows: (batch*block) x n -> batch x n.
template <typename Scalar>
Var<Scalar> block_mean(Tape<Scalar>& t, Var<Scalar> x, Index block) {
  const auto& X = t.value(x);
  require(block > 0 && X.rows() % block == 0, "block_mean: rows not a multiple of block");
  const Index batch = X.rows() / block;
  Tensor2<Scalar> out(batch, X.cols());
  for (Index b = 0; b < batch; ++b) out.row(b) = X.middleRows(b * block, block).colwise().mean();
  return t.push(std::move(out), t.requires_grad(x), [x, block, batch](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    auto& gx = tp.grad_slot(x);
    const Scalar w = Scalar(1) / static_cast<Scalar>(block);
    for (Index b = 0; b < batch; ++b) gx.middleRows(b * block, block).rowwise() += g.row(b) * w;
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(Tape<Scalar>& t, Var<Scalar> a, Var<Scalar> b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  require(A.rows() == B.rows(), "concat_cols: " + shape_of(A) + " | " + shape_of(B));
  Tensor2<Scalar> out(A.rows(), A.cols() + B.cols());
  out << A, B;
  const Index split = A.cols();
  return t.push(std::move(out), t.requires_grad(a) || t.requires_grad(b), [a, b, split](Tape<Scalar>& tp, std::size_t self) {
    const auto& g = tp.output_grad(self);
    if (tp.requires_grad(a)) tp.grad_slot(a) += g.leftCols(split);
    if (tp.requires_grad(b)) tp.grad_slot(b) += g.rightCols(g.cols() - split);
  });
}

template <typename Scalar>
Var<Scalar> sum_all(Tape<Scalar>& t, Var<Scalar> x) {
  Tensor2<Scalar> out(1, 1);
  out(0, 0) = t.value(x).sum();
  return t.push(std::move(out), t.requires_grad(x), [x](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_slot(x).array() += tp.output_grad(self)(0, 0);
  });
}

enum class LossKind { MeanSquared, MeanAbsolute, MeanSquaredWithContactBce };

/// Mean per-element loss between pred and a constant target.
/// For MeanSquaredWithContactBce, columns [bce_begin, bce_begin + bce_count)
/// use binary cross-entropy on logits; every other column uses squared error.
template <typename Scalar>
Var<Scalar> regression_loss(Tape<Scalar>& t, Var<Scalar> pred, const Tensor2<Scalar>& target, LossKind kind,
                            Index bce_begin = 0, Index bce_count = 0) {
  const auto& P = t.value(pred);
  require(P.rows() == target.rows() && P.cols() == target.cols(),
          "regression_loss: prediction " + shape_of(P) + " vs target " + shape_of(target));
  require(bce_begin >= 0 && bce_count >= 0 && bce_begin + bce_count <= P.cols(), "regression_loss: bad BCE range");
  const Scalar count = static_cast<Scalar>(P.size());
  Tensor2<Scalar> dloss(P.rows(), P.cols());
  Scalar total = 0;
  for (Index r = 0; r < P.rows(); ++r) {
    for (Index c = 0; c < P.cols(); ++c) {
      const Scalar x = P(r, c);
      const Scalar y = target(r, c);
      const Scalar diff = x - y;
      if (kind == LossKind::MeanAbsolute) {
        total += std::abs(diff);
        dloss(r, c) = diff > 0 ? Scalar(1) : (diff < 0 ? Scalar(-1) : Scalar(0));
      } else if (kind == LossKind::MeanSquaredWithContactBce && c >= bce_begin && c < bce_begin + bce_count) {
        total += std::max(x, Scalar(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
        dloss(r, c) = mcst::sigmoid(x) - y;
      } else {
        total += diff * diff;
        dloss(r, c) = Scalar(2) * diff;
      }
    }
  }
  Tensor2<Scalar> out(1, 1);
  out(0, 0) = total / count;
  dloss /= count;
  return t.push(std::move(out), t.requires_grad(pred), [pred, dloss = std::move(dloss)](Tape<Scalar>& tp, std::size_t self) {
    tp.grad_slot(pred) += dloss * tp.output_grad(self)(0, 0);
  });
}

/// Mean absolute value over every entry of every listed variable.
template <typename Scalar>
Var<Scalar> l1_mean(Tape<Scalar>& t, std::span<const Var<Scalar>> vars) {
  Scalar total = 0;
  Index count = 0;
  bool req = false;
  for (const auto& v : vars) {
    total += t.value(v).cwiseAbs().sum();
    count += t.value(v).size();
    req = req || t.requires_grad(v);
  }
  require(count > 0, "l1_mean: no entries");
  Tensor2<Scalar> out(1, 1);
  out(0, 0) = total / static_cast<Scalar>(count);
  std::vector<Var<Scalar>> inputs(vars.begin(), vars.end());
  return t.push(std::move(out), req, [inputs = std::move(inputs), count](Tape<Scalar>& tp, std::size_t self) {
    const Scalar g = tp.output_grad(self)(0, 0) / static_cast<Scalar>(count);
    for (const auto& v : inputs) {
      if (!tp.requires_grad(v)) continue;
      tp.grad_slot(v) += tp.value(v).unaryExpr([g](Scalar w) { return w > 0 ? g : (w < 0 ? -g : Scalar(0)); });
    }
  });
}

}  // namespace mcst::ad
