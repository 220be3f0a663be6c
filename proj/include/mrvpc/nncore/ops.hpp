#pragma once

// Forward/backward pairs for the primitives the captioning network is built
// from. Activations are row-major matrices with one row per token; batches are
// packed (sequences stacked back to back) and described by SegmentLayout.
// Backward functions accumulate into parameter gradients.

#include "mrvpc/nncore/param_store.hpp"
#include "mrvpc/nncore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mrvpc::nn {

struct LinearIds {
  std::size_t w = 0, b = 0;
};
struct NormIds {
  std::size_t gain = 0, bias = 0;
};
/// Attention projections are bias-free (d x d weights only).
struct AttnIds {
  std::size_t q = 0, k = 0, v = 0, o = 0;
};

/// Packed sequences: sequence s occupies rows [offset[s], offset[s] + length[s]).
struct SegmentLayout {
  std::vector<int> offset;
  std::vector<int> length;

  static SegmentLayout from_lengths(const std::vector<int>& lengths) {
    SegmentLayout lay;
    int at = 0;
    for (int len : lengths) {
      lay.offset.push_back(at);
      lay.length.push_back(len);
      at += len;
    }
    return lay;
  }
  std::size_t count() const { return length.size(); }
  int total() const { return length.empty() ? 0 : offset.back() + length.back(); }
};

// ---------------------------------------------------------------- linear

template <typename T>
Mat<T> linear_forward(const ParamStore<T>& ps, LinearIds ids, const Mat<T>& x) {
  const auto& w = ps[ids.w].value;
  if (static_cast<std::size_t>(x.cols()) != w.rows())
    throw std::invalid_argument("linear: input width " + std::to_string(x.cols()) +
                                " does not match weight " + shape_string(w.shape));
  Mat<T> y(x.rows(), static_cast<Eigen::Index>(w.cols()));
  y.noalias() = x * w.mat();
  y.rowwise() += ps[ids.b].value.mat().row(0);
  return y;
}

/// Accumulates weight/bias grads; returns dL/dx.
template <typename T>
Mat<T> linear_backward(ParamStore<T>& ps, LinearIds ids, const Mat<T>& x, const Mat<T>& dy) {
  ps[ids.w].grad.mat().noalias() += x.transpose() * dy;
  ps[ids.b].grad.mat().row(0) += dy.colwise().sum();
  Mat<T> dx(dy.rows(), x.cols());
  dx.noalias() = dy * ps[ids.w].value.mat().transpose();
  return dx;
}

// ------------------------------------------------------------ layer norm

template <typename T>
struct LayerNormCache {
  Mat<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
Mat<T> layer_norm_forward(const ParamStore<T>& ps, NormIds ids, const Mat<T>& x,
                          LayerNormCache<T>* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Mat<T> xhat(n, d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean);
    const T var = centered.square().mean();
    inv(r) = T(1) / std::sqrt(var + T(kLayerNormEps));
    xhat.row(r) = centered * inv(r);
  }
  Mat<T> y = xhat;
  y.array().rowwise() *= ps[ids.gain].value.mat().row(0).array();
  y.rowwise() += ps[ids.bias].value.mat().row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(ParamStore<T>& ps, NormIds ids, const LayerNormCache<T>& cache,
                           const Mat<T>& dy) {
  const RowVec<T> gain = ps[ids.gain].value.mat().row(0);
  ps[ids.gain].grad.mat().row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  ps[ids.bias].grad.mat().row(0) += dy.colwise().sum();
  Mat<T> dxhat = dy;
  dxhat.array().rowwise() *= gain.array();
  const T d = static_cast<T>(dy.cols());
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const T sum = dxhat.row(r).sum();
    const T dot = dxhat.row(r).dot(cache.xhat.row(r));
    dx.row(r) = (cache.inv_std(r) / d) *
                (d * dxhat.row(r).array() - sum - cache.xhat.row(r).array() * dot).matrix();
  }
  return dx;
}

// ------------------------------------------------------------------ gelu
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

template <typename T>
Mat<T> gelu_forward(const Mat<T>& x) {
  const auto xa = x.array();
  const auto inner = T(kGeluC) * (xa + T(kGeluA) * xa.cube());
  return (T(0.5) * xa * (T(1) + inner.tanh())).matrix();
}

template <typename T>
Mat<T> gelu_backward(const Mat<T>& x, const Mat<T>& dy) {
  const auto xa = x.array();
  const auto t = (T(kGeluC) * (xa + T(kGeluA) * xa.cube())).tanh().eval();
  const auto dinner = T(kGeluC) * (T(1) + T(3 * kGeluA) * xa.square());
  return (dy.array() *
          (T(0.5) * (T(1) + t) + T(0.5) * xa * (T(1) - t.square()) * dinner))
      .matrix();
}

// --------------------------------------------------------------- softmax

template <typename T, typename Derived>
void softmax_rows_inplace(Eigen::MatrixBase<Derived>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const T mx = s.row(r).maxCoeff();
    if (!std::isfinite(mx)) {  // fully masked row
      s.row(r).setZero();
      continue;
    }
    s.row(r) = (s.row(r).array() - mx).exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
}

// ------------------------------------------------------------- embedding

template <typename T>
Mat<T> embedding_forward(const ParamStore<T>& ps, std::size_t table, const std::vector<int>& ids) {
  const auto& tab = ps[table].value;
  Mat<T> out(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(tab.cols()));
  const auto m = tab.mat();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tab.rows())
      throw std::invalid_argument("embedding: id " + std::to_string(ids[i]) + " out of range");
    out.row(static_cast<Eigen::Index>(i)) = m.row(ids[i]);
  }
  return out;
}

template <typename T>
void embedding_backward(ParamStore<T>& ps, std::size_t table, const std::vector<int>& ids,
                        const Mat<T>& dy) {
  auto g = ps[table].grad.mat();
  for (std::size_t i = 0; i < ids.size(); ++i) g.row(ids[i]) += dy.row(static_cast<Eigen::Index>(i));
}

/// Adds rows of a positional table: row i of segment s receives pos[i].
template <typename T>
void add_positions(const ParamStore<T>& ps, std::size_t table, const SegmentLayout& lay, Mat<T>& x) {
  const auto& tab = ps[table].value;
  const auto m = tab.mat();
  for (std::size_t s = 0; s < lay.count(); ++s) {
    if (static_cast<std::size_t>(lay.length[s]) > tab.rows())
      throw std::invalid_argument("sequence of length " + std::to_string(lay.length[s]) +
                                  " exceeds positional table " + shape_string(tab.shape));
    x.middleRows(lay.offset[s], lay.length[s]) += m.topRows(lay.length[s]);
  }
}

template <typename T>
void add_positions_backward(ParamStore<T>& ps, std::size_t table, const SegmentLayout& lay,
                            const Mat<T>& dy) {
  auto g = ps[table].grad.mat();
  for (std::size_t s = 0; s < lay.count(); ++s)
    g.topRows(lay.length[s]) += dy.middleRows(lay.offset[s], lay.length[s]);
}

// --------------------------------------------------------- concatenation

/// Row-wise concatenation, a's rows first.
template <typename T>
Mat<T> concat_rows(const Mat<T>& a, const Mat<T>& b) {
  if (a.rows() > 0 && b.rows() > 0 && a.cols() != b.cols())
    throw std::invalid_argument("concat_rows: width mismatch " + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.cols()));
  const Eigen::Index cols = a.rows() > 0 ? a.cols() : b.cols();
  Mat<T> out(a.rows() + b.rows(), cols);
  if (a.rows()) out.topRows(a.rows()) = a;
  if (b.rows()) out.bottomRows(b.rows()) = b;
  return out;
}

/// y = x W (no bias).
template <typename T>
Mat<T> project_forward(const ParamStore<T>& ps, std::size_t w, const Mat<T>& x) {
  Mat<T> y(x.rows(), static_cast<Eigen::Index>(ps[w].value.cols()));
  y.noalias() = x * ps[w].value.mat();
  return y;
}

template <typename T>
Mat<T> project_backward(ParamStore<T>& ps, std::size_t w, const Mat<T>& x, const Mat<T>& dy) {
  ps[w].grad.mat().noalias() += x.transpose() * dy;
  Mat<T> dx(dy.rows(), x.cols());
  dx.noalias() = dy * ps[w].value.mat().transpose();
  return dx;
}

// ------------------------------------------------------------- attention

template <typename T>
struct AttentionCache {
  Mat<T> xq;   // normalized query input
  Mat<T> xkv;  // key/value input; empty for self-attention
  Mat<T> q, k, v, ctx;
  std::vector<Mat<T>> probs;  // segment-major, head-minor
};

/// Multi-head scaled dot-product attention over packed segments. Query segment
/// s attends to key segment s only. With `causal`, row i sees keys j <= i.
/// `key_valid` (optional, one flag per key row) removes keys from every query.
/// Pass xkv == nullptr for self-attention.
template <typename T>
Mat<T> attention_forward(const ParamStore<T>& ps, const AttnIds& ids, int heads, const Mat<T>& xq,
                         const Mat<T>* xkv, const SegmentLayout& qlay, const SegmentLayout& klay,
                         bool causal, const std::vector<std::uint8_t>* key_valid,
                         AttentionCache<T>* cache) {
  const Mat<T>& src = xkv ? *xkv : xq;
  if (qlay.count() != klay.count())
    throw std::invalid_argument("attention: query/key segment counts differ");
  const Eigen::Index d = xq.cols();
  const Eigen::Index dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> q = project_forward(ps, ids.q, xq);
  Mat<T> k = project_forward(ps, ids.k, src);
  Mat<T> v = project_forward(ps, ids.v, src);
  Mat<T> ctx = Mat<T>::Zero(xq.rows(), d);
  std::vector<Mat<T>> probs;
  if (cache) probs.reserve(qlay.count() * static_cast<std::size_t>(heads));
  const T neg_inf = -std::numeric_limits<T>::infinity();
  for (std::size_t s = 0; s < qlay.count(); ++s) {
    const int qo = qlay.offset[s], ql = qlay.length[s];
    const int ko = klay.offset[s], kl = klay.length[s];
    for (int h = 0; h < heads; ++h) {
      Mat<T> p(ql, kl);
      if (kl > 0 && ql > 0) {
        p.noalias() = q.block(qo, h * dh, ql, dh) * k.block(ko, h * dh, kl, dh).transpose();
        p *= scale;
        for (int i = 0; i < ql; ++i)
          for (int j = 0; j < kl; ++j)
            if ((causal && j > i) || (key_valid && !(*key_valid)[ko + j])) p(i, j) = neg_inf;
        softmax_rows_inplace<T>(p);
        ctx.block(qo, h * dh, ql, dh).noalias() = p * v.block(ko, h * dh, kl, dh);
      }
      if (cache) probs.push_back(std::move(p));
    }
  }
  Mat<T> out = project_forward(ps, ids.o, ctx);
  if (cache) {
    cache->xq = xq;
    if (xkv) cache->xkv = *xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->ctx = std::move(ctx);
    cache->probs = std::move(probs);
  }
  return out;
}

/// Returns (dL/dxq, dL/dxkv). For self-attention the second matrix is the
/// key/value share of the input gradient; callers sum both.
template <typename T>
std::pair<Mat<T>, Mat<T>> attention_backward(ParamStore<T>& ps, const AttnIds& ids, int heads,
                                             const AttentionCache<T>& c, const SegmentLayout& qlay,
                                             const SegmentLayout& klay, const Mat<T>& dout) {
  const Mat<T>& src = c.xkv.size() ? c.xkv : c.xq;
  const Eigen::Index d = c.q.cols();
  const Eigen::Index dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> dctx = project_backward(ps, ids.o, c.ctx, dout);
  Mat<T> dq = Mat<T>::Zero(c.q.rows(), d);
  Mat<T> dk = Mat<T>::Zero(c.k.rows(), d);
  Mat<T> dv = Mat<T>::Zero(c.v.rows(), d);
  for (std::size_t s = 0; s < qlay.count(); ++s) {
    const int qo = qlay.offset[s], ql = qlay.length[s];
    const int ko = klay.offset[s], kl = klay.length[s];
    if (ql == 0 || kl == 0) continue;
    for (int h = 0; h < heads; ++h) {
      const Mat<T>& p = c.probs[s * static_cast<std::size_t>(heads) + h];
      const auto dO = dctx.block(qo, h * dh, ql, dh);
      Mat<T> dp(ql, kl);
      dp.noalias() = dO * c.v.block(ko, h * dh, kl, dh).transpose();
      dv.block(ko, h * dh, kl, dh).noalias() += p.transpose() * dO;
      const auto rowdot = (dp.array() * p.array()).rowwise().sum().eval();
      Mat<T> ds = (p.array() * (dp.array().colwise() - rowdot)).matrix() * scale;
      dq.block(qo, h * dh, ql, dh).noalias() += ds * c.k.block(ko, h * dh, kl, dh);
      dk.block(ko, h * dh, kl, dh).noalias() += ds.transpose() * c.q.block(qo, h * dh, ql, dh);
    }
  }
  Mat<T> dxq = project_backward(ps, ids.q, c.xq, dq);
  Mat<T> dsrc = project_backward(ps, ids.k, src, dk);
  dsrc += project_backward(ps, ids.v, src, dv);
  return {std::move(dxq), std::move(dsrc)};
}

// --------------------------------------------------------- cross entropy

/// log(sum exp(logits)) - logits[target] and its gradient softmax - onehot.
template <typename T>
std::pair<T, RowVec<T>> softmax_cross_entropy(const RowVec<T>& logits, int target) {
  if (target < 0 || target >= logits.size())
    throw std::invalid_argument("softmax_cross_entropy: target " + std::to_string(target) +
                                " out of range");
  const T mx = logits.maxCoeff();
  RowVec<T> e = (logits.array() - mx).exp().matrix();
  const T sum = e.sum();
  const T loss = std::log(sum) + mx - logits(target);
  RowVec<T> grad = e / sum;
  grad(target) -= T(1);
  return {loss, grad};
}

/// Mean cross-entropy over rows with target >= 0 (negative targets are padding
/// and contribute nothing). Writes dL/dlogits into `dlogits` when non-null.
template <typename T>
T cross_entropy_rows(const Mat<T>& logits, const std::vector<int>& targets, Mat<T>* dlogits) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size())
    throw std::invalid_argument("cross_entropy_rows: row/target count mismatch");
  std::size_t count = 0;
  for (int t : targets) count += t >= 0;
  if (dlogits) *dlogits = Mat<T>::Zero(logits.rows(), logits.cols());
  if (count == 0) return T(0);
  T total = 0;
  const T inv = T(1) / static_cast<T>(count);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] < 0) continue;
    auto [loss, g] = softmax_cross_entropy<T>(logits.row(static_cast<Eigen::Index>(r)), targets[r]);
    total += loss;
    if (dlogits) dlogits->row(static_cast<Eigen::Index>(r)) = g * inv;
  }
  return total * inv;
}

}  // namespace mrvpc::nn

namespace mrvpc::nn {

/// Mean cross-entropy evaluated in extended precision from the given logits.
/// Gradient checks difference two nearby loss values; subtracting a fixed
/// `offset` before rounding to double keeps the difference above the rounding
/// floor of a loss near ln(vocab).
template <typename T>
double cross_entropy_rows_precise(const Mat<T>& logits, const std::vector<int>& targets,
                                  long double offset = 0) {
  long double sum = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] < 0) continue;
    const auto row = logits.row(static_cast<Eigen::Index>(r));
    const long double mx = row.maxCoeff();
    long double se = 0;
    for (Eigen::Index j = 0; j < row.size(); ++j) se += std::exp(static_cast<long double>(row(j)) - mx);
    sum += std::log(se) + mx - static_cast<long double>(row(targets[r]));
    ++count;
  }
  if (count == 0) return 0.0;
  return static_cast<double>(sum / static_cast<long double>(count) - offset);
}

}  // namespace mrvpc::nn
