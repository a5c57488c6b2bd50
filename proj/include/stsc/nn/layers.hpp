// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "stsc/nn/tensor.hpp"
#include "stsc/random.hpp"

namespace stsc::nn {

// Every layer is a pair of free functions over a parameter struct:
//   forward(x, params, ..., cache*) -> y
//   backward(dy, params, cache, grads&) -> dx    (grads are accumulated)
// The cache pointer may be null when no backward pass will follow.

template <typename T> using Named = std::pair<std::string, Mat<T> *>;

// ---------------------------------------------------------------------------
// conv1d: "same" zero padding, stride 1, ReLU.
// x is L x C_in; weight is (k * C_in) x F with row j*C_in + c holding the tap
// at offset j - (k-1)/2 for input channel c.

template <typename T> struct Conv1dParams {
  Mat<T> weight;
  Mat<T> bias; // 1 x F
  int kernel = 1;

  std::vector<Named<T>> tensors(const std::string &prefix) {
    return {{prefix + ".weight", &weight}, {prefix + ".bias", &bias}};
  }
};

template <typename T> struct Conv1dCache {
  Mat<T> cols;
  Mat<T> out;
};

template <typename T>
Mat<T> im2col(const Mat<T> &x, int k) {
  const Eigen::Index L = x.rows(), C = x.cols();
  const int pad = (k - 1) / 2;
  Mat<T> cols = Mat<T>::Zero(L, k * C);
  for (int j = 0; j < k; ++j) {
    const Eigen::Index shift = j - pad; // cols row l reads x row l + shift
    const Eigen::Index dst0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index dst1 = std::min<Eigen::Index>(L, L - shift);
    if (dst1 > dst0)
      cols.block(dst0, j * C, dst1 - dst0, C) = x.block(dst0 + shift, 0, dst1 - dst0, C);
  }
  return cols;
}

template <typename T>
Mat<T> conv1d_forward(const Mat<T> &x, const Conv1dParams<T> &p, Conv1dCache<T> *cache) {
  if (x.cols() * p.kernel != p.weight.rows())
    fail(Errc::ShapeMismatch, "conv1d input channels do not match kernel");
  Mat<T> cols = im2col(x, p.kernel);
  Mat<T> out = cols * p.weight;
  out.rowwise() += p.bias.row(0);
  out = out.cwiseMax(T(0));
  if (cache) {
    cache->cols = std::move(cols);
    cache->out = out;
  }
  return out;
}

template <typename T>
Mat<T> conv1d_backward(const Mat<T> &d_out, const Conv1dParams<T> &p,
                       const Conv1dCache<T> &cache, Conv1dParams<T> &grad) {
  const Mat<T> d_pre = (cache.out.array() > T(0)).select(d_out, T(0));
  grad.weight.noalias() += cache.cols.transpose() * d_pre;
  grad.bias += d_pre.colwise().sum();
  const Mat<T> d_cols = d_pre * p.weight.transpose();
  const Eigen::Index L = d_out.rows();
  const Eigen::Index C = p.weight.rows() / p.kernel;
  const int pad = (p.kernel - 1) / 2;
  Mat<T> dx = Mat<T>::Zero(L, C);
  for (int j = 0; j < p.kernel; ++j) {
    const Eigen::Index shift = j - pad;
    const Eigen::Index dst0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index dst1 = std::min<Eigen::Index>(L, L - shift);
    if (dst1 > dst0)
      dx.block(dst0 + shift, 0, dst1 - dst0, C) += d_cols.block(dst0, j * C, dst1 - dst0, C);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// GRU over the rows of x (L x C), zero initial state, full sequence output.
//   z = sig(x Wz + h Uz + bz)        r = sig(x Wr + h Ur + br)
//   c = tanh(x Wc + (r * h) Uc + bc)  h' = z * h + (1 - z) * c
// Gate column blocks are ordered [z | r | c].

template <typename T> struct GruParams {
  Mat<T> w; // C x 3H
  Mat<T> u; // H x 3H
  Mat<T> b; // 1 x 3H

  Eigen::Index hidden() const { return u.rows(); }

  std::vector<Named<T>> tensors(const std::string &prefix) {
    return {{prefix + ".w", &w}, {prefix + ".u", &u}, {prefix + ".b", &b}};
  }
};

template <typename T> struct GruCache {
  Mat<T> x;
  Mat<T> z, r, c; // L x H each
  Mat<T> h_prev;  // L x H (row t is the state entering step t)
  Mat<T> rh;      // L x H
};

template <typename T>
Mat<T> gru_forward(const Mat<T> &x, const GruParams<T> &p, GruCache<T> *cache) {
  const Eigen::Index L = x.rows(), H = p.hidden();
  if (x.cols() != p.w.rows())
    fail(Errc::ShapeMismatch, "gru input width does not match parameters");
  Mat<T> xw = x * p.w;
  xw.rowwise() += p.b.row(0);

  Mat<T> hs(L, H);
  Mat<T> zs(L, H), rs(L, H), cs(L, H), hp(L, H), rhs(L, H);
  RowVec<T> h = RowVec<T>::Zero(H);
  RowVec<T> zr(2 * H), cand(H);
  for (Eigen::Index t = 0; t < L; ++t) {
    zr.noalias() = xw.row(t).head(2 * H);
    zr.noalias() += h * p.u.leftCols(2 * H);
    zr = (T(1) / (T(1) + (-zr.array()).exp())).matrix();
    const auto z = zr.head(H);
    const auto r = zr.tail(H);
    const RowVec<T> rh = r.cwiseProduct(h);
    cand.noalias() = xw.row(t).tail(H);
    cand.noalias() += rh * p.u.rightCols(H);
    cand = cand.array().tanh().matrix();
    hp.row(t) = h;
    h = z.cwiseProduct(h) + (RowVec<T>::Ones(H) - z).cwiseProduct(cand);
    hs.row(t) = h;
    zs.row(t) = z;
    rs.row(t) = r;
    cs.row(t) = cand;
    rhs.row(t) = rh;
  }
  if (cache) {
    cache->x = x;
    cache->z = std::move(zs);
    cache->r = std::move(rs);
    cache->c = std::move(cs);
    cache->h_prev = std::move(hp);
    cache->rh = std::move(rhs);
  }
  return hs;
}

template <typename T>
Mat<T> gru_backward(const Mat<T> &d_h, const GruParams<T> &p, const GruCache<T> &cache,
                    GruParams<T> &grad) {
  const Eigen::Index L = d_h.rows(), H = p.hidden();
  Mat<T> d_a(L, 3 * H); // pre-activation gradients [z | r | c]
  RowVec<T> dh_next = RowVec<T>::Zero(H);
  const auto u_zr = p.u.leftCols(2 * H);
  const auto u_c = p.u.rightCols(H);
  for (Eigen::Index t = L - 1; t >= 0; --t) {
    const auto z = cache.z.row(t).array();
    const auto r = cache.r.row(t).array();
    const auto c = cache.c.row(t).array();
    const auto h_prev = cache.h_prev.row(t).array();
    const RowVec<T> dh = d_h.row(t) + dh_next;
    const auto dha = dh.array();

    RowVec<T> da_c = (dha * (T(1) - z) * (T(1) - c * c)).matrix();
    RowVec<T> d_rh = da_c * u_c.transpose();
    RowVec<T> da_z = (dha * (h_prev - c) * z * (T(1) - z)).matrix();
    RowVec<T> da_r = (d_rh.array() * h_prev * r * (T(1) - r)).matrix();

    d_a.row(t).head(H) = da_z;
    d_a.row(t).segment(H, H) = da_r;
    d_a.row(t).tail(H) = da_c;

    RowVec<T> dh_prev = (dha * z + d_rh.array() * r).matrix();
    dh_prev.noalias() += d_a.row(t).head(2 * H) * u_zr.transpose();
    dh_next = dh_prev;
  }
  grad.u.leftCols(2 * H).noalias() += cache.h_prev.transpose() * d_a.leftCols(2 * H);
  grad.u.rightCols(H).noalias() += cache.rh.transpose() * d_a.rightCols(H);
  grad.w.noalias() += cache.x.transpose() * d_a;
  grad.b += d_a.colwise().sum();
  return d_a * p.w.transpose();
}

// ---------------------------------------------------------------------------
// LSTM, gate column blocks [i | f | g | o]:
//   c' = f * c + i * g,  h' = o * tanh(c')

template <typename T> struct LstmParams {
  Mat<T> w; // C x 4H
  Mat<T> u; // H x 4H
  Mat<T> b; // 1 x 4H

  Eigen::Index hidden() const { return u.rows(); }

  std::vector<Named<T>> tensors(const std::string &prefix) {
    return {{prefix + ".w", &w}, {prefix + ".u", &u}, {prefix + ".b", &b}};
  }
};

template <typename T> struct LstmCache {
  Mat<T> x;
  Mat<T> gates;  // L x 4H, post-activation
  Mat<T> c;      // L x H cell state after step t
  Mat<T> c_prev; // L x H
  Mat<T> h_prev; // L x H
};

/// Optional initial state; zero when empty.
template <typename T> struct LstmState {
  RowVec<T> h;
  RowVec<T> c;
};

template <typename T>
Mat<T> lstm_forward(const Mat<T> &x, const LstmParams<T> &p, LstmCache<T> *cache,
                    const LstmState<T> &init = {}) {
  const Eigen::Index L = x.rows(), H = p.hidden();
  if (x.cols() != p.w.rows())
    fail(Errc::ShapeMismatch, "lstm input width does not match parameters");
  Mat<T> xw = x * p.w;
  xw.rowwise() += p.b.row(0);

  Mat<T> hs(L, H), gates(L, 4 * H), cs(L, H), cps(L, H), hps(L, H);
  RowVec<T> h = init.h.size() ? init.h : RowVec<T>::Zero(H);
  RowVec<T> c = init.c.size() ? init.c : RowVec<T>::Zero(H);
  RowVec<T> a(4 * H);
  for (Eigen::Index t = 0; t < L; ++t) {
    a.noalias() = xw.row(t);
    a.noalias() += h * p.u;
    auto arr = a.array();
    arr.head(2 * H) = T(1) / (T(1) + (-arr.head(2 * H)).exp());
    arr.segment(2 * H, H) = arr.segment(2 * H, H).tanh();
    arr.tail(H) = T(1) / (T(1) + (-arr.tail(H)).exp());
    cps.row(t) = c;
    hps.row(t) = h;
    c = (arr.segment(H, H) * c.array() + arr.head(H) * arr.segment(2 * H, H)).matrix();
    h = (arr.tail(H) * c.array().tanh()).matrix();
    gates.row(t) = a;
    cs.row(t) = c;
    hs.row(t) = h;
  }
  if (cache) {
    cache->x = x;
    cache->gates = std::move(gates);
    cache->c = std::move(cs);
    cache->c_prev = std::move(cps);
    cache->h_prev = std::move(hps);
  }
  return hs;
}

template <typename T>
Mat<T> lstm_backward(const Mat<T> &d_h, const LstmParams<T> &p, const LstmCache<T> &cache,
                     LstmParams<T> &grad, LstmState<T> *d_init = nullptr) {
  const Eigen::Index L = d_h.rows(), H = p.hidden();
  Mat<T> d_a(L, 4 * H);
  RowVec<T> dh_next = RowVec<T>::Zero(H);
  RowVec<T> dc_next = RowVec<T>::Zero(H);
  for (Eigen::Index t = L - 1; t >= 0; --t) {
    const auto g = cache.gates.row(t).array();
    const auto ig = g.head(H), fg = g.segment(H, H), gg = g.segment(2 * H, H), og = g.tail(H);
    const auto tc = cache.c.row(t).array().tanh();
    const auto dh = (d_h.row(t) + dh_next).array();
    const auto dc = (dc_next.array() + dh * og * (T(1) - tc * tc)).eval();

    auto row = d_a.row(t).array();
    row.head(H) = dc * gg * ig * (T(1) - ig);
    row.segment(H, H) = dc * cache.c_prev.row(t).array() * fg * (T(1) - fg);
    row.segment(2 * H, H) = dc * ig * (T(1) - gg * gg);
    row.tail(H) = dh * tc * og * (T(1) - og);

    dc_next = (dc * fg).matrix();
    dh_next.noalias() = d_a.row(t) * p.u.transpose();
  }
  if (d_init) {
    d_init->h = dh_next;
    d_init->c = dc_next;
  }
  grad.u.noalias() += cache.h_prev.transpose() * d_a;
  grad.w.noalias() += cache.x.transpose() * d_a;
  grad.b += d_a.colwise().sum();
  return d_a * p.w.transpose();
}

// ---------------------------------------------------------------------------
// Global max pooling over rows: L x C -> 1 x C. Ties go to the first row.

struct MaxPoolCache {
  std::vector<Eigen::Index> argmax;
  Eigen::Index rows = 0;
};

template <typename T>
Mat<T> global_max_pool_forward(const Mat<T> &x, MaxPoolCache *cache) {
  if (x.rows() < 1)
    fail(Errc::EmptySequence, "global max pool over an empty sequence");
  Mat<T> out(1, x.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(x.cols()), 0);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    T best = x(0, j);
    for (Eigen::Index i = 1; i < x.rows(); ++i)
      if (x(i, j) > best) {
        best = x(i, j);
        arg[static_cast<std::size_t>(j)] = i;
      }
    out(0, j) = best;
  }
  if (cache) {
    cache->argmax = std::move(arg);
    cache->rows = x.rows();
  }
  return out;
}

template <typename T>
Mat<T> global_max_pool_backward(const Mat<T> &d_out, const MaxPoolCache &cache) {
  Mat<T> dx = Mat<T>::Zero(cache.rows, d_out.cols());
  for (Eigen::Index j = 0; j < d_out.cols(); ++j)
    dx(cache.argmax[static_cast<std::size_t>(j)], j) = d_out(0, j);
  return dx;
}

// ---------------------------------------------------------------------------
// Dense: y = act(x W + b), x is B x D_in.

enum class Activation { None, Relu, Sigmoid };

template <typename T> struct DenseParams {
  Mat<T> weight; // D_in x D_out
  Mat<T> bias;   // 1 x D_out

  std::vector<Named<T>> tensors(const std::string &prefix) {
    return {{prefix + ".weight", &weight}, {prefix + ".bias", &bias}};
  }
};

template <typename T> struct DenseCache {
  Mat<T> x;
  Mat<T> out;
};

template <typename T>
Mat<T> dense_forward(const Mat<T> &x, const DenseParams<T> &p, Activation act,
                     DenseCache<T> *cache) {
  if (x.cols() != p.weight.rows())
    fail(Errc::ShapeMismatch, "dense input width " + std::to_string(x.cols()) +
                                  " does not match " + std::to_string(p.weight.rows()));
  Mat<T> out = x * p.weight;
  out.rowwise() += p.bias.row(0);
  switch (act) {
  case Activation::None: break;
  case Activation::Relu: out = out.cwiseMax(T(0)); break;
  case Activation::Sigmoid: out = out.unaryExpr([](T v) { return sigmoid(v); }); break;
  }
  if (cache) {
    cache->x = x;
    cache->out = out;
  }
  return out;
}

template <typename T>
Mat<T> dense_backward(const Mat<T> &d_out, const DenseParams<T> &p, Activation act,
                      const DenseCache<T> &cache, DenseParams<T> &grad) {
  Mat<T> d_pre;
  switch (act) {
  case Activation::None: d_pre = d_out; break;
  case Activation::Relu: d_pre = (cache.out.array() > T(0)).select(d_out, T(0)); break;
  case Activation::Sigmoid:
    d_pre = (d_out.array() * cache.out.array() * (T(1) - cache.out.array())).matrix();
    break;
  }
  grad.weight.noalias() += cache.x.transpose() * d_pre;
  grad.bias += d_pre.colwise().sum();
  return d_pre * p.weight.transpose();
}

// ---------------------------------------------------------------------------
// Inverted dropout: survivors scaled by 1 / (1 - rate); identity at inference.

template <typename T> struct DropoutCache {
  Mat<T> mask; // empty when the layer acted as identity
};

template <typename T>
Mat<T> dropout_forward(const Mat<T> &x, double rate, Mode mode, Rng *rng,
                       DropoutCache<T> *cache) {
  require(rate >= 0.0 && rate < 1.0, Errc::InvalidArgument, "dropout rate must be in [0, 1)");
  if (cache)
    cache->mask.resize(0, 0);
  if (mode == Mode::Infer || rate == 0.0)
    return x;
  require(rng != nullptr, Errc::InvalidArgument, "training-mode dropout needs a random stream");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Mat<T> mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = uniform01(*rng) < rate ? T(0) : keep_scale;
  Mat<T> out = x.cwiseProduct(mask);
  if (cache)
    cache->mask = std::move(mask);
  return out;
}

template <typename T>
Mat<T> dropout_backward(const Mat<T> &d_out, const DropoutCache<T> &cache) {
  if (cache.mask.size() == 0)
    return d_out;
  return d_out.cwiseProduct(cache.mask);
}

// ---------------------------------------------------------------------------
// Initialization

/// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)).
inline double glorot_bound(double fan_in, double fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

template <typename T>
Mat<T> glorot_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out,
                      Rng &rng) {
  const double bound = glorot_bound(fan_in, fan_out);
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<T>(uniform(rng, -bound, bound));
  return m;
}

template <typename T>
Conv1dParams<T> init_conv1d(int in_channels, int filters, int kernel, Rng &rng) {
  Conv1dParams<T> p;
  p.kernel = kernel;
  // receptive-field convention: fan_in = k * C_in, fan_out = k * F
  p.weight = glorot_uniform<T>(static_cast<Eigen::Index>(kernel) * in_channels, filters,
                               kernel * in_channels, kernel * filters, rng);
  p.bias = Mat<T>::Zero(1, filters);
  return p;
}

template <typename T> GruParams<T> init_gru(int input, int hidden, Rng &rng) {
  GruParams<T> p;
  p.w = glorot_uniform<T>(input, 3 * hidden, input, 3 * hidden, rng);
  p.u = glorot_uniform<T>(hidden, 3 * hidden, hidden, 3 * hidden, rng);
  p.b = Mat<T>::Zero(1, 3 * hidden);
  return p;
}

template <typename T> LstmParams<T> init_lstm(int input, int hidden, Rng &rng) {
  LstmParams<T> p;
  p.w = glorot_uniform<T>(input, 4 * hidden, input, 4 * hidden, rng);
  p.u = glorot_uniform<T>(hidden, 4 * hidden, hidden, 4 * hidden, rng);
  p.b = Mat<T>::Zero(1, 4 * hidden);
  return p;
}

template <typename T> DenseParams<T> init_dense(int in, int out, Rng &rng) {
  DenseParams<T> p;
  p.weight = glorot_uniform<T>(in, out, in, out, rng);
  p.bias = Mat<T>::Zero(1, out);
  return p;
}

} // namespace stsc::nn
