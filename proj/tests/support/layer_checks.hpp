// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks of every layer's backward pass in double precision.
// Each layer sees random parameters (biases included), a random input and a
// fixed random upstream gradient G; the scalar checked is sum(G .* output).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsc/model.hpp"
#include "stsc/nn/gradcheck.hpp"
#include "stsc/nn/layers.hpp"
#include "stsc/training.hpp"

namespace stsc::checks {

using nn::Mat;

struct LayerCheck {
  std::string layer;
  nn::GradCheckResult result;
};

inline Mat<double> random_mat(Eigen::Index r, Eigen::Index c, Rng &rng, double lo = -1.0,
                              double hi = 1.0) {
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = uniform(rng, lo, hi);
  return m;
}

/// Flatten (tensor, gradient) pairs into coordinate / analytic lists.
inline void collect(std::vector<double *> &coords, std::vector<double> &analytic, Mat<double> &x,
                    const Mat<double> &g) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    coords.push_back(x.data() + i);
    analytic.push_back(g.data()[i]);
  }
}

inline double weighted_sum(const Mat<double> &g, const Mat<double> &y) {
  return g.cwiseProduct(y).sum();
}

struct CheckOptions {
  double eps = 1e-4;
  std::size_t sample = 200; // 0: every coordinate
  std::uint64_t seed = 1;
};

inline LayerCheck check_conv1d(const CheckOptions &o) {
  Rng rng(derive_seed(o.seed, 1));
  auto p = nn::init_conv1d<double>(6, 8, 5, rng);
  p.bias = random_mat(1, 8, rng, -0.2, 0.2);
  Mat<double> x = random_mat(20, 6, rng);
  const Mat<double> G = random_mat(20, 8, rng);
  nn::Conv1dCache<double> cache;
  nn::conv1d_forward(x, p, &cache);
  nn::Conv1dParams<double> grad{Mat<double>::Zero(p.weight.rows(), p.weight.cols()),
                                Mat<double>::Zero(1, 8), p.kernel};
  const Mat<double> dx = nn::conv1d_backward(G, p, cache, grad);
  std::vector<double *> coords;
  std::vector<double> analytic;
  collect(coords, analytic, p.weight, grad.weight);
  collect(coords, analytic, p.bias, grad.bias);
  collect(coords, analytic, x, dx);
  auto loss = [&] {
    const Mat<double> y = nn::conv1d_forward(x, p, static_cast<nn::Conv1dCache<double> *>(nullptr));
    return std::make_pair(weighted_sum(G, y), nn::sign_signature(y));
  };
  return {"conv1d", nn::grad_check(coords, analytic, loss, o.eps, o.sample, o.seed)};
}

inline LayerCheck check_gru(const CheckOptions &o) {
  Rng rng(derive_seed(o.seed, 2));
  auto p = nn::init_gru<double>(6, 7, rng);
  p.b = random_mat(1, 21, rng, -0.3, 0.3);
  Mat<double> x = random_mat(10, 6, rng);
  const Mat<double> G = random_mat(10, 7, rng);
  nn::GruCache<double> cache;
  nn::gru_forward(x, p, &cache);
  nn::GruParams<double> grad{Mat<double>::Zero(6, 21), Mat<double>::Zero(7, 21),
                             Mat<double>::Zero(1, 21)};
  const Mat<double> dx = nn::gru_backward(G, p, cache, grad);
  std::vector<double *> coords;
  std::vector<double> analytic;
  collect(coords, analytic, p.w, grad.w);
  collect(coords, analytic, p.u, grad.u);
  collect(coords, analytic, p.b, grad.b);
  collect(coords, analytic, x, dx);
  auto loss = [&] {
    const Mat<double> y = nn::gru_forward(x, p, static_cast<nn::GruCache<double> *>(nullptr));
    return std::make_pair(weighted_sum(G, y), std::uint64_t{0});
  };
  return {"gru", nn::grad_check(coords, analytic, loss, o.eps, o.sample, o.seed)};
}

inline LayerCheck check_lstm(const CheckOptions &o) {
  Rng rng(derive_seed(o.seed, 3));
  auto p = nn::init_lstm<double>(6, 6, rng);
  p.b = random_mat(1, 24, rng, -0.3, 0.3);
  Mat<double> x = random_mat(10, 6, rng);
  const Mat<double> G = random_mat(10, 6, rng);
  nn::LstmCache<double> cache;
  nn::lstm_forward(x, p, &cache);
  nn::LstmParams<double> grad{Mat<double>::Zero(6, 24), Mat<double>::Zero(6, 24),
                              Mat<double>::Zero(1, 24)};
  const Mat<double> dx = nn::lstm_backward(G, p, cache, grad);
  std::vector<double *> coords;
  std::vector<double> analytic;
  collect(coords, analytic, p.w, grad.w);
  collect(coords, analytic, p.u, grad.u);
  collect(coords, analytic, p.b, grad.b);
  collect(coords, analytic, x, dx);
  auto loss = [&] {
    const Mat<double> y = nn::lstm_forward(x, p, static_cast<nn::LstmCache<double> *>(nullptr));
    return std::make_pair(weighted_sum(G, y), std::uint64_t{0});
  };
  return {"lstm", nn::grad_check(coords, analytic, loss, o.eps, o.sample, o.seed)};
}

inline LayerCheck check_dense(const CheckOptions &o, nn::Activation act) {
  Rng rng(derive_seed(o.seed, 4 + static_cast<std::uint64_t>(act)));
  auto p = nn::init_dense<double>(16, 12, rng);
  p.bias = random_mat(1, 12, rng, -0.2, 0.2);
  Mat<double> x = random_mat(4, 16, rng);
  const Mat<double> G = random_mat(4, 12, rng);
  nn::DenseCache<double> cache;
  nn::dense_forward(x, p, act, &cache);
  nn::DenseParams<double> grad{Mat<double>::Zero(16, 12), Mat<double>::Zero(1, 12)};
  const Mat<double> dx = nn::dense_backward(G, p, act, cache, grad);
  std::vector<double *> coords;
  std::vector<double> analytic;
  collect(coords, analytic, p.weight, grad.weight);
  collect(coords, analytic, p.bias, grad.bias);
  collect(coords, analytic, x, dx);
  auto loss = [&] {
    const Mat<double> y = nn::dense_forward(x, p, act, static_cast<nn::DenseCache<double> *>(nullptr));
    return std::make_pair(weighted_sum(G, y),
                          act == nn::Activation::Relu ? nn::sign_signature(y) : std::uint64_t{0});
  };
  const char *name = act == nn::Activation::Relu      ? "dense_relu"
                     : act == nn::Activation::Sigmoid ? "dense_sigmoid"
                                                      : "dense_linear";
  return {name, nn::grad_check(coords, analytic, loss, o.eps, o.sample, o.seed)};
}

inline LayerCheck check_max_pool(const CheckOptions &o) {
  Rng rng(derive_seed(o.seed, 8));
  Mat<double> x = random_mat(30, 8, rng);
  const Mat<double> G = random_mat(1, 8, rng);
  nn::MaxPoolCache cache;
  nn::global_max_pool_forward(x, &cache);
  const Mat<double> dx = nn::global_max_pool_backward(G, cache);
  std::vector<double *> coords;
  std::vector<double> analytic;
  collect(coords, analytic, x, dx);
  auto loss = [&] {
    nn::MaxPoolCache c;
    const Mat<double> y = nn::global_max_pool_forward(x, &c);
    std::uint64_t sig = 1;
    for (auto a : c.argmax)
      sig = nn::mix_signature(sig, static_cast<std::uint64_t>(a));
    return std::make_pair(weighted_sum(G, y), sig);
  };
  return {"global_max_pool", nn::grad_check(coords, analytic, loss, o.eps, o.sample, o.seed)};
}

/// Classification head (dense ReLU, dropout with a fixed mask, dense to the
/// logit) under focal loss, for both labels.
inline LayerCheck check_focal_head(const CheckOptions &o) {
  ModelConfig cfg;
  cfg.n_fragments = 2;
  cfg.feature_dim = 16;
  cfg.head_hidden = 12;
  Model<double> m = init_model<double>(cfg, derive_seed(o.seed, 9));
  Rng rng(derive_seed(o.seed, 10));
  m.params.head1.bias = random_mat(1, 12, rng, -0.2, 0.2);
  m.params.head2.bias = random_mat(1, 1, rng, -0.2, 0.2);
  Mat<double> flat = random_mat(1, 32, rng, 0.0, 1.0);

  nn::GradCheckResult total;
  for (int y : {1, 0}) {
    auto loss = [&] {
      Rng drop(derive_seed(o.seed, 11));
      HeadCache<double> hc;
      const double z = head_logit(m, flat, nn::Mode::Train, &drop, &hc);
      return std::make_pair(focal_loss_logit(z, y).loss, nn::sign_signature(hc.hidden.out));
    };
    Rng drop(derive_seed(o.seed, 11));
    HeadCache<double> hc;
    const double z = head_logit(m, flat, nn::Mode::Train, &drop, &hc);
    const double dz = focal_loss_logit(z, y).d_logit;
    ModelParams<double> grad = m.params.zeros_like();
    Mat<double> d(1, 1);
    d(0, 0) = dz;
    d = nn::dense_backward(d, m.params.head2, nn::Activation::None, hc.out, grad.head2);
    d = nn::dropout_backward(d, hc.drop);
    const Mat<double> dflat =
        nn::dense_backward(d, m.params.head1, nn::Activation::Relu, hc.hidden, grad.head1);
    std::vector<double *> coords;
    std::vector<double> analytic;
    collect(coords, analytic, m.params.head1.weight, grad.head1.weight);
    collect(coords, analytic, m.params.head1.bias, grad.head1.bias);
    collect(coords, analytic, m.params.head2.weight, grad.head2.weight);
    collect(coords, analytic, m.params.head2.bias, grad.head2.bias);
    collect(coords, analytic, flat, dflat);
    const auto r = nn::grad_check(coords, analytic, loss, o.eps, o.sample, o.seed + y);
    total.max_rel_error = std::max(total.max_rel_error, r.max_rel_error);
    total.checked += r.checked;
    total.skipped_kinks += r.skipped_kinks;
  }
  return {"focal_head", total};
}

/// Whole model (tiny shapes) under focal loss, all parameters, one encoder type.
inline LayerCheck check_model(const CheckOptions &o, EncoderType enc) {
  ModelConfig c;
  c.encoder = enc;
  c.kernel_size = 3;
  c.n_fragments = 2;
  c.n_filters = 6;
  c.rnn_hidden = 5;
  c.feature_dim = 8;
  c.head_hidden = 7;
  c.input_bands = 10;
  c.input_frames = 4;
  Model<double> m = init_model<double>(c, derive_seed(o.seed, 12));
  Rng rng(derive_seed(o.seed, 13));
  std::vector<Mat<double>> xs;
  for (int i = 0; i < c.n_fragments; ++i)
    xs.push_back(random_mat(c.input_bands, c.input_frames, rng, 0.0, 1.0));
  const std::uint64_t drop_seed = derive_seed(o.seed, 14);

  auto loss = [&] {
    Rng d(drop_seed);
    ForwardCache<double> cache;
    const double z = forward_logit(m, xs, nn::Mode::Train, &d, &cache);
    std::uint64_t sig = 1;
    for (const auto &e : cache.encoders) {
      sig = nn::sign_signature(e.conv.out, sig);
      sig = nn::sign_signature(e.dense.out, sig);
      for (auto a : e.pool.argmax)
        sig = nn::mix_signature(sig, static_cast<std::uint64_t>(a));
    }
    sig = nn::sign_signature(cache.head.hidden.out, sig);
    return std::make_pair(focal_loss_logit(z, 1).loss, sig);
  };
  Rng d(drop_seed);
  ForwardCache<double> cache;
  const double z = forward_logit(m, xs, nn::Mode::Train, &d, &cache);
  ModelParams<double> g = m.params.zeros_like();
  backward(m, focal_loss_logit(z, 1).d_logit, cache, g);
  std::vector<double *> coords;
  std::vector<double> analytic;
  auto pt = m.params.tensors();
  auto gt = g.tensors();
  for (std::size_t i = 0; i < pt.size(); ++i)
    collect(coords, analytic, *pt[i].second, *gt[i].second);
  return {"model_" + to_string(enc), nn::grad_check(coords, analytic, loss, 1e-5, 0, o.seed)};
}

inline std::vector<LayerCheck> run_layer_checks(const CheckOptions &o = {}) {
  return {check_conv1d(o),
          check_gru(o),
          check_lstm(o),
          check_dense(o, nn::Activation::None),
          check_dense(o, nn::Activation::Relu),
          check_dense(o, nn::Activation::Sigmoid),
          check_max_pool(o),
          check_focal_head(o)};
}

} // namespace stsc::checks
