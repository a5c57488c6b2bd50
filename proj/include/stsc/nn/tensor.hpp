// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "stsc/error.hpp"

namespace stsc::nn {

/// Row-major dense matrix; the only tensor rank the model needs.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

enum class Mode { Train, Infer };

template <typename Derived>
void check_finite(const Eigen::MatrixBase<Derived> &m, const std::string &where) {
  if (!m.allFinite())
    fail(Errc::NonFiniteValue, "non-finite value at " + where);
}

template <typename T>
void require_shape(const Mat<T> &m, Eigen::Index rows, Eigen::Index cols,
                   const std::string &what) {
  if (m.rows() != rows || m.cols() != cols)
    fail(Errc::ShapeMismatch, what + ": expected " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + ", got " +
                                  std::to_string(m.rows()) + "x" +
                                  std::to_string(m.cols()));
}

template <typename T> T sigmoid(T x) {
  // split by sign so exp never overflows
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// FNV-1a over the sign pattern of a matrix; used to detect ReLU kink
/// crossings in finite-difference checks.
template <typename Derived>
std::uint64_t sign_signature(const Eigen::MatrixBase<Derived> &m,
                             std::uint64_t h = 1469598103934665603ull) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      h ^= m(i, j) > 0 ? 1u : 0u;
      h *= 1099511628211ull;
    }
  return h;
}

inline std::uint64_t mix_signature(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  return h;
}

} // namespace stsc::nn
