// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "stsc/error.hpp"
#include "stsc/random.hpp"

namespace stsc::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Central-difference check of `analytic[i]` = d loss / d *coords[i].
///
/// `loss()` returns (value, activation signature). A coordinate whose +-eps
/// perturbation changes the signature straddles a ReLU/max kink and is skipped.
/// With `sample` > 0 and more coordinates than that, a seeded random subset of
/// `sample` kink-free coordinates is checked instead of all of them.
template <typename LossFn>
GradCheckResult grad_check(const std::vector<double *> &coords, const std::vector<double> &analytic,
                           LossFn &&loss, double eps = 1e-4, std::size_t sample = 0,
                           std::uint64_t seed = 0) {
  require(coords.size() == analytic.size(), Errc::ShapeMismatch,
          "grad_check: coordinate and gradient counts differ");
  std::vector<std::size_t> order(coords.size());
  std::iota(order.begin(), order.end(), 0);
  const bool sampled = sample > 0 && sample < coords.size();
  if (sampled) {
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
  }
  const auto base_sig = loss().second;

  GradCheckResult res;
  for (std::size_t i : order) {
    if (sampled && res.checked >= sample)
      break;
    double &v = *coords[i];
    const double saved = v;
    v = saved + eps;
    const auto [lp, sp] = loss();
    v = saved - eps;
    const auto [lm, sm] = loss();
    v = saved;
    if (sp != base_sig || sm != base_sig) {
      ++res.skipped_kinks;
      continue;
    }
    const double numeric = (lp - lm) / (2.0 * eps);
    res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[i], numeric));
    ++res.checked;
  }
  return res;
}

} // namespace stsc::nn
