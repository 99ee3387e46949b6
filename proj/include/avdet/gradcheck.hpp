// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference harness. Analytic gradients from backward() are
// compared against (f(x+h) - f(x-h)) / 2h element by element; the reported
// figure is the worst relative error max over all leaf elements.

#pragma once

#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "avdet/tensor.hpp"

namespace avdet {

inline Real relative_error(Real analytic, Real numeric) {
  return std::abs(analytic - numeric) /
         std::max({Real(1), std::abs(analytic), std::abs(numeric)});
}

/// f must rebuild its graph from the current leaf values on every call and
/// return a scalar. Returns the worst relative error over every element of
/// every leaf. Leaf values are restored on exit.
Real fd_max_rel_err(const std::function<Tensor()>& f, std::span<Tensor> leaves, Real h = 1e-5);

/// Runs the per-op gradient checks (every differentiable op, `points` random
/// input points each) and writes one line per op. Returns the worst relative
/// error seen.
Real run_op_gradient_checks(std::ostream& out, std::uint64_t seed, int points = 10);

class Rng;

/// Like fd_max_rel_err, but probes only `points` coordinates sampled
/// uniformly across all leaf elements instead of sweeping every one. Meant
/// for objectives too wide for the full sweep (whole-model checks).
Real fd_sampled_max_rel_err(const std::function<Tensor()>& f, std::span<Tensor> leaves,
                            int points, Rng& rng, Real h = 1e-5);

}  // namespace avdet
