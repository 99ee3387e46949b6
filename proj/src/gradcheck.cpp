// SPDX-License-Identifier: Apache-2.0

#include "avdet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "avdet/nn.hpp"
#include "avdet/ops.hpp"

namespace avdet {

Real fd_max_rel_err(const std::function<Tensor()>& f, std::span<Tensor> leaves, Real h) {
  for (Tensor& t : leaves) t.zero_grad();
  Tensor y = f();
  if (y.numel() != 1) throw ShapeError("finite-difference harness requires a scalar objective");
  backward(y);

  std::vector<Vec> analytic;
  analytic.reserve(leaves.size());
  for (Tensor& t : leaves) {
    analytic.push_back(t.has_grad() ? t.grad() : Vec(Vec::Zero(t.numel())));
  }

  Real worst = 0;
  NoGradGuard ng;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Vec& vals = leaves[li].leaf_values();
    for (Index i = 0; i < vals.size(); ++i) {
      const Real orig = vals[i];
      vals[i] = orig + h;
      const Real up = f().item();
      vals[i] = orig - h;
      const Real down = f().item();
      vals[i] = orig;
      const Real numeric = (up - down) / (2 * h);
      worst = std::max(worst, relative_error(analytic[li][i], numeric));
    }
    leaves[li].zero_grad();
  }
  return worst;
}

Real fd_sampled_max_rel_err(const std::function<Tensor()>& f, std::span<Tensor> leaves,
                            int points, Rng& rng, Real h) {
  if (points <= 0) throw ConfigError("finite-difference sampling needs at least one point");
  Index total = 0;
  for (const Tensor& t : leaves) total += t.numel();
  if (total == 0) throw EmptyInputError("finite-difference sampling over empty leaves");

  for (Tensor& t : leaves) t.zero_grad();
  Tensor y = f();
  if (y.numel() != 1) throw ShapeError("finite-difference harness requires a scalar objective");
  backward(y);

  std::vector<Vec> analytic;
  analytic.reserve(leaves.size());
  for (Tensor& t : leaves) {
    analytic.push_back(t.has_grad() ? t.grad() : Vec(Vec::Zero(t.numel())));
    t.zero_grad();
  }

  Real worst = 0;
  NoGradGuard ng;
  for (int p = 0; p < points; ++p) {
    Index flat = static_cast<Index>(rng.below(static_cast<std::uint64_t>(total)));
    size_t li = 0;
    while (flat >= leaves[li].numel()) {
      flat -= leaves[li].numel();
      ++li;
    }
    Vec& vals = leaves[li].leaf_values();
    const Real orig = vals[flat];
    vals[flat] = orig + h;
    const Real up = f().item();
    vals[flat] = orig - h;
    const Real down = f().item();
    vals[flat] = orig;
    const Real numeric = (up - down) / (2 * h);
    worst = std::max(worst, relative_error(analytic[li][flat], numeric));
  }
  return worst;
}

namespace {

Tensor randn(Shape shape, Rng& rng) {
  Vec v(shape_numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  return Tensor::from_flat(std::move(shape), std::move(v), /*requires_grad=*/true);
}

/// Random fixed projection turning a multi-output op into a scalar objective.
Tensor project(const Tensor& y, const Vec& w) {
  return mean_all(mul(y, Tensor::from_flat(y.shape(), w)));
}

Vec random_weights(Index n, Rng& rng) {
  Vec w(n);
  for (Index i = 0; i < n; ++i) w[i] = rng.normal();
  return w;
}

}  // namespace

Real run_op_gradient_checks(std::ostream& out, std::uint64_t seed, int points) {
  Rng root(seed);
  Real suite_worst = 0;
  std::uint64_t stream = 0;

  auto report = [&](const char* name, const std::function<Real(Rng&)>& one_point) {
    Real worst = 0;
    for (int p = 0; p < points; ++p) {
      Rng rng = root.fork(stream * 1024 + static_cast<std::uint64_t>(p));
      worst = std::max(worst, one_point(rng));
    }
    ++stream;
    out << "  grad " << std::left << std::setw(24) << name << " max rel err "
        << std::scientific << std::setprecision(3) << worst << "\n";
    suite_worst = std::max(suite_worst, worst);
  };

  report("matmul", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({3, 4}, rng), randn({4, 2}, rng)};
    const Vec w = random_weights(6, rng);
    return fd_max_rel_err(
        [&] { return project(matmul(leaves[0], leaves[1]), w); }, leaves);
  });

  report("matmul_vector", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({4}, rng), randn({4, 3}, rng), randn({3}, rng)};
    return fd_max_rel_err(
        [&] { return matmul(matmul(leaves[0], leaves[1]), leaves[2]); }, leaves);
  });

  report("transpose", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({3, 4}, rng)};
    const Vec w = random_weights(12, rng);
    return fd_max_rel_err([&] { return project(transpose(leaves[0]), w); }, leaves);
  });

  report("add_sub_mul", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({3, 5}, rng), randn({3, 5}, rng), randn({3, 5}, rng)};
    const Vec w = random_weights(15, rng);
    return fd_max_rel_err(
        [&] { return project(mul(sub(add(leaves[0], leaves[1]), leaves[2]), leaves[1]), w); },
        leaves);
  });

  report("scale", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({4, 3}, rng)};
    const Vec w = random_weights(12, rng);
    return fd_max_rel_err([&] { return project(scale(leaves[0], 1.7), w); }, leaves);
  });

  report("scalar_mul", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({1}, rng), randn({3, 4}, rng)};
    const Vec w = random_weights(12, rng);
    return fd_max_rel_err([&] { return project(scalar_mul(leaves[0], leaves[1]), w); }, leaves);
  });

  report("add_row", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({4, 3}, rng), randn({3}, rng)};
    const Vec w = random_weights(12, rng);
    return fd_max_rel_err([&] { return project(add_row(leaves[0], leaves[1]), w); }, leaves);
  });

  report("softmax", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({4, 6}, rng)};
    const Vec w = random_weights(24, rng);
    return fd_max_rel_err([&] { return project(softmax(leaves[0]), w); }, leaves);
  });

  report("layer_norm", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({4, 8}, rng), randn({8}, rng), randn({8}, rng)};
    const Vec w = random_weights(32, rng);
    return fd_max_rel_err(
        [&] { return project(layer_norm(leaves[0], leaves[1], leaves[2], 1e-5), w); }, leaves);
  });

  report("concat_slice", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({2, 3}, rng), randn({2, 3}, rng)};
    const Vec w = random_weights(8, rng);
    return fd_max_rel_err(
        [&] {
          std::vector<Tensor> parts = {leaves[0], leaves[1]};
          Tensor rows = concat_rows(parts);                   // {4, 3}
          Tensor cols = concat_cols(parts);                   // {2, 6}
          Tensor a = slice_rows(rows, 1, 2);                  // {2, 3}
          Tensor b = slice_cols(cols, 2, 3);                  // {2, 3}
          return project(concat_cols(std::vector<Tensor>{slice_cols(a, 0, 2),
                                                         slice_cols(b, 1, 2)}),
                         w);
        },
        leaves);
  });

  report("reshape", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({3, 4}, rng)};
    const Vec w = random_weights(12, rng);
    return fd_max_rel_err([&] { return project(reshape(leaves[0], {2, 6}), w); }, leaves);
  });

  report("sigmoid", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({3, 5}, rng)};
    const Vec w = random_weights(15, rng);
    return fd_max_rel_err([&] { return project(sigmoid(leaves[0]), w); }, leaves);
  });

  report("gelu", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({3, 5}, rng)};
    const Vec w = random_weights(15, rng);
    return fd_max_rel_err([&] { return project(gelu(leaves[0]), w); }, leaves);
  });

  report("log_floored", [](Rng& rng) {
    Vec v(12);
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(1e-3, 2.0);
    std::vector<Tensor> leaves = {Tensor::from_flat({3, 4}, std::move(v), true)};
    const Vec w = random_weights(12, rng);
    return fd_max_rel_err([&] { return project(log_floored(leaves[0], 1e-10), w); }, leaves);
  });

  report("mean_all", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({3, 7}, rng)};
    return fd_max_rel_err([&] { return mean_all(leaves[0]); }, leaves);
  });

  report("frame_rows", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({50}, rng)};
    Vec window(8);
    for (Index i = 0; i < 8; ++i) {
      window[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<Real>(i) / 8.0));
    }
    const Vec w = random_weights(11 * 8, rng);
    return fd_max_rel_err([&] { return project(frame_rows(leaves[0], 8, 4, window), w); },
                          leaves);
  });

  report("bce_with_logits", [](Rng& rng) {
    std::vector<Tensor> leaves = {randn({1}, rng)};
    const Real target = rng.uniform01() < 0.5 ? 0.0 : 1.0;
    return fd_max_rel_err([&] { return bce_with_logits(leaves[0], target); }, leaves);
  });

  report("self_attention", [](Rng& rng) {
    AttentionParams params = AttentionParams::init(4, rng);
    std::vector<Tensor> leaves = {randn({3, 4}, rng)};
    ParamList collected;
    params.collect("msa", collected);
    for (const NamedParam& p : collected) leaves.push_back(p.tensor);
    const Vec w = random_weights(12, rng);
    return fd_max_rel_err(
        [&] { return project(multi_head_self_attention(leaves[0], params, 2), w); }, leaves);
  });

  return suite_worst;
}

}  // namespace avdet
