// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "avdet/fusion.hpp"
#include "avdet/gradcheck.hpp"

using namespace avdet;

namespace {

Tensor randn_vec(Index n, Rng& rng, bool grad = false) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return Tensor::from_flat({n}, std::move(v), grad);
}

struct OracleLayerOut {
  std::vector<double> h_v, h_a;
  std::vector<double> beta_ff, beta_fa, beta_af, beta_aa, w_f_head, w_a_head;
  double w_f = 0, w_a = 0;
};

// Straight-line reference for one fusion layer, exp-based two-way softmax.
OracleLayerOut oracle_layer(const std::vector<double>& f, const std::vector<double>& a,
                            const MhcaLayerParams& p, Index n_heads, Real eps, bool received) {
  const Index D = static_cast<Index>(f.size());
  const Index dh = D / n_heads;
  auto lin = [&](const LinearLayer& l, const std::vector<double>& x) {
    std::vector<double> y(D, 0.0);
    for (Index o = 0; o < D; ++o) {
      y[o] = l.bias.flat()[o];
      for (Index i = 0; i < D; ++i) y[o] += x[i] * l.weight.flat()[i * D + o];
    }
    return y;
  };
  const auto qf = lin(p.query, f), qa = lin(p.query, a);
  const auto kf = lin(p.key, f), ka = lin(p.key, a);
  const auto vf = lin(p.value, f), va = lin(p.value, a);

  OracleLayerOut out;
  std::vector<double> cat_f(D), cat_a(D);
  double wf_sum = 0, wa_sum = 0;
  for (Index h = 0; h < n_heads; ++h) {
    auto dot = [&](const std::vector<double>& x, const std::vector<double>& y) {
      double s = 0;
      for (Index c = 0; c < dh; ++c) s += x[h * dh + c] * y[h * dh + c];
      return s / std::sqrt(static_cast<double>(dh));
    };
    auto two_softmax = [](double s1, double s2) {
      const double m = std::max(s1, s2);
      const double e1 = std::exp(s1 - m), e2 = std::exp(s2 - m);
      return e1 / (e1 + e2);
    };
    const double b_ff = two_softmax(dot(qf, kf), dot(qf, ka));
    const double b_fa = 1.0 - b_ff;
    const double b_aa = two_softmax(dot(qa, ka), dot(qa, kf));
    const double b_af = 1.0 - b_aa;
    const double wf = received ? b_ff + b_af : b_ff + b_fa;
    const double wa = received ? b_aa + b_fa : b_aa + b_af;
    for (Index c = 0; c < dh; ++c) {
      cat_f[h * dh + c] = wf * vf[h * dh + c];
      cat_a[h * dh + c] = wa * va[h * dh + c];
    }
    out.beta_ff.push_back(b_ff);
    out.beta_fa.push_back(b_fa);
    out.beta_af.push_back(b_af);
    out.beta_aa.push_back(b_aa);
    out.w_f_head.push_back(wf);
    out.w_a_head.push_back(wa);
    wf_sum += wf;
    wa_sum += wa;
  }
  out.w_f = wf_sum / n_heads;
  out.w_a = wa_sum / n_heads;

  auto norm_res = [&](const std::vector<double>& mh, const std::vector<double>& x) {
    std::vector<double> proj = lin(p.output, mh);
    for (Index i = 0; i < D; ++i) proj[i] += x[i];
    double mu = 0;
    for (double v : proj) mu += v;
    mu /= D;
    double var = 0;
    for (double v : proj) var += (v - mu) * (v - mu);
    var /= D;
    std::vector<double> y(D);
    for (Index i = 0; i < D; ++i) {
      y[i] = p.ln_gamma.flat()[i] * (proj[i] - mu) / std::sqrt(var + eps) + p.ln_beta.flat()[i];
    }
    return y;
  };
  out.h_v = norm_res(cat_f, f);
  out.h_a = norm_res(cat_a, a);
  return out;
}

}  // namespace

TEST_CASE("identical inputs split attention evenly") {
  Rng rng(1);
  DwfParams p = DwfParams::init(8, 4, rng);
  Tensor f = randn_vec(8, rng);
  MhcaResult r = mhca_layer(f, f, p.layers[0], 4, p.ln_eps, WeightMode::received);
  for (const HeadWeights& hw : r.logged.heads) {
    CHECK(hw.beta_ff == 0.5);
    CHECK(hw.beta_fa == 0.5);
    CHECK(hw.beta_aa == 0.5);
    CHECK(hw.beta_af == 0.5);
  }
}

TEST_CASE("attention masses pair to exactly one across random configurations") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Index heads = 1 + static_cast<Index>(rng.below(4));
    const Index dim = heads * (1 + static_cast<Index>(rng.below(5)));
    Rng prng = rng.fork(trial);
    DwfParams p = DwfParams::init(dim, heads, prng);
    Tensor f = randn_vec(dim, prng);
    Tensor a = randn_vec(dim, prng);
    MhcaResult r = mhca_layer(f, a, p.layers[0], heads, p.ln_eps, WeightMode::received);
    for (const HeadWeights& hw : r.logged.heads) {
      CHECK(hw.beta_ff > 0.0);
      CHECK(hw.beta_ff < 1.0);
      CHECK(std::abs(hw.beta_ff + hw.beta_fa - 1.0) <= 1e-12);
      CHECK(std::abs(hw.beta_aa + hw.beta_af - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("literal weights collapse to exactly one") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Rng prng = rng.fork(trial);
    DwfParams p = DwfParams::init(8, 2, prng, WeightMode::literal);
    Tensor f = randn_vec(8, prng);
    Tensor a = randn_vec(8, prng);
    MhcaResult r = mhca_layer(f, a, p.layers[0], 2, p.ln_eps, WeightMode::literal);
    for (const HeadWeights& hw : r.logged.heads) {
      CHECK(hw.w_f == 1.0);
      CHECK(hw.w_a == 1.0);
    }
    CHECK(r.w_f.item() == 1.0);
    CHECK(r.w_a.item() == 1.0);
  }
}

TEST_CASE("received weights re-partition a total mass of two") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Rng prng = rng.fork(trial);
    const Index heads = 1 + static_cast<Index>(prng.below(4));
    const Index dim = heads * 2;
    DwfParams p = DwfParams::init(dim, heads, prng);
    Tensor f = randn_vec(dim, prng);
    Tensor a = randn_vec(dim, prng);
    MhcaResult r = mhca_layer(f, a, p.layers[0], heads, p.ln_eps, WeightMode::received);
    CHECK(std::abs(r.w_f.item() + r.w_a.item() - 2.0) <= 1e-12);
  }
}

TEST_CASE("one fusion layer matches the scalar reference") {
  Rng rng(5);
  const Index D = 4, H = 2;
  DwfParams p = DwfParams::init(D, H, rng);
  for (Index i = 0; i < D; ++i) {
    p.layers[0].ln_gamma.leaf_values()[i] = rng.uniform(0.5, 1.5);
    p.layers[0].ln_beta.leaf_values()[i] = rng.uniform(-0.2, 0.2);
  }
  Tensor f = randn_vec(D, rng);
  Tensor a = randn_vec(D, rng);
  MhcaResult r = mhca_layer(f, a, p.layers[0], H, p.ln_eps, WeightMode::received);

  std::vector<double> fv(f.flat().data(), f.flat().data() + D);
  std::vector<double> av(a.flat().data(), a.flat().data() + D);
  OracleLayerOut o = oracle_layer(fv, av, p.layers[0], H, p.ln_eps, true);
  for (Index h = 0; h < H; ++h) {
    CHECK(std::abs(r.logged.heads[h].beta_ff - o.beta_ff[h]) < 1e-10);
    CHECK(std::abs(r.logged.heads[h].beta_af - o.beta_af[h]) < 1e-10);
    CHECK(std::abs(r.logged.heads[h].w_f - o.w_f_head[h]) < 1e-10);
  }
  CHECK(std::abs(r.w_f.item() - o.w_f) < 1e-10);
  CHECK(std::abs(r.w_a.item() - o.w_a) < 1e-10);
  for (Index i = 0; i < D; ++i) {
    CHECK(std::abs(r.h_v.flat()[i] - o.h_v[i]) < 1e-10);
    CHECK(std::abs(r.h_a.flat()[i] - o.h_a[i]) < 1e-10);
  }
}

TEST_CASE("two stacked layers match the scalar reference end to end") {
  Rng rng(6);
  const Index D = 4, H = 2;
  DwfParams p = DwfParams::init(D, H, rng);
  Tensor f = randn_vec(D, rng);
  Tensor a = randn_vec(D, rng);
  DwfResult r = dwf_forward(f, a, p);

  std::vector<double> fv(f.flat().data(), f.flat().data() + D);
  std::vector<double> av(a.flat().data(), a.flat().data() + D);
  OracleLayerOut l1 = oracle_layer(fv, av, p.layers[0], H, p.ln_eps, true);
  OracleLayerOut l2 = oracle_layer(l1.h_v, l1.h_a, p.layers[1], H, p.ln_eps, true);
  for (Index i = 0; i < D; ++i) {
    CHECK(std::abs(r.fused.flat()[i] - l2.w_f * fv[i]) < 1e-10);
    CHECK(std::abs(r.fused.flat()[D + i] - l2.w_a * av[i]) < 1e-10);
  }
  CHECK(std::abs(r.w_f.item() - l2.w_f) < 1e-10);
  CHECK(std::abs(r.logged.layers[0].w_f - l1.w_f) < 1e-10);
  CHECK(r.fused.shape() == Shape{2 * D});
}

TEST_CASE("literal fusion is bit-compatible with plain concatenation") {
  Rng rng(7);
  DwfParams p = DwfParams::init(8, 4, rng, WeightMode::literal);
  Tensor f = randn_vec(8, rng);
  Tensor a = randn_vec(8, rng);
  DwfResult r = dwf_forward(f, a, p);
  for (Index i = 0; i < 8; ++i) {
    CHECK(r.fused.flat()[i] == f.flat()[i]);
    CHECK(r.fused.flat()[8 + i] == a.flat()[i]);
  }
}

TEST_CASE("zero summary vectors fuse to zero with finite weights") {
  Rng rng(8);
  DwfParams p = DwfParams::init(8, 2, rng);
  Tensor zero = Tensor::zeros({8});
  DwfResult r = dwf_forward(zero, zero, p);
  for (Index i = 0; i < 16; ++i) CHECK(r.fused.flat()[i] == 0.0);
  CHECK(std::isfinite(r.w_f.item()));
  CHECK(std::isfinite(r.w_a.item()));
}

TEST_CASE("swapping the modalities swaps the weights and fused halves") {
  Rng rng(9);
  DwfParams p = DwfParams::init(8, 2, rng);
  Tensor f = randn_vec(8, rng);
  Tensor a = randn_vec(8, rng);
  DwfResult fa = dwf_forward(f, a, p);
  DwfResult af = dwf_forward(a, f, p);
  CHECK(fa.w_f.item() == af.w_a.item());
  CHECK(fa.w_a.item() == af.w_f.item());
  for (Index i = 0; i < 8; ++i) {
    CHECK(fa.fused.flat()[i] == af.fused.flat()[8 + i]);
    CHECK(fa.fused.flat()[8 + i] == af.fused.flat()[i]);
  }
}

TEST_CASE("fusion validates shapes and head divisibility") {
  Rng rng(10);
  DwfParams p = DwfParams::init(8, 2, rng);
  CHECK_THROWS_AS(mhca_layer(Tensor::zeros({8}), Tensor::zeros({6}), p.layers[0], 2, 1e-5,
                             WeightMode::received),
                  ShapeError);
  CHECK_THROWS_AS(mhca_layer(Tensor::zeros({8}), Tensor::zeros({8}), p.layers[0], 3, 1e-5,
                             WeightMode::received),
                  ConfigError);
  CHECK_THROWS_AS(DwfParams::init(8, 3, rng), ConfigError);
}

TEST_CASE("classifier head maps zero parameters to one half") {
  Rng rng(11);
  ClassifierHead head = ClassifierHead::init(16, rng);
  head.lin.weight.leaf_values().setZero();
  Tensor v = randn_vec(16, rng);
  CHECK(classify(v, head).item() == 0.5);
}

TEST_CASE("classifier bias alone reproduces the closed-form sigmoid") {
  Rng rng(12);
  ClassifierHead head = ClassifierHead::init(16, rng);
  head.lin.weight.leaf_values().setZero();
  head.lin.bias.leaf_values()[0] = 10.0;
  Tensor v = randn_vec(16, rng);
  CHECK(classify(v, head).item() == doctest::Approx(0.9999546021312976).epsilon(1e-12));
}

TEST_CASE("classifier gradient with respect to its input matches finite differences") {
  Rng rng(13);
  ClassifierHead head = ClassifierHead::init(16, rng);
  std::vector<Tensor> leaves = {randn_vec(16, rng, true)};
  const Real err =
      fd_max_rel_err([&] { return classify(leaves[0], head); }, leaves);
  CHECK(err < 1e-6);
}

TEST_CASE("gradient flows from the probability back to both summary vectors") {
  Rng rng(14);
  const Index D = 8;
  DwfParams p = DwfParams::init(D, 2, rng);
  ClassifierHead head = ClassifierHead::init(2 * D, rng);
  std::vector<Tensor> leaves = {randn_vec(D, rng, true), randn_vec(D, rng, true)};
  ParamList params;
  p.collect("dwf", params);
  head.collect("head", params);
  for (const NamedParam& np : params) leaves.push_back(np.tensor);
  const Real err = fd_max_rel_err(
      [&] {
        DwfResult r = dwf_forward(leaves[0], leaves[1], p);
        return classify(r.fused, head);
      },
      leaves);
  CHECK(err < 1e-5);
}

TEST_CASE("classifier rejects mismatched input lengths") {
  Rng rng(15);
  ClassifierHead head = ClassifierHead::init(16, rng);
  CHECK_THROWS_AS(classify(Tensor::zeros({8}), head), ShapeError);
}
