#include <doctest.h>

#include "gslab/nn.hpp"
#include "gslab/optim.hpp"
#include "gslab/losses.hpp"
#include "gslab/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <vector>

using namespace gslab;

namespace {

void fill_random(Tensor& t, Rng& rng, Scalar scale = 1.0) {
  for (Index i = 0; i < t.size(); ++i) t.array()[i] = scale * rng.normal();
}

// Direct quadruple-loop convolution, the oracle for the GEMM path.
Tensor conv_naive(const Tensor& x, const Tensor& w, const VectorX& b, Index stride,
                  Index pad) {
  const Index n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index c_out = w.dim(0), k = w.dim(2);
  const Index h_out = (h + 2 * pad - k) / stride + 1;
  const Index w_out = (wd + 2 * pad - k) / stride + 1;
  Tensor y({n, c_out, h_out, w_out});
  for (Index i = 0; i < n; ++i) {
    for (Index o = 0; o < c_out; ++o) {
      for (Index oy = 0; oy < h_out; ++oy) {
        for (Index ox = 0; ox < w_out; ++ox) {
          Scalar acc = b[o];
          for (Index c = 0; c < c_in; ++c) {
            for (Index ky = 0; ky < k; ++ky) {
              for (Index kx = 0; kx < k; ++kx) {
                const Index iy = oy * stride - pad + ky;
                const Index ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += x(i, c, iy, ix) * w(o, c, ky, kx);
              }
            }
          }
          y(i, o, oy, ox) = acc;
        }
      }
    }
  }
  return y;
}

Scalar max_abs_diff(const Tensor& a, const Tensor& b) {
  return (a.array() - b.array()).abs().maxCoeff();
}

Scalar rel_err(Scalar analytic, Scalar numeric) {
  const Scalar denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

// Loss used by the gradient checks: forward, one head, loss, backward.
enum class CheckPath { classifier, triplet, contrastive };

Scalar model_loss(MicroResNet& m, const Tensor& x, const std::vector<int>& labels,
                  CheckPath path, bool backward = false) {
  ForwardCache cache;
  ForwardResult r = micro_resnet_forward_train(m, x, cache);
  const Index n = x.dim(0);
  if (path == CheckPath::classifier) {
    LossValue loss = cross_entropy(*r.logits, labels);
    if (backward) {
      MatrixX d_feat = classifier_backward(m, cache.features, loss.grad);
      micro_resnet_backward(m, cache, d_feat);
    }
    return loss.value;
  }
  if (path == CheckPath::triplet) {
    const Index third = n / 3;
    MatrixX e = embed_head_forward(m, r.features);
    TripletLossValue loss = triplet_loss(e.topRows(third), e.middleRows(third, third),
                                         e.bottomRows(third));
    if (backward) {
      MatrixX d_embed = MatrixX::Zero(e.rows(), e.cols());
      d_embed.topRows(third) = loss.grad_anchor;
      d_embed.middleRows(third, third) = loss.grad_positive;
      d_embed.bottomRows(third) = loss.grad_negative;
      MatrixX d_feat = embed_head_backward(m, cache.features, d_embed);
      micro_resnet_backward(m, cache, d_feat);
    }
    return loss.value;
  }
  ProjCache pc;
  MatrixX z = proj_head_forward(m, r.features, pc);
  LossValue loss = info_nce(z, 0.07);
  if (backward) {
    MatrixX d_feat = proj_head_backward(m, r.features, pc, loss.grad);
    micro_resnet_backward(m, cache, d_feat);
  }
  return loss.value;
}

void run_grad_check(MicroResNet& m, const Tensor& x, const std::vector<int>& labels,
                    CheckPath path) {
  zero_grads(m);
  model_loss(m, x, labels, path, true);

  auto params = collect_params(m);
  // small step: a coarser one can push activations across relu kinks when a
  // batchnorm shift parameter moves a whole feature map
  const Scalar eps = 1e-5;
  Scalar worst = 0.0;
  for (ParamRef& p : params) {
    // probe a handful of entries per parameter to keep the suite quick
    const Index probes = std::min<Index>(p.size, 4);
    for (Index t = 0; t < probes; ++t) {
      const Index j = (t * 7919) % p.size;
      const Scalar saved = p.value[j];
      p.value[j] = saved + eps;
      const Scalar lp = model_loss(m, x, labels, path);
      p.value[j] = saved - eps;
      const Scalar lm = model_loss(m, x, labels, path);
      p.value[j] = saved;
      const Scalar numeric = (lp - lm) / (2.0 * eps);
      // absolute floor absorbs central-difference roundoff on tiny gradients
      if (std::abs(p.grad[j] - numeric) <= 1e-8) continue;
      worst = std::max(worst, rel_err(p.grad[j], numeric));
    }
  }
  CHECK(worst < 1e-4);
}

}  // namespace

TEST_CASE("rng streams are deterministic and well distributed") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(42), d(43);
  bool all_equal = true;
  for (int i = 0; i < 10; ++i) all_equal &= (c.next_u64() == d.next_u64());
  CHECK_FALSE(all_equal);

  Rng e(7);
  Scalar sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const Scalar u = e.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(sum / 100000.0 == doctest::Approx(0.5).epsilon(0.01));

  Rng f(11);
  Scalar mean = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Scalar v = f.normal();
    mean += v;
    sq += v * v;
  }
  mean /= n;
  CHECK(std::abs(mean) < 0.02);
  CHECK(sq / n - mean * mean == doctest::Approx(1.0).epsilon(0.02));

  // derived streams differ per tag
  Rng g1 = Rng::derive(5, {1, 0});
  Rng g2 = Rng::derive(5, {2, 0});
  Rng g3 = Rng::derive(5, {1, 0});
  CHECK(g1.next_u64() == g3.next_u64());
  CHECK(g1.next_u64() != g2.next_u64());
}

TEST_CASE("tensor shape accounting") {
  Tensor t({2, 3, 4, 5});
  CHECK(t.size() == 120);
  CHECK(t.dim(2) == 4);
  t(1, 2, 3, 4) = 7.5;
  CHECK(t.array()[119] == 7.5);
  CHECK_THROWS_AS(t.mat(7, 17), std::invalid_argument);
  CHECK(t.mat(6, 20).rows() == 6);
}

TEST_CASE("conv2d matches the direct-sum oracle") {
  Rng rng(123);
  for (auto [stride, pad, k] : std::vector<std::array<Index, 3>>{
           {1, 1, 3}, {2, 0, 3}, {1, 0, 1}, {2, 1, 3}}) {
    Tensor x({2, 3, 9, 7});
    Tensor w({4, 3, k, k});
    fill_random(x, rng);
    fill_random(w, rng);
    VectorX b(4);
    for (Index i = 0; i < 4; ++i) b[i] = rng.normal();

    const Tensor got = conv2d_forward(x, w, b, stride, pad);
    const Tensor want = conv_naive(x, w, b, stride, pad);
    CHECK(got.same_shape(want));
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(321);
  Tensor x({2, 2, 5, 5});
  Tensor w({3, 2, 3, 3});
  fill_random(x, rng);
  fill_random(w, rng);
  VectorX b = VectorX::Zero(3);

  // scalar objective: sum of outputs weighted by a fixed random tensor
  Tensor weights({2, 3, 5, 5});
  fill_random(weights, rng);
  auto objective = [&](const Tensor& xx, const Tensor& ww) {
    const Tensor y = conv2d_forward(xx, ww, b, 1, 1);
    return (y.array() * weights.array()).sum();
  };

  Conv2dGrads g = conv2d_backward(x, w, 1, 1, weights);
  const Scalar eps = 1e-4;
  for (Index j = 0; j < x.size(); j += 11) {
    Tensor xp = x, xm = x;
    xp.array()[j] += eps;
    xm.array()[j] -= eps;
    const Scalar numeric = (objective(xp, w) - objective(xm, w)) / (2 * eps);
    CHECK(rel_err(g.dx.array()[j], numeric) < 1e-6);
  }
  for (Index j = 0; j < w.size(); j += 7) {
    Tensor wp = w, wm = w;
    wp.array()[j] += eps;
    wm.array()[j] -= eps;
    const Scalar numeric = (objective(x, wp) - objective(x, wm)) / (2 * eps);
    CHECK(rel_err(g.dw.array()[j], numeric) < 1e-6);
  }
}

TEST_CASE("conv2d is invariant to the worker count") {
  Rng rng(55);
  Tensor x({5, 3, 8, 8});
  Tensor w({4, 3, 3, 3});
  fill_random(x, rng);
  fill_random(w, rng);
  VectorX b(4);
  for (Index i = 0; i < 4; ++i) b[i] = rng.normal();

  setenv("GSLAB_THREADS", "1", 1);
  const Tensor y1 = conv2d_forward(x, w, b, 1, 1);
  const Conv2dGrads g1 = conv2d_backward(x, w, 1, 1, y1);
  setenv("GSLAB_THREADS", "4", 1);
  const Tensor y4 = conv2d_forward(x, w, b, 1, 1);
  const Conv2dGrads g4 = conv2d_backward(x, w, 1, 1, y1);
  setenv("GSLAB_THREADS", "1", 1);

  CHECK(max_abs_diff(y1, y4) == 0.0);
  CHECK(max_abs_diff(g1.dx, g4.dx) == 0.0);
  CHECK(max_abs_diff(g1.dw, g4.dw) == 0.0);
  CHECK((g1.db - g4.db).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("batchnorm2d train normalizes and tracks running stats") {
  Rng rng(9);
  Tensor x({4, 2, 3, 3});
  fill_random(x, rng, 2.0);
  x.array() += 1.5;

  VectorX gamma = VectorX::Ones(2), beta = VectorX::Zero(2);
  VectorX rm = VectorX::Zero(2), rv = VectorX::Ones(2);
  BatchNormCache cache;
  const Tensor y = batchnorm2d_train(x, gamma, beta, rm, rv, 0.1, 1e-5, cache);

  const Index m = 4 * 3 * 3;
  for (Index c = 0; c < 2; ++c) {
    Scalar mean = 0.0, var = 0.0, batch_mean = 0.0, batch_var = 0.0;
    for (Index i = 0; i < 4; ++i) {
      for (Index p = 0; p < 9; ++p) {
        mean += y.array()[(i * 2 + c) * 9 + p];
        batch_mean += x.array()[(i * 2 + c) * 9 + p];
      }
    }
    mean /= m;
    batch_mean /= m;
    for (Index i = 0; i < 4; ++i) {
      for (Index p = 0; p < 9; ++p) {
        var += std::pow(y.array()[(i * 2 + c) * 9 + p] - mean, 2);
        batch_var += std::pow(x.array()[(i * 2 + c) * 9 + p] - batch_mean, 2);
      }
    }
    var /= m;
    batch_var /= m;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    // running = 0.9 * init + 0.1 * batch, unbiased variance
    CHECK(rm[c] == doctest::Approx(0.1 * batch_mean));
    CHECK(rv[c] == doctest::Approx(0.9 + 0.1 * batch_var * m / (m - 1)));
  }

  // eval with running stats equal to batch stats reproduces normalization
  VectorX rm2(2), rv2(2);
  for (Index c = 0; c < 2; ++c) {
    Scalar bm = 0.0;
    for (Index i = 0; i < 4; ++i) {
      for (Index p = 0; p < 9; ++p) bm += x.array()[(i * 2 + c) * 9 + p];
    }
    bm /= m;
    Scalar bv = 0.0;
    for (Index i = 0; i < 4; ++i) {
      for (Index p = 0; p < 9; ++p) bv += std::pow(x.array()[(i * 2 + c) * 9 + p] - bm, 2);
    }
    rm2[c] = bm;
    rv2[c] = bv / m;
  }
  const Tensor ye = batchnorm2d_eval(x, gamma, beta, rm2, rv2, 1e-5);
  CHECK(max_abs_diff(ye, y) < 1e-9);

  Tensor tiny({1, 2, 1, 1});
  BatchNormCache c2;
  CHECK_THROWS_AS(batchnorm2d_train(tiny, gamma, beta, rm, rv, 0.1, 1e-5, c2),
                  std::invalid_argument);
}

TEST_CASE("micro_resnet classifier gradients match finite differences") {
  MicroResNetConfig cfg;
  cfg.in_channels = 2;
  cfg.widths = {2, 3};
  cfg.input_side = 8;
  cfg.num_classes = 4;
  MicroResNet m = make_micro_resnet(cfg, 77);

  Rng rng(1001);
  Tensor x({3, 2, 8, 8});
  fill_random(x, rng);
  std::vector<int> labels = {0, 2, 3};
  run_grad_check(m, x, labels, CheckPath::classifier);
}

TEST_CASE("micro_resnet triplet-path gradients match finite differences") {
  MicroResNetConfig cfg;
  cfg.in_channels = 2;
  cfg.widths = {2, 3};
  cfg.input_side = 8;
  cfg.embed_dim = 2;
  MicroResNet m = make_micro_resnet(cfg, 78);

  Rng rng(1002);
  Tensor x({9, 2, 8, 8});
  fill_random(x, rng);
  run_grad_check(m, x, {}, CheckPath::triplet);
}

TEST_CASE("micro_resnet contrastive-path gradients match finite differences") {
  MicroResNetConfig cfg;
  cfg.in_channels = 2;
  cfg.widths = {2, 3};
  cfg.input_side = 8;
  cfg.proj_dim = 3;
  MicroResNet m = make_micro_resnet(cfg, 79);

  Rng rng(1003);
  Tensor x({4, 2, 8, 8});
  fill_random(x, rng);
  run_grad_check(m, x, {}, CheckPath::contrastive);
}

TEST_CASE("micro_resnet eval mode is pure and backward demands a cache") {
  MicroResNetConfig cfg;
  cfg.num_classes = 3;
  MicroResNet m = make_micro_resnet(cfg, 5);

  Rng rng(6);
  Tensor x({2, 3, 32, 32});
  fill_random(x, rng);

  auto buffers = collect_buffers(m);
  std::vector<VectorX> before;
  for (auto& b : buffers) before.emplace_back(ConstMapVector(b.value, b.size));

  const ForwardResult r1 = micro_resnet_forward_eval(m, x);
  const ForwardResult r2 = micro_resnet_forward_eval(m, x);
  CHECK((r1.features - r2.features).cwiseAbs().maxCoeff() == 0.0);

  for (std::size_t i = 0; i < buffers.size(); ++i) {
    CHECK((ConstMapVector(buffers[i].value, buffers[i].size) - before[i])
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }

  ForwardCache empty;
  CHECK_THROWS_AS(micro_resnet_backward(m, empty, r1.features), std::logic_error);
}

TEST_CASE("micro_resnet forward is deterministic in the seed") {
  MicroResNetConfig cfg;
  cfg.num_classes = 5;
  MicroResNet a = make_micro_resnet(cfg, 99);
  MicroResNet b = make_micro_resnet(cfg, 99);
  MicroResNet c = make_micro_resnet(cfg, 100);

  auto pa = collect_params(a);
  auto pb = collect_params(b);
  auto pc = collect_params(c);
  REQUIRE(pa.size() == pb.size());
  bool same_ab = true, same_ac = true;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    same_ab &= (ConstMapVector(pa[i].value, pa[i].size) -
                ConstMapVector(pb[i].value, pb[i].size)).cwiseAbs().maxCoeff() == 0.0;
    same_ac &= (ConstMapVector(pa[i].value, pa[i].size) -
                ConstMapVector(pc[i].value, pc[i].size)).cwiseAbs().maxCoeff() == 0.0;
  }
  CHECK(same_ab);
  CHECK_FALSE(same_ac);
}

TEST_CASE("adam follows the bias-corrected update") {
  // single scalar parameter, constant gradient 1
  Scalar value = 0.0, grad = 1.0;
  std::vector<ParamRef> params = {{"w", &value, &grad, {1}, 1}};
  OptimizerState opt = make_optimizer(OptimizerKind::adam, 0.001, params);

  optimizer_step(opt, params);
  // m-hat = 1, v-hat = 1 after the first step
  CHECK(value == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));

  const Scalar after_first = value;
  optimizer_step(opt, params);
  const Scalar m2 = (0.9 * 0.1 + 0.1) / (1 - 0.81);
  const Scalar v2 = (0.999 * 0.001 + 0.001) / (1 - 0.998001);
  CHECK(value == doctest::Approx(after_first - 0.001 * m2 / (std::sqrt(v2) + 1e-8))
                     .epsilon(1e-12));

  grad = std::nan("");
  CHECK_THROWS_AS(optimizer_step(opt, params), std::runtime_error);
}

TEST_CASE("sgd applies the plain update") {
  Scalar value = 1.0, grad = 0.25;
  std::vector<ParamRef> params = {{"w", &value, &grad, {1}, 1}};
  OptimizerState opt = make_optimizer(OptimizerKind::sgd, 0.1, params);
  optimizer_step(opt, params);
  CHECK(value == doctest::Approx(1.0 - 0.1 * 0.25).epsilon(1e-15));
}

TEST_CASE("lr schedules") {
  LrSchedule step;
  step.kind = ScheduleKind::step_decay;
  step.base_lr = 0.02;
  step.step_epochs = 10;
  step.gamma = 0.1;
  for (Index e = 0; e < 10; ++e) CHECK(lr_at(step, e) == doctest::Approx(0.02));
  CHECK(lr_at(step, 10) == doctest::Approx(0.002));
  CHECK(lr_at(step, 20) == doctest::Approx(0.0002));
  CHECK_THROWS_AS(lr_at(step, -1), std::invalid_argument);

  LrSchedule cos;
  cos.kind = ScheduleKind::cosine;
  cos.base_lr = 0.0003;
  cos.t_max = 100;
  cos.eta_min = 0.0;
  CHECK(lr_at(cos, 0) == doctest::Approx(0.0003));
  CHECK(lr_at(cos, 50) == doctest::Approx(0.00015));
  CHECK(lr_at(cos, 100) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(lr_at(cos, 101), std::invalid_argument);
}
