#include "gslab/resnet.hpp"

#include "gslab/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace gslab {

namespace {

constexpr Scalar kBnMomentum = 0.1;
constexpr Scalar kBnEps = 1e-5;

ConvLayer make_conv(Index out, Index in, Index k) {
  ConvLayer c;
  c.w = Tensor({out, in, k, k});
  c.b = VectorX::Zero(out);
  c.gw = Tensor({out, in, k, k});
  c.gb = VectorX::Zero(out);
  return c;
}

BnLayer make_bn(Index c) {
  BnLayer bn;
  bn.gamma = VectorX::Ones(c);
  bn.beta = VectorX::Zero(c);
  bn.running_mean = VectorX::Zero(c);
  bn.running_var = VectorX::Ones(c);
  bn.ggamma = VectorX::Zero(c);
  bn.gbeta = VectorX::Zero(c);
  return bn;
}

LinearLayer make_linear(Index out, Index in) {
  LinearLayer l;
  l.w = MatrixX::Zero(out, in);
  l.b = VectorX::Zero(out);
  l.gw = MatrixX::Zero(out, in);
  l.gb = VectorX::Zero(out);
  return l;
}

void append_conv(std::vector<ParamRef>& out, const std::string& prefix, ConvLayer& c) {
  out.push_back({prefix + ".w", c.w.data(), c.gw.data(), c.w.shape(), c.w.size()});
  out.push_back({prefix + ".b", c.b.data(), c.gb.data(), {c.b.size()}, c.b.size()});
}

void append_bn(std::vector<ParamRef>& out, const std::string& prefix, BnLayer& bn) {
  out.push_back({prefix + ".gamma", bn.gamma.data(), bn.ggamma.data(),
                 {bn.gamma.size()}, bn.gamma.size()});
  out.push_back({prefix + ".beta", bn.beta.data(), bn.gbeta.data(),
                 {bn.beta.size()}, bn.beta.size()});
}

void append_linear(std::vector<ParamRef>& out, const std::string& prefix, LinearLayer& l) {
  out.push_back({prefix + ".w", l.w.data(), l.gw.data(), {l.w.rows(), l.w.cols()},
                 l.w.size()});
  out.push_back({prefix + ".b", l.b.data(), l.gb.data(), {l.b.size()}, l.b.size()});
}

void append_bn_buffers(std::vector<BufferRef>& out, const std::string& prefix, BnLayer& bn) {
  out.push_back({prefix + ".running_mean", bn.running_mean.data(),
                 {bn.running_mean.size()}, bn.running_mean.size()});
  out.push_back({prefix + ".running_var", bn.running_var.data(),
                 {bn.running_var.size()}, bn.running_var.size()});
}

Tensor block_forward_train(ResidualBlock& blk, const Tensor& x, BlockCache& c) {
  c.in = x;
  Tensor out = conv2d_forward(x, blk.conv1.w, blk.conv1.b, blk.stride, 1);
  out = batchnorm2d_train(out, blk.bn1.gamma, blk.bn1.beta, blk.bn1.running_mean,
                          blk.bn1.running_var, kBnMomentum, kBnEps, c.bn1);
  c.act1_in = out;
  c.act1_out = relu_forward(out);
  out = conv2d_forward(c.act1_out, blk.conv2.w, blk.conv2.b, 1, 1);
  out = batchnorm2d_train(out, blk.bn2.gamma, blk.bn2.beta, blk.bn2.running_mean,
                          blk.bn2.running_var, kBnMomentum, kBnEps, c.bn2);
  Tensor skip;
  if (blk.has_proj) {
    skip = conv2d_forward(x, blk.proj.w, blk.proj.b, blk.stride, 0);
    skip = batchnorm2d_train(skip, blk.proj_bn.gamma, blk.proj_bn.beta,
                             blk.proj_bn.running_mean, blk.proj_bn.running_var,
                             kBnMomentum, kBnEps, c.proj_bn);
  } else {
    skip = x;
  }
  out.array() += skip.array();
  c.sum = out;
  return relu_forward(out);
}

Tensor block_forward_eval(const ResidualBlock& blk, const Tensor& x) {
  Tensor out = conv2d_forward(x, blk.conv1.w, blk.conv1.b, blk.stride, 1);
  out = batchnorm2d_eval(out, blk.bn1.gamma, blk.bn1.beta, blk.bn1.running_mean,
                         blk.bn1.running_var, kBnEps);
  out = relu_forward(out);
  out = conv2d_forward(out, blk.conv2.w, blk.conv2.b, 1, 1);
  out = batchnorm2d_eval(out, blk.bn2.gamma, blk.bn2.beta, blk.bn2.running_mean,
                         blk.bn2.running_var, kBnEps);
  Tensor skip;
  if (blk.has_proj) {
    skip = conv2d_forward(x, blk.proj.w, blk.proj.b, blk.stride, 0);
    skip = batchnorm2d_eval(skip, blk.proj_bn.gamma, blk.proj_bn.beta,
                            blk.proj_bn.running_mean, blk.proj_bn.running_var, kBnEps);
  } else {
    skip = x;
  }
  out.array() += skip.array();
  return relu_forward(out);
}

// Returns the gradient with respect to the block input.
Tensor block_backward(ResidualBlock& blk, const BlockCache& c, const Tensor& d_out) {
  Tensor d_sum = relu_backward(c.sum, d_out);

  BatchNormGrads bn2 = batchnorm2d_backward(c.bn2, blk.bn2.gamma, d_sum);
  blk.bn2.ggamma += bn2.dgamma;
  blk.bn2.gbeta += bn2.dbeta;
  Conv2dGrads conv2 = conv2d_backward(c.act1_out, blk.conv2.w, 1, 1, bn2.dx);
  blk.conv2.gw.array() += conv2.dw.array();
  blk.conv2.gb += conv2.db;

  Tensor d_act1_in = relu_backward(c.act1_in, conv2.dx);
  BatchNormGrads bn1 = batchnorm2d_backward(c.bn1, blk.bn1.gamma, d_act1_in);
  blk.bn1.ggamma += bn1.dgamma;
  blk.bn1.gbeta += bn1.dbeta;
  Conv2dGrads conv1 = conv2d_backward(c.in, blk.conv1.w, blk.stride, 1, bn1.dx);
  blk.conv1.gw.array() += conv1.dw.array();
  blk.conv1.gb += conv1.db;

  Tensor d_in = conv1.dx;
  if (blk.has_proj) {
    BatchNormGrads pbn = batchnorm2d_backward(c.proj_bn, blk.proj_bn.gamma, d_sum);
    blk.proj_bn.ggamma += pbn.dgamma;
    blk.proj_bn.gbeta += pbn.dbeta;
    Conv2dGrads proj = conv2d_backward(c.in, blk.proj.w, blk.stride, 0, pbn.dx);
    blk.proj.gw.array() += proj.dw.array();
    blk.proj.gb += proj.db;
    d_in.array() += proj.dx.array();
  } else {
    d_in.array() += d_sum.array();
  }
  return d_in;
}

}  // namespace

MicroResNet make_micro_resnet(const MicroResNetConfig& config, std::uint64_t seed) {
  if (config.widths.empty()) throw std::invalid_argument("micro_resnet: widths must be non-empty");
  if (config.in_channels < 1) throw std::invalid_argument("micro_resnet: in_channels must be >= 1");
  for (Index w : config.widths) {
    if (w < 1) throw std::invalid_argument("micro_resnet: widths must be positive");
  }

  MicroResNet m;
  m.config = config;
  m.stem = make_conv(config.widths[0], config.in_channels, 3);
  m.stem_bn = make_bn(config.widths[0]);

  Index in_c = config.widths[0];
  for (std::size_t stage = 0; stage < config.widths.size(); ++stage) {
    const Index out_c = config.widths[stage];
    for (int b = 0; b < 2; ++b) {
      ResidualBlock blk;
      blk.stride = (b == 0 && stage > 0) ? 2 : 1;
      const Index c_in = (b == 0) ? in_c : out_c;
      blk.conv1 = make_conv(out_c, c_in, 3);
      blk.bn1 = make_bn(out_c);
      blk.conv2 = make_conv(out_c, out_c, 3);
      blk.bn2 = make_bn(out_c);
      blk.has_proj = (blk.stride != 1 || c_in != out_c);
      if (blk.has_proj) {
        blk.proj = make_conv(out_c, c_in, 1);
        blk.proj_bn = make_bn(out_c);
      }
      m.blocks.push_back(std::move(blk));
    }
    in_c = out_c;
  }

  const Index f = config.feature_dim();
  if (config.classifier_on_embed && config.embed_dim < 1) {
    throw std::invalid_argument("micro_resnet: classifier_on_embed requires an embedding head");
  }
  if (config.num_classes > 0) {
    const Index cls_in = config.classifier_on_embed ? config.embed_dim : f;
    m.classifier = make_linear(config.num_classes, cls_in);
  }
  if (config.embed_dim > 0) m.embed_head = make_linear(config.embed_dim, f);
  if (config.proj_dim > 0) {
    m.proj_fc1 = make_linear(f, f);
    m.proj_fc2 = make_linear(config.proj_dim, f);
  }

  // He-style init, one derived stream per parameter so layer draws stay
  // independent of each other.
  auto params = collect_params(m);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamRef& p = params[i];
    Rng rng = Rng::derive(seed, {0x6d6f64656cULL, static_cast<std::uint64_t>(i)});
    if (p.shape.size() == 4) {
      const Scalar fan_in = static_cast<Scalar>(p.shape[1] * p.shape[2] * p.shape[3]);
      const Scalar std = std::sqrt(2.0 / fan_in);
      for (Index j = 0; j < p.size; ++j) p.value[j] = std * rng.normal();
    } else if (p.shape.size() == 2) {
      const Scalar std = std::sqrt(1.0 / static_cast<Scalar>(p.shape[1]));
      for (Index j = 0; j < p.size; ++j) p.value[j] = std * rng.normal();
    }
    // rank-1 params (biases, bn gamma/beta) keep their constant init
  }
  return m;
}

std::vector<ParamRef> collect_params(MicroResNet& m) {
  std::vector<ParamRef> out;
  append_conv(out, "stem", m.stem);
  append_bn(out, "stem_bn", m.stem_bn);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const std::string p = "block" + std::to_string(i);
    ResidualBlock& blk = m.blocks[i];
    append_conv(out, p + ".conv1", blk.conv1);
    append_bn(out, p + ".bn1", blk.bn1);
    append_conv(out, p + ".conv2", blk.conv2);
    append_bn(out, p + ".bn2", blk.bn2);
    if (blk.has_proj) {
      append_conv(out, p + ".proj", blk.proj);
      append_bn(out, p + ".proj_bn", blk.proj_bn);
    }
  }
  if (m.classifier) append_linear(out, "classifier", *m.classifier);
  if (m.embed_head) append_linear(out, "embed", *m.embed_head);
  if (m.config.proj_dim > 0) {
    append_linear(out, "proj1", m.proj_fc1);
    append_linear(out, "proj2", m.proj_fc2);
  }
  return out;
}

std::vector<BufferRef> collect_buffers(MicroResNet& m) {
  std::vector<BufferRef> out;
  append_bn_buffers(out, "stem_bn", m.stem_bn);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const std::string p = "block" + std::to_string(i);
    append_bn_buffers(out, p + ".bn1", m.blocks[i].bn1);
    append_bn_buffers(out, p + ".bn2", m.blocks[i].bn2);
    if (m.blocks[i].has_proj) append_bn_buffers(out, p + ".proj_bn", m.blocks[i].proj_bn);
  }
  return out;
}

void zero_grads(MicroResNet& m) {
  for (ParamRef& p : collect_params(m)) {
    MapVector(p.grad, p.size).setZero();
  }
}

ForwardResult micro_resnet_forward_train(MicroResNet& m, const Tensor& x,
                                         ForwardCache& cache) {
  if (x.rank() != 4 || x.dim(1) != m.config.in_channels) {
    throw std::invalid_argument("micro_resnet_forward: batch must be NCHW with matching channels");
  }
  cache = ForwardCache{};
  cache.input = x;
  Tensor out = conv2d_forward(x, m.stem.w, m.stem.b, 1, 1);
  out = batchnorm2d_train(out, m.stem_bn.gamma, m.stem_bn.beta, m.stem_bn.running_mean,
                          m.stem_bn.running_var, kBnMomentum, kBnEps, cache.stem_bn);
  cache.stem_act_in = out;
  out = relu_forward(out);

  cache.blocks.resize(m.blocks.size());
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    out = block_forward_train(m.blocks[i], out, cache.blocks[i]);
  }
  cache.backbone_out = out;
  cache.features = global_avg_pool_forward(out);
  cache.valid = true;

  ForwardResult r;
  r.features = cache.features;
  if (m.classifier) {
    MatrixX cls_in = m.config.classifier_on_embed
        ? linear_forward(r.features, m.embed_head->w, m.embed_head->b)
        : r.features;
    r.logits = linear_forward(cls_in, m.classifier->w, m.classifier->b);
  }
  return r;
}

ForwardResult micro_resnet_forward_eval(const MicroResNet& m, const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != m.config.in_channels) {
    throw std::invalid_argument("micro_resnet_forward: batch must be NCHW with matching channels");
  }
  Tensor out = conv2d_forward(x, m.stem.w, m.stem.b, 1, 1);
  out = batchnorm2d_eval(out, m.stem_bn.gamma, m.stem_bn.beta, m.stem_bn.running_mean,
                         m.stem_bn.running_var, kBnEps);
  out = relu_forward(out);
  for (const ResidualBlock& blk : m.blocks) {
    out = block_forward_eval(blk, out);
  }
  ForwardResult r;
  r.features = global_avg_pool_forward(out);
  if (m.classifier) {
    MatrixX cls_in = m.config.classifier_on_embed
        ? linear_forward(r.features, m.embed_head->w, m.embed_head->b)
        : r.features;
    r.logits = linear_forward(cls_in, m.classifier->w, m.classifier->b);
  }
  return r;
}

void micro_resnet_backward(MicroResNet& m, const ForwardCache& cache,
                           const MatrixX& d_features) {
  if (!cache.valid) {
    throw std::logic_error("micro_resnet_backward: forward cache is empty; run a train-mode forward first");
  }
  if (d_features.rows() != cache.features.rows() ||
      d_features.cols() != cache.features.cols()) {
    throw std::invalid_argument("micro_resnet_backward: feature gradient shape mismatch");
  }
  Tensor d = global_avg_pool_backward(d_features, cache.backbone_out.dim(2),
                                      cache.backbone_out.dim(3));
  for (std::size_t i = m.blocks.size(); i-- > 0;) {
    d = block_backward(m.blocks[i], cache.blocks[i], d);
  }
  d = relu_backward(cache.stem_act_in, d);
  BatchNormGrads bn = batchnorm2d_backward(cache.stem_bn, m.stem_bn.gamma, d);
  m.stem_bn.ggamma += bn.dgamma;
  m.stem_bn.gbeta += bn.dbeta;
  Conv2dGrads conv = conv2d_backward(cache.input, m.stem.w, 1, 1, bn.dx);
  m.stem.gw.array() += conv.dw.array();
  m.stem.gb += conv.db;
}

MatrixX classifier_forward(const MicroResNet& m, const MatrixX& features) {
  if (!m.classifier) throw std::logic_error("classifier_forward: model has no classifier head");
  return linear_forward(features, m.classifier->w, m.classifier->b);
}

MatrixX classifier_backward(MicroResNet& m, const MatrixX& features,
                            const MatrixX& d_logits) {
  if (!m.classifier) throw std::logic_error("classifier_backward: model has no classifier head");
  LinearGrads g = linear_backward(features, m.classifier->w, d_logits);
  m.classifier->gw += g.dw;
  m.classifier->gb += g.db;
  return g.dx;
}

MatrixX embed_head_forward(const MicroResNet& m, const MatrixX& features) {
  if (!m.embed_head) throw std::logic_error("embed_head_forward: model has no embedding head");
  return linear_forward(features, m.embed_head->w, m.embed_head->b);
}

MatrixX embed_head_backward(MicroResNet& m, const MatrixX& features,
                            const MatrixX& d_embed) {
  if (!m.embed_head) throw std::logic_error("embed_head_backward: model has no embedding head");
  LinearGrads g = linear_backward(features, m.embed_head->w, d_embed);
  m.embed_head->gw += g.dw;
  m.embed_head->gb += g.db;
  return g.dx;
}

MatrixX proj_head_forward(const MicroResNet& m, const MatrixX& features,
                          ProjCache& cache) {
  if (m.config.proj_dim <= 0) throw std::logic_error("proj_head_forward: model has no projection head");
  cache.h_pre = linear_forward(features, m.proj_fc1.w, m.proj_fc1.b);
  cache.h_act = cache.h_pre.cwiseMax(0.0);
  return linear_forward(cache.h_act, m.proj_fc2.w, m.proj_fc2.b);
}

MatrixX proj_head_backward(MicroResNet& m, const MatrixX& features,
                           const ProjCache& cache, const MatrixX& d_out) {
  if (m.config.proj_dim <= 0) throw std::logic_error("proj_head_backward: model has no projection head");
  LinearGrads g2 = linear_backward(cache.h_act, m.proj_fc2.w, d_out);
  m.proj_fc2.gw += g2.dw;
  m.proj_fc2.gb += g2.db;
  MatrixX d_act = (cache.h_pre.array() > 0.0).select(g2.dx.array(), 0.0).matrix();
  LinearGrads g1 = linear_backward(features, m.proj_fc1.w, d_act);
  m.proj_fc1.gw += g1.dw;
  m.proj_fc1.gb += g1.db;
  return g1.dx;
}

}  // namespace gslab
