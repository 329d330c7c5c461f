#pragma once

#include "gslab/nn.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gslab {

// Desk-scale residual classifier: 3x3 stem, then one stage per entry of
// `widths` (two residual blocks each, stride 2 between stages), global
// average pooling into a feature vector of size widths.back(). Heads are
// optional: a linear classifier, a linear metric-embedding head, and a
// two-layer projection head for contrastive training.
struct MicroResNetConfig {
  Index in_channels = 3;
  std::vector<Index> widths = {8, 16, 32};
  Index input_side = 32;
  Index num_classes = 0;  // 0 = no classifier head
  Index embed_dim = 0;    // 0 = no metric-embedding head
  Index proj_dim = 0;     // 0 = no projection head
  // When set, the classifier reads the embedding head's output instead of the
  // pooled backbone features (the layout used when a classifier is stacked on
  // a metric-trained 64-d head).
  bool classifier_on_embed = false;

  Index feature_dim() const { return widths.empty() ? 0 : widths.back(); }
};

struct ConvLayer {
  Tensor w;  // out x in x k x k
  VectorX b;
  Tensor gw;
  VectorX gb;
};

struct BnLayer {
  VectorX gamma, beta;
  VectorX running_mean, running_var;
  VectorX ggamma, gbeta;
};

struct LinearLayer {
  MatrixX w;  // out x in
  VectorX b;
  MatrixX gw;
  VectorX gb;
};

struct ResidualBlock {
  ConvLayer conv1, conv2;
  BnLayer bn1, bn2;
  Index stride = 1;
  bool has_proj = false;  // 1x1 conv on the skip when stride or width changes
  ConvLayer proj;
  BnLayer proj_bn;
};

struct MicroResNet {
  MicroResNetConfig config;
  ConvLayer stem;
  BnLayer stem_bn;
  std::vector<ResidualBlock> blocks;
  std::optional<LinearLayer> classifier;
  std::optional<LinearLayer> embed_head;
  LinearLayer proj_fc1, proj_fc2;  // used only when config.proj_dim > 0
};

MicroResNet make_micro_resnet(const MicroResNetConfig& config, std::uint64_t seed);

// Flat named view of every trainable array, in a stable order shared by the
// optimizer, the gradient checks and the checkpoint format.
struct ParamRef {
  std::string name;
  Scalar* value;
  Scalar* grad;
  std::vector<Index> shape;
  Index size;
};

// Non-trainable state (batch-norm running statistics).
struct BufferRef {
  std::string name;
  Scalar* value;
  std::vector<Index> shape;
  Index size;
};

std::vector<ParamRef> collect_params(MicroResNet& model);
std::vector<BufferRef> collect_buffers(MicroResNet& model);

void zero_grads(MicroResNet& model);

struct BlockCache {
  Tensor in;
  BatchNormCache bn1;
  Tensor act1_in;   // bn1 output, relu input
  Tensor act1_out;  // conv2 input
  BatchNormCache bn2;
  BatchNormCache proj_bn;
  Tensor sum;       // skip + residual, input of the closing relu
};

struct ForwardCache {
  Tensor input;
  BatchNormCache stem_bn;
  Tensor stem_act_in;
  std::vector<BlockCache> blocks;
  Tensor backbone_out;  // after the closing relu of the last block
  MatrixX features;
  bool valid = false;
};

struct ForwardResult {
  MatrixX features;          // N x feature_dim
  std::optional<MatrixX> logits;  // present when the classifier head exists
};

// Train mode: batch-norm uses batch statistics and updates running buffers;
// the cache feeds micro_resnet_backward.
ForwardResult micro_resnet_forward_train(MicroResNet& model, const Tensor& x,
                                         ForwardCache& cache);

// Eval mode: pure function of the inputs, the model is untouched.
ForwardResult micro_resnet_forward_eval(const MicroResNet& model, const Tensor& x);

// Backpropagates d(loss)/d(features) through pooling and the backbone,
// accumulating into the model's gradient slots. Throws if the cache does not
// come from a train-mode forward.
void micro_resnet_backward(MicroResNet& model, const ForwardCache& cache,
                           const MatrixX& d_features);

// Classifier head on top of features. Backward returns d(features) and
// accumulates the head's gradients.
MatrixX classifier_forward(const MicroResNet& model, const MatrixX& features);
MatrixX classifier_backward(MicroResNet& model, const MatrixX& features,
                            const MatrixX& d_logits);

// Metric-embedding head (features -> embed_dim).
MatrixX embed_head_forward(const MicroResNet& model, const MatrixX& features);
MatrixX embed_head_backward(MicroResNet& model, const MatrixX& features,
                            const MatrixX& d_embed);

// Projection head (linear, relu, linear), for contrastive training.
struct ProjCache {
  MatrixX h_pre;  // fc1 output before relu
  MatrixX h_act;
};

MatrixX proj_head_forward(const MicroResNet& model, const MatrixX& features,
                          ProjCache& cache);
MatrixX proj_head_backward(MicroResNet& model, const MatrixX& features,
                           const ProjCache& cache, const MatrixX& d_out);

}  // namespace gslab
