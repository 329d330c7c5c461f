#pragma once

#include "gslab/checkpoint.hpp"
#include "gslab/combos.hpp"
#include "gslab/data.hpp"
#include "gslab/optim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gslab {

enum class Method { baseline, triplet, simclr };

std::string method_name(Method m);
Method parse_method(const std::string& name);

// Where training data comes from: procedural glyphs, a root/<label>/ image
// directory, or an annotation CSV.
struct DatasetConfig {
  std::string kind = "glyphs";
  int classes = 5;
  Index per_class = 200;
  Index side = 40;
  std::uint64_t seed = 7;
  std::string path;
};

Dataset provision_dataset(const DatasetConfig& cfg);

// Full description of one run. Serialized as JSON; unknown keys are rejected.
struct ExperimentManifest {
  Method method = Method::baseline;
  std::string aug_spec = "randomcrop224";
  std::uint64_t seed = 0;
  Index epochs = 10;
  Index batch_size = 32;

  OptimizerKind optimizer = OptimizerKind::adam;
  Scalar lr = 1e-3;
  ScheduleKind schedule = ScheduleKind::step_decay;
  Scalar gamma = 0.1;
  Index step_epochs = 0;  // 0 = half the epoch budget
  Scalar eta_min = 0.0;
  Scalar temperature = 0.07;
  Scalar margin = 1.0;

  std::vector<Index> widths = {8, 16, 32};
  Index input_side = 32;
  Index embed_dim = 64;
  Index proj_dim = 128;

  DatasetConfig dataset;
  std::uint64_t split_seed = 1;
  Index resize_side = 40;
  Scalar min_area_fraction = 0.6;

  std::string checkpoint;          // pretrained weights consumed by finetune
  bool freeze_backbone = false;
  bool finetune_base_aug = false;  // drop the extras, keep only the base crop
};

ExperimentManifest manifest_from_json(const std::string& text);
ExperimentManifest manifest_from_json_file(const std::string& path);
std::string manifest_to_json(const ExperimentManifest& m);

struct RunResult {
  std::string aug_spec;
  std::uint64_t seed = 0;
  std::vector<Scalar> train_loss, train_acc_series, valid_loss, valid_acc_series;
  Scalar train_acc = 0.0, valid_acc = 0.0, test_acc = 0.0;
  Index best_epoch = -1;  // -1 when no epoch ran
  Scalar wall_time_s = 0.0;
};

struct PretrainResult {
  std::vector<Scalar> train_loss, valid_loss;
  std::string checkpoint_path;
  Scalar wall_time_s = 0.0;
};

// Cross-entropy training of backbone plus classifier. Reports the test
// accuracy of the best-validation epoch (ties keep the earlier epoch) and
// writes that model to <out_dir>/model.ckpt.
RunResult train_baseline(const ExperimentManifest& m, const std::string& out_dir);

// Embedding pretraining: triplet margin loss over anchor/positive/negative
// blocks, or the temperature-scaled contrastive loss over two-view batches.
// The contrastive path samples through a label-free view of the data. Writes
// <out_dir>/epoch_NNN.ckpt after every epoch and <out_dir>/pretrain.ckpt at
// the end.
PretrainResult pretrain_embedding(const ExperimentManifest& m, const std::string& out_dir);

// Attaches a fresh classifier to a pretrained checkpoint (on the embedding
// output for triplet models, on the pooled features otherwise) and trains
// with cross-entropy. freeze_backbone restricts updates to the classifier and
// keeps every other array bit-identical.
RunResult finetune(const ExperimentManifest& m, const std::string& out_dir);

// Resize-then-center-crop geometry used everywhere a model is evaluated.
PipelineGeometry classification_geometry(const ExperimentManifest& m);

struct EvalResult {
  Scalar loss = 0.0;
  Scalar acc = 0.0;
};

// Deterministic evaluation under the randomness-free pipeline; independent of
// batch size and item order.
EvalResult evaluate_model(const MicroResNet& model, const Dataset& split,
                          const AugPipeline& eval_pipeline, Index batch_size);

struct LedgerRow {
  std::string aug_spec;
  std::uint64_t seed = 0;
  std::string method;
  std::string stage;
  Scalar train_acc = 0.0, valid_acc = 0.0, test_acc = 0.0, wall_time_s = 0.0;
};

// Appends to the results CSV (header written when the file starts empty).
// The spec field is quoted since spec strings contain commas.
void append_ledger_row(const std::string& path, const LedgerRow& row);
std::vector<LedgerRow> read_ledger(const std::string& path);

}  // namespace gslab
