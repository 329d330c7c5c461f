#include "gslab/trainer.hpp"

#include "gslab/losses.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>

namespace gslab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Stream tags keeping the independent randomness sources apart.
constexpr std::uint64_t kTagModel = 0x6d6f64656cULL;
constexpr std::uint64_t kTagAug = 0x617567ULL;
constexpr std::uint64_t kTagShuffle = 0x73687566ULL;
constexpr std::uint64_t kTagSampler = 0x73616d70ULL;
constexpr std::uint64_t kTagValBatch = 0x76616cULL;
// Epoch slot reserved for validation views so they never collide with a
// training epoch's augmentation streams.
constexpr Index kValidationEpoch = 0x7fffffff;

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t tag) {
  Rng rng = Rng::derive(seed, {tag});
  return rng.next_u64();
}

std::vector<Index> shuffled_indices(Index n, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

LrSchedule make_schedule(const ExperimentManifest& m) {
  LrSchedule s;
  s.kind = m.schedule;
  s.base_lr = m.lr;
  s.step_epochs = m.step_epochs > 0 ? m.step_epochs : std::max<Index>(1, m.epochs / 2);
  s.gamma = m.gamma;
  s.t_max = std::max<Index>(1, m.epochs);
  s.eta_min = m.eta_min;
  return s;
}

PipelineGeometry contrastive_geometry(const ExperimentManifest& m) {
  return {m.resize_side, simclr_crop_side(m.resize_side, m.min_area_fraction), m.input_side};
}

std::vector<int> gather_labels(const Dataset& ds, const std::vector<Index>& items) {
  std::vector<int> labels;
  labels.reserve(items.size());
  for (Index i : items) labels.push_back(ds.items[static_cast<std::size_t>(i)].label);
  return labels;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

Scalar seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - t0).count();
}

// Classifier input for the current head layout; fills `embed` when the
// classifier sits on the embedding head.
MatrixX classifier_input(const MicroResNet& model, const MatrixX& features, MatrixX& embed) {
  if (model.config.classifier_on_embed) {
    embed = embed_head_forward(model, features);
    return embed;
  }
  return features;
}

struct EpochStats {
  Scalar loss = 0.0;
  Scalar acc = 0.0;
};

// One cross-entropy training epoch. With `frozen` the backbone and any
// embedding head run in eval mode and only the classifier sees updates.
EpochStats classification_epoch(const ExperimentManifest& m, MicroResNet& model,
                                const Dataset& train, const AugPipeline& train_pipe,
                                OptimizerState& opt, const std::vector<ParamRef>& trainable,
                                Index epoch, bool frozen) {
  Rng shuffle_rng = Rng::derive(m.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)});
  const std::vector<Index> order = shuffled_indices(train.size(), shuffle_rng);

  EpochStats stats;
  const Index n = train.size();
  for (Index start = 0; start < n; start += m.batch_size) {
    const Index count = std::min(m.batch_size, n - start);
    const std::vector<Index> items(order.begin() + start, order.begin() + start + count);
    const std::vector<int> labels = gather_labels(train, items);
    const Tensor x = assemble_batch(train, items, train_pipe, epoch);

    MatrixX embed;
    ForwardCache cache;
    MatrixX features;
    if (frozen) {
      features = micro_resnet_forward_eval(model, x).features;
    } else {
      features = micro_resnet_forward_train(model, x, cache).features;
    }
    const MatrixX cls_in = classifier_input(model, features, embed);
    const MatrixX logits = classifier_forward(model, cls_in);

    const LossValue ce = cross_entropy(logits, labels);
    const Scalar batch_acc = accuracy(logits, labels);

    zero_grads(model);
    if (frozen) {
      classifier_backward(model, cls_in, ce.grad);
    } else if (model.config.classifier_on_embed) {
      const MatrixX d_embed = classifier_backward(model, embed, ce.grad);
      const MatrixX d_features = embed_head_backward(model, features, d_embed);
      micro_resnet_backward(model, cache, d_features);
    } else {
      const MatrixX d_features = classifier_backward(model, features, ce.grad);
      micro_resnet_backward(model, cache, d_features);
    }
    optimizer_step(opt, trainable);

    stats.loss += ce.value * static_cast<Scalar>(count);
    stats.acc += batch_acc * static_cast<Scalar>(count);
  }
  stats.loss /= static_cast<Scalar>(n);
  stats.acc /= static_cast<Scalar>(n);
  return stats;
}

RunResult run_classification(const ExperimentManifest& m, MicroResNet& model,
                             const SplitResult& parts, const AugPipeline& train_pipe,
                             const AugPipeline& eval_pipe, bool frozen,
                             const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<ParamRef> trainable;
  for (ParamRef& p : collect_params(model)) {
    if (!frozen || p.name.rfind("classifier", 0) == 0) trainable.push_back(p);
  }
  if (trainable.empty()) throw std::logic_error("training: no trainable parameters");
  OptimizerState opt = make_optimizer(m.optimizer, m.lr, trainable);
  const LrSchedule sched = make_schedule(m);

  RunResult res;
  res.aug_spec = m.aug_spec;
  res.seed = m.seed;

  MicroResNet best = model;
  Scalar best_valid = -1.0;
  for (Index epoch = 0; epoch < m.epochs; ++epoch) {
    opt.lr = lr_at(sched, epoch);
    const EpochStats tr = classification_epoch(m, model, parts.train, train_pipe, opt,
                                               trainable, epoch, frozen);
    res.train_loss.push_back(tr.loss);
    res.train_acc_series.push_back(tr.acc);

    const EvalResult ev = evaluate_model(model, parts.valid, eval_pipe, m.batch_size);
    res.valid_loss.push_back(ev.loss);
    res.valid_acc_series.push_back(ev.acc);
    if (ev.acc > best_valid) {
      best_valid = ev.acc;
      res.best_epoch = epoch;
      best = model;
    }
  }

  if (m.epochs == 0) {
    res.train_acc = evaluate_model(best, parts.train, eval_pipe, m.batch_size).acc;
    res.valid_acc = evaluate_model(best, parts.valid, eval_pipe, m.batch_size).acc;
  } else {
    res.train_acc = res.train_acc_series[static_cast<std::size_t>(res.best_epoch)];
    res.valid_acc = best_valid;
  }
  res.test_acc = evaluate_model(best, parts.test, eval_pipe, m.batch_size).acc;

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), best);
  }
  res.wall_time_s = seconds_since(t0);
  return res;
}

void write_run_artifacts(const ExperimentManifest& m, const RunResult& res,
                         const std::string& out_dir) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest_to_json(m));
  json j;
  j["aug_spec"] = res.aug_spec;
  j["seed"] = res.seed;
  j["train_loss"] = res.train_loss;
  j["train_acc"] = res.train_acc_series;
  j["valid_loss"] = res.valid_loss;
  j["valid_acc"] = res.valid_acc_series;
  j["best_epoch"] = res.best_epoch;
  j["final"] = {{"train_acc", res.train_acc},
                {"valid_acc", res.valid_acc},
                {"test_acc", res.test_acc}};
  j["wall_time_s"] = res.wall_time_s;
  write_text_file((fs::path(out_dir) / "result.json").string(), j.dump(2) + "\n");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const char* scope) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (item.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("manifest: unknown key \"" + item.key() + "\" in " + scope);
    }
  }
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw std::invalid_argument("manifest: unknown optimizer \"" + s + "\"");
}

ScheduleKind parse_schedule(const std::string& s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "step") return ScheduleKind::step_decay;
  if (s == "cosine") return ScheduleKind::cosine;
  throw std::invalid_argument("manifest: unknown schedule \"" + s + "\"");
}

std::string schedule_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::step_decay: return "step";
    case ScheduleKind::cosine: return "cosine";
  }
  return "constant";
}

// Minimal CSV splitting: double quotes fence a field, no escaped quotes
// inside (spec strings never contain them).
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t i = 0;
  while (i <= line.size()) {
    std::string field;
    if (i < line.size() && line[i] == '"') {
      const std::size_t close = line.find('"', i + 1);
      if (close == std::string::npos) throw std::runtime_error("ledger: unterminated quote");
      field = line.substr(i + 1, close - i - 1);
      i = close + 1;
      if (i < line.size() && line[i] == ',') ++i;
      else i = line.size() + 1;
    } else {
      const std::size_t comma = line.find(',', i);
      if (comma == std::string::npos) {
        field = line.substr(i);
        i = line.size() + 1;
      } else {
        field = line.substr(i, comma - i);
        i = comma + 1;
      }
    }
    fields.push_back(field);
  }
  return fields;
}

}  // namespace

PipelineGeometry classification_geometry(const ExperimentManifest& m) {
  return {m.resize_side, m.input_side, m.input_side};
}

std::string method_name(Method m) {
  switch (m) {
    case Method::baseline: return "baseline";
    case Method::triplet: return "triplet";
    case Method::simclr: return "simclr";
  }
  return "baseline";
}

Method parse_method(const std::string& name) {
  if (name == "baseline") return Method::baseline;
  if (name == "triplet") return Method::triplet;
  if (name == "simclr") return Method::simclr;
  throw std::invalid_argument("manifest: unknown method \"" + name + "\"");
}

Dataset provision_dataset(const DatasetConfig& cfg) {
  if (cfg.kind == "glyphs") {
    return generate_glyphs(cfg.classes, cfg.per_class, cfg.side, cfg.seed);
  }
  if (cfg.kind == "dir") return load_image_directory(cfg.path);
  if (cfg.kind == "annotations") {
    return crop_from_annotations(read_annotation_csv(cfg.path));
  }
  throw std::invalid_argument("dataset: unknown kind \"" + cfg.kind + "\"");
}

ExperimentManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("manifest: ") + e.what());
  }
  check_keys(j,
             {"method", "aug_spec", "seed", "epochs", "batch_size", "optimizer", "schedule",
              "temperature", "margin", "model", "dataset", "split_seed", "resize_side",
              "min_area_fraction", "finetune"},
             "the manifest root");

  ExperimentManifest m;
  try {
    if (j.contains("method")) m.method = parse_method(j["method"].get<std::string>());
    m.aug_spec = j.value("aug_spec", m.aug_spec);
    m.seed = j.value("seed", m.seed);
    m.epochs = j.value("epochs", m.epochs);
    m.batch_size = j.value("batch_size", m.batch_size);
    m.temperature = j.value("temperature", m.temperature);
    m.margin = j.value("margin", m.margin);
    m.split_seed = j.value("split_seed", m.split_seed);
    m.resize_side = j.value("resize_side", m.resize_side);
    m.min_area_fraction = j.value("min_area_fraction", m.min_area_fraction);

    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      check_keys(o, {"kind", "lr"}, "optimizer");
      if (o.contains("kind")) m.optimizer = parse_optimizer(o["kind"].get<std::string>());
      m.lr = o.value("lr", m.lr);
    }
    if (j.contains("schedule")) {
      const json& s = j["schedule"];
      check_keys(s, {"kind", "gamma", "step_epochs", "eta_min"}, "schedule");
      if (s.contains("kind")) m.schedule = parse_schedule(s["kind"].get<std::string>());
      m.gamma = s.value("gamma", m.gamma);
      m.step_epochs = s.value("step_epochs", m.step_epochs);
      m.eta_min = s.value("eta_min", m.eta_min);
    }
    if (j.contains("model")) {
      const json& mo = j["model"];
      check_keys(mo, {"widths", "input_side", "embed_dim", "proj_dim"}, "model");
      if (mo.contains("widths")) m.widths = mo["widths"].get<std::vector<Index>>();
      m.input_side = mo.value("input_side", m.input_side);
      m.embed_dim = mo.value("embed_dim", m.embed_dim);
      m.proj_dim = mo.value("proj_dim", m.proj_dim);
    }
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      check_keys(d, {"kind", "classes", "per_class", "side", "seed", "path"}, "dataset");
      m.dataset.kind = d.value("kind", m.dataset.kind);
      m.dataset.classes = d.value("classes", m.dataset.classes);
      m.dataset.per_class = d.value("per_class", m.dataset.per_class);
      m.dataset.side = d.value("side", m.dataset.side);
      m.dataset.seed = d.value("seed", m.dataset.seed);
      m.dataset.path = d.value("path", m.dataset.path);
    }
    if (j.contains("finetune")) {
      const json& f = j["finetune"];
      check_keys(f, {"checkpoint", "freeze_backbone", "base_aug"}, "finetune");
      m.checkpoint = f.value("checkpoint", m.checkpoint);
      m.freeze_backbone = f.value("freeze_backbone", m.freeze_backbone);
      m.finetune_base_aug = f.value("base_aug", m.finetune_base_aug);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("manifest: ") + e.what());
  }
  if (m.epochs < 0) throw std::invalid_argument("manifest: epochs must be >= 0");
  if (m.batch_size < 1) throw std::invalid_argument("manifest: batch_size must be >= 1");
  return m;
}

ExperimentManifest manifest_from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("manifest: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return manifest_from_json(text);
}

std::string manifest_to_json(const ExperimentManifest& m) {
  json j;
  j["method"] = method_name(m.method);
  j["aug_spec"] = m.aug_spec;
  j["seed"] = m.seed;
  j["epochs"] = m.epochs;
  j["batch_size"] = m.batch_size;
  j["optimizer"] = {{"kind", m.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
                    {"lr", m.lr}};
  j["schedule"] = {{"kind", schedule_name(m.schedule)},
                   {"gamma", m.gamma},
                   {"step_epochs", m.step_epochs},
                   {"eta_min", m.eta_min}};
  j["temperature"] = m.temperature;
  j["margin"] = m.margin;
  j["model"] = {{"widths", m.widths},
                {"input_side", m.input_side},
                {"embed_dim", m.embed_dim},
                {"proj_dim", m.proj_dim}};
  j["dataset"] = {{"kind", m.dataset.kind},   {"classes", m.dataset.classes},
                  {"per_class", m.dataset.per_class}, {"side", m.dataset.side},
                  {"seed", m.dataset.seed},   {"path", m.dataset.path}};
  j["split_seed"] = m.split_seed;
  j["resize_side"] = m.resize_side;
  j["min_area_fraction"] = m.min_area_fraction;
  if (!m.checkpoint.empty() || m.freeze_backbone || m.finetune_base_aug) {
    j["finetune"] = {{"checkpoint", m.checkpoint},
                     {"freeze_backbone", m.freeze_backbone},
                     {"base_aug", m.finetune_base_aug}};
  }
  return j.dump(2) + "\n";
}

EvalResult evaluate_model(const MicroResNet& model, const Dataset& split,
                          const AugPipeline& eval_pipeline, Index batch_size) {
  if (split.size() == 0) throw std::invalid_argument("evaluate: empty split");
  if (!model.classifier) throw std::logic_error("evaluate: model has no classifier head");
  if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");

  Scalar loss_sum = 0.0, acc_sum = 0.0;
  const Index n = split.size();
  for (Index start = 0; start < n; start += batch_size) {
    const Index count = std::min(batch_size, n - start);
    std::vector<Index> items(static_cast<std::size_t>(count));
    std::iota(items.begin(), items.end(), start);
    const Tensor x = assemble_batch(split, items, eval_pipeline, 0);
    const ForwardResult r = micro_resnet_forward_eval(model, x);
    const std::vector<int> labels = gather_labels(split, items);
    loss_sum += cross_entropy(*r.logits, labels).value * static_cast<Scalar>(count);
    acc_sum += accuracy(*r.logits, labels) * static_cast<Scalar>(count);
  }
  return {loss_sum / static_cast<Scalar>(n), acc_sum / static_cast<Scalar>(n)};
}

RunResult train_baseline(const ExperimentManifest& m, const std::string& out_dir) {
  if (m.method != Method::baseline) {
    throw std::invalid_argument("train_baseline: manifest method must be baseline");
  }
  const AugSpec spec = parse_tokens(m.aug_spec);  // rejects bad specs before any work

  const Dataset ds = provision_dataset(m.dataset);
  SplitSpec sp;
  sp.seed = m.split_seed;
  const SplitResult parts = split(ds, sp);

  const PipelineGeometry geom = classification_geometry(m);
  const AugPipeline train_pipe =
      build_train_pipeline(spec, geom, derived_seed(m.seed, kTagAug));
  const AugPipeline eval_pipe = build_eval_pipeline(m.input_side, geom);

  MicroResNetConfig cfg;
  cfg.in_channels = 3;
  cfg.widths = m.widths;
  cfg.input_side = m.input_side;
  cfg.num_classes = ds.class_count;
  MicroResNet model = make_micro_resnet(cfg, derived_seed(m.seed, kTagModel));

  RunResult res = run_classification(m, model, parts, train_pipe, eval_pipe, false, out_dir);
  write_run_artifacts(m, res, out_dir);
  return res;
}

PretrainResult pretrain_embedding(const ExperimentManifest& m, const std::string& out_dir) {
  if (m.method == Method::baseline) {
    throw std::invalid_argument("pretrain_embedding: method must be triplet or simclr");
  }
  if (m.method == Method::simclr && m.batch_size < 4) {
    throw std::invalid_argument(
        "pretrain_embedding: contrastive batches need at least 4 images");
  }
  const AugSpec spec = parse_tokens(m.aug_spec);

  const Dataset ds = provision_dataset(m.dataset);
  SplitSpec sp;
  sp.seed = m.split_seed;
  const SplitResult parts = split(ds, sp);

  const bool contrastive = m.method == Method::simclr;
  const PipelineGeometry geom =
      contrastive ? contrastive_geometry(m) : classification_geometry(m);
  const AugPipeline train_pipe =
      build_train_pipeline(spec, geom, derived_seed(m.seed, kTagAug));
  const AugPipeline eval_pipe = build_eval_pipeline(m.input_side, classification_geometry(m));

  MicroResNetConfig cfg;
  cfg.in_channels = 3;
  cfg.widths = m.widths;
  cfg.input_side = m.input_side;
  if (contrastive) {
    cfg.proj_dim = m.proj_dim;
  } else {
    cfg.embed_dim = m.embed_dim;
  }
  MicroResNet model = make_micro_resnet(cfg, derived_seed(m.seed, kTagModel));

  std::vector<ParamRef> params = collect_params(model);
  OptimizerState opt = make_optimizer(m.optimizer, m.lr, params);
  const LrSchedule sched = make_schedule(m);

  const auto t0 = std::chrono::steady_clock::now();
  if (!out_dir.empty()) fs::create_directories(out_dir);

  const std::vector<UnlabeledImage> train_pool = unlabeled_view(parts.train);
  const std::vector<UnlabeledImage> valid_pool = unlabeled_view(parts.valid);

  PretrainResult res;
  for (Index epoch = 0; epoch < m.epochs; ++epoch) {
    opt.lr = lr_at(sched, epoch);
    Rng sampler = Rng::derive(m.seed, {kTagSampler, static_cast<std::uint64_t>(epoch)});
    const Index iters = std::max<Index>(1, parts.train.size() / m.batch_size);

    Scalar epoch_loss = 0.0;
    for (Index it = 0; it < iters; ++it) {
      if (contrastive) {
        const ContrastiveBatch cb =
            make_contrastive_batch(train_pool, m.batch_size, train_pipe, epoch, sampler);
        ForwardCache cache;
        const MatrixX features = micro_resnet_forward_train(model, cb.views, cache).features;
        ProjCache pc;
        const MatrixX z = proj_head_forward(model, features, pc);
        const LossValue nce = info_nce(z, m.temperature);
        zero_grads(model);
        const MatrixX d_features = proj_head_backward(model, features, pc, nce.grad);
        micro_resnet_backward(model, cache, d_features);
        optimizer_step(opt, params);
        epoch_loss += nce.value;
      } else {
        const TripletBatch tb = make_triplet_batch(parts.train, m.batch_size, sampler);
        std::vector<Index> items;
        items.reserve(static_cast<std::size_t>(3 * m.batch_size));
        items.insert(items.end(), tb.anchor.begin(), tb.anchor.end());
        items.insert(items.end(), tb.positive.begin(), tb.positive.end());
        items.insert(items.end(), tb.negative.begin(), tb.negative.end());
        const Tensor x = assemble_batch(parts.train, items, train_pipe, epoch);

        ForwardCache cache;
        const MatrixX features = micro_resnet_forward_train(model, x, cache).features;
        const MatrixX emb = embed_head_forward(model, features);
        const Index nt = m.batch_size;
        const TripletLossValue tl = triplet_loss(emb.topRows(nt), emb.middleRows(nt, nt),
                                                 emb.bottomRows(nt), m.margin);
        zero_grads(model);
        MatrixX d_emb(3 * nt, emb.cols());
        d_emb.topRows(nt) = tl.grad_anchor;
        d_emb.middleRows(nt, nt) = tl.grad_positive;
        d_emb.bottomRows(nt) = tl.grad_negative;
        const MatrixX d_features = embed_head_backward(model, features, d_emb);
        micro_resnet_backward(model, cache, d_features);
        optimizer_step(opt, params);
        epoch_loss += tl.value;
      }
    }
    res.train_loss.push_back(epoch_loss / static_cast<Scalar>(iters));

    // Held-out loss on a fixed stream so epochs stay comparable.
    Rng val_rng = Rng::derive(m.seed, {kTagValBatch});
    if (contrastive) {
      const Index val_batches = std::max<Index>(1, parts.valid.size() / m.batch_size);
      Scalar val_loss = 0.0;
      for (Index vb = 0; vb < val_batches; ++vb) {
        const ContrastiveBatch cb = make_contrastive_batch(valid_pool, m.batch_size,
                                                           train_pipe, kValidationEpoch, val_rng);
        const MatrixX features = micro_resnet_forward_eval(model, cb.views).features;
        ProjCache pc;
        const MatrixX z = proj_head_forward(model, features, pc);
        val_loss += info_nce(z, m.temperature).value;
      }
      res.valid_loss.push_back(val_loss / static_cast<Scalar>(val_batches));
    } else {
      const Index vn = std::min<Index>(m.batch_size, parts.valid.size());
      const TripletBatch vb = make_triplet_batch(parts.valid, vn, val_rng);
      std::vector<Index> items;
      items.insert(items.end(), vb.anchor.begin(), vb.anchor.end());
      items.insert(items.end(), vb.positive.begin(), vb.positive.end());
      items.insert(items.end(), vb.negative.begin(), vb.negative.end());
      const Tensor x = assemble_batch(parts.valid, items, eval_pipe, 0);
      const MatrixX features = micro_resnet_forward_eval(model, x).features;
      const MatrixX emb = embed_head_forward(model, features);
      res.valid_loss.push_back(triplet_loss(emb.topRows(vn), emb.middleRows(vn, vn),
                                            emb.bottomRows(vn), m.margin)
                                   .value);
    }

    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03lld.ckpt", static_cast<long long>(epoch));
      save_checkpoint((fs::path(out_dir) / name).string(), model);
    }
  }

  if (!out_dir.empty()) {
    const std::string final_path = (fs::path(out_dir) / "pretrain.ckpt").string();
    save_checkpoint(final_path, model);
    res.checkpoint_path = final_path;
    write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest_to_json(m));
    json j;
    j["train_loss"] = res.train_loss;
    j["valid_loss"] = res.valid_loss;
    write_text_file((fs::path(out_dir) / "metrics.json").string(), j.dump(2) + "\n");
  }
  res.wall_time_s = seconds_since(t0);
  return res;
}

RunResult finetune(const ExperimentManifest& m, const std::string& out_dir) {
  if (m.method == Method::baseline) {
    throw std::invalid_argument("finetune: method must be triplet or simclr");
  }
  if (m.checkpoint.empty()) {
    throw std::invalid_argument("finetune: manifest needs finetune.checkpoint");
  }
  AugSpec spec = parse_tokens(m.aug_spec);
  if (m.finetune_base_aug) spec.names.resize(1);  // keep only the base crop

  MicroResNet pre = load_checkpoint(m.checkpoint);
  if (m.method == Method::triplet && pre.config.embed_dim < 1) {
    throw std::runtime_error("finetune: checkpoint lacks the embedding head");
  }
  if (pre.config.input_side != m.input_side) {
    throw std::runtime_error("finetune: checkpoint input side " +
                             std::to_string(pre.config.input_side) +
                             " does not match the manifest's " + std::to_string(m.input_side));
  }

  const Dataset ds = provision_dataset(m.dataset);
  SplitSpec sp;
  sp.seed = m.split_seed;
  const SplitResult parts = split(ds, sp);

  MicroResNetConfig cfg;
  cfg.in_channels = pre.config.in_channels;
  cfg.widths = pre.config.widths;
  cfg.input_side = pre.config.input_side;
  cfg.num_classes = ds.class_count;
  if (m.method == Method::triplet) {
    cfg.embed_dim = pre.config.embed_dim;
    cfg.classifier_on_embed = true;
  }
  MicroResNet model = make_micro_resnet(cfg, derived_seed(m.seed, kTagModel));
  copy_matching_arrays(model, pre);

  const PipelineGeometry geom = classification_geometry(m);
  const AugPipeline train_pipe =
      build_train_pipeline(spec, geom, derived_seed(m.seed, kTagAug));
  const AugPipeline eval_pipe = build_eval_pipeline(m.input_side, geom);

  RunResult res =
      run_classification(m, model, parts, train_pipe, eval_pipe, m.freeze_backbone, out_dir);
  write_run_artifacts(m, res, out_dir);
  return res;
}

void append_ledger_row(const std::string& path, const LedgerRow& row) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("ledger: cannot open " + path);
  if (fresh) os << "aug_spec,seed,method,stage,train_acc,valid_acc,test_acc,wall_time_s\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), ",%llu,%s,%s,%.6f,%.6f,%.6f,%.3f\n",
                static_cast<unsigned long long>(row.seed), row.method.c_str(),
                row.stage.c_str(), row.train_acc, row.valid_acc, row.test_acc,
                row.wall_time_s);
  os << '"' << row.aug_spec << '"' << buf;
}

std::vector<LedgerRow> read_ledger(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("ledger: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("ledger: empty file " + path);
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  if (line != "aug_spec,seed,method,stage,train_acc,valid_acc,test_acc,wall_time_s") {
    throw std::runtime_error("ledger: unexpected header in " + path);
  }
  std::vector<LedgerRow> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 8) {
      throw std::runtime_error("ledger: line " + std::to_string(line_no) +
                               " has " + std::to_string(f.size()) + " fields, expected 8");
    }
    LedgerRow r;
    r.aug_spec = f[0];
    try {
      r.seed = std::stoull(f[1]);
      r.method = f[2];
      r.stage = f[3];
      r.train_acc = std::stod(f[4]);
      r.valid_acc = std::stod(f[5]);
      r.test_acc = std::stod(f[6]);
      r.wall_time_s = std::stod(f[7]);
    } catch (const std::exception&) {
      throw std::runtime_error("ledger: line " + std::to_string(line_no) +
                               " has a malformed numeric field");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace gslab
