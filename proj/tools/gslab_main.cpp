#include <CLI11.hpp>

#include "gslab/analysis.hpp"
#include "gslab/checkpoint.hpp"
#include "gslab/combos.hpp"
#include "gslab/data.hpp"
#include "gslab/stats.hpp"
#include "gslab/trainer.hpp"
#include "gslab/tsne.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

using namespace gslab;
namespace fs = std::filesystem;

const Dataset& pick_split(const SplitResult& parts, const std::string& name) {
  if (name == "train") return parts.train;
  if (name == "valid") return parts.valid;
  if (name == "test") return parts.test;
  throw std::invalid_argument("unknown split '" + name + "' (expected train, valid, or test)");
}

MicroResNet load_model_for(const ExperimentManifest& m, const std::string& checkpoint) {
  MicroResNet model = load_checkpoint(checkpoint);
  if (model.config.input_side != m.input_side) {
    throw std::invalid_argument("checkpoint input side " +
                                std::to_string(model.config.input_side) +
                                " does not match the manifest input side " +
                                std::to_string(m.input_side));
  }
  return model;
}

std::string default_ledger(const std::string& explicit_path, const std::string& out_dir) {
  return explicit_path.empty() ? (fs::path(out_dir) / "results.csv").string() : explicit_path;
}

LedgerRow row_from_result(const ExperimentManifest& m, const RunResult& r,
                          const std::string& stage) {
  LedgerRow row;
  row.aug_spec = r.aug_spec;
  row.seed = r.seed;
  row.method = method_name(m.method);
  row.stage = stage;
  row.train_acc = r.train_acc;
  row.valid_acc = r.valid_acc;
  row.test_acc = r.test_acc;
  row.wall_time_s = r.wall_time_s;
  return row;
}

struct EnumerateArgs {
  std::string base = "randomcrop224";
  int max_extra = 3;
  std::string out;
};

int run_enumerate(const EnumerateArgs& a) {
  const std::vector<AugSpec> specs =
      enumerate_combinations(a.base, canonical_primitives(), a.max_extra);
  std::ofstream file(a.out);
  if (!file) throw std::runtime_error("cannot write " + a.out);
  for (const AugSpec& s : specs) file << format_spec(s) << "\n";
  std::printf("wrote %zu specs to %s\n", specs.size(), a.out.c_str());
  return 0;
}

struct GenDataArgs {
  int classes = 5;
  Index per_class = 200;
  Index side = 40;
  std::uint64_t seed = 7;
  std::string out_dir;
};

int run_gen_data(const GenDataArgs& a) {
  const Dataset ds = generate_glyphs(a.classes, a.per_class, a.side, a.seed);
  save_image_directory(ds, a.out_dir);
  std::printf("wrote %lld images across %d classes to %s\n",
              static_cast<long long>(ds.size()), ds.class_count, a.out_dir.c_str());
  return 0;
}

struct TrainArgs {
  std::string manifest;
  std::string out_dir;
  std::string ledger;
};

int run_train(const TrainArgs& a) {
  const ExperimentManifest m = manifest_from_json_file(a.manifest);
  if (m.method == Method::baseline) {
    const RunResult r = train_baseline(m, a.out_dir);
    append_ledger_row(default_ledger(a.ledger, a.out_dir), row_from_result(m, r, "train"));
    std::printf("train %s seed %llu: train %.4f valid %.4f test %.4f (%.1fs)\n",
                r.aug_spec.c_str(), static_cast<unsigned long long>(r.seed), r.train_acc,
                r.valid_acc, r.test_acc, r.wall_time_s);
  } else {
    const PretrainResult p = pretrain_embedding(m, a.out_dir);
    std::printf("pretrain %s: loss %.4f -> %.4f, checkpoint %s (%.1fs)\n",
                method_name(m.method).c_str(), p.train_loss.front(), p.train_loss.back(),
                p.checkpoint_path.c_str(), p.wall_time_s);
  }
  return 0;
}

int run_finetune(const TrainArgs& a) {
  const ExperimentManifest m = manifest_from_json_file(a.manifest);
  const RunResult r = finetune(m, a.out_dir);
  append_ledger_row(default_ledger(a.ledger, a.out_dir), row_from_result(m, r, "finetune"));
  std::printf("finetune %s seed %llu: train %.4f valid %.4f test %.4f (%.1fs)\n",
              r.aug_spec.c_str(), static_cast<unsigned long long>(r.seed), r.train_acc,
              r.valid_acc, r.test_acc, r.wall_time_s);
  return 0;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
};

int run_evaluate(const EvaluateArgs& a) {
  const ExperimentManifest m = manifest_from_json_file(a.manifest);
  const MicroResNet model = load_model_for(m, a.checkpoint);
  const Dataset ds = provision_dataset(m.dataset);
  SplitSpec sp;
  sp.seed = m.split_seed;
  const SplitResult parts = split(ds, sp);
  const Dataset& part = pick_split(parts, a.split);
  const AugPipeline pipe = build_eval_pipeline(m.input_side, classification_geometry(m));
  const EvalResult ev = evaluate_model(model, part, pipe, m.batch_size);
  std::printf("split %s loss %.6f acc %.6f\n", a.split.c_str(), ev.loss, ev.acc);
  return 0;
}

struct SelectTopArgs {
  std::string ledger;
  std::string strategy = "ttest";
  int k = 4;
  std::string baseline = "randomcrop224";
};

int run_select_top(const SelectTopArgs& a) {
  SelectStrategy strategy;
  if (a.strategy == "ttest") {
    strategy = SelectStrategy::ttest;
  } else if (a.strategy == "mean") {
    strategy = SelectStrategy::mean;
  } else {
    throw std::invalid_argument("unknown strategy '" + a.strategy +
                                "' (expected ttest or mean)");
  }
  const AugRunTable table = table_from_ledger(read_ledger(a.ledger));
  for (const std::string& spec : select_top_k(table, strategy, a.k, a.baseline)) {
    std::printf("%s\n", spec.c_str());
  }
  return 0;
}

struct EmbedArgs {
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  Index sample_n = 0;  // 0 = the whole split
  std::uint64_t seed = 0;
  std::string out;
};

int run_embed(const EmbedArgs& a) {
  const ExperimentManifest m = manifest_from_json_file(a.manifest);
  const MicroResNet model = load_model_for(m, a.checkpoint);
  const Dataset ds = provision_dataset(m.dataset);
  SplitSpec sp;
  sp.seed = m.split_seed;
  const SplitResult parts = split(ds, sp);
  const Dataset& part = pick_split(parts, a.split);
  const Index sample_n = a.sample_n == 0 ? part.size() : a.sample_n;
  const EmbeddingTable table =
      compute_embeddings(model, part, classification_geometry(m), sample_n, a.seed);
  write_embedding_csv(a.out, table);
  std::printf("wrote %zu embeddings of dimension %lld to %s\n", table.ids.size(),
              static_cast<long long>(table.features.cols()), a.out.c_str());
  return 0;
}

struct TsneArgs {
  std::string embeddings;
  std::string out;
  std::string csv;
  Scalar perplexity = 30.0;
  int iterations = 1000;
  Scalar lr = 200.0;
  std::uint64_t seed = 0;
};

int run_tsne(const TsneArgs& a) {
  const std::string csv = a.csv.empty() ? fs::path(a.out).replace_extension(".csv").string()
                                        : a.csv;
  if (fs::weakly_canonical(csv) == fs::weakly_canonical(a.embeddings)) {
    throw std::invalid_argument("point CSV path '" + csv +
                                "' would overwrite the input embeddings; pass --csv");
  }
  const EmbeddingTable table = read_embedding_csv(a.embeddings);
  TsneConfig cfg;
  cfg.perplexity = a.perplexity;
  cfg.iterations = a.iterations;
  cfg.learning_rate = a.lr;
  cfg.seed = a.seed;
  const TsneResult r = tsne(table.features, cfg);
  write_scatter_svg(a.out, r.points, table.labels);
  write_point_csv(csv, table, r.points);
  std::printf("tsne on %lld points: KL %.4f -> %.4f, plot %s, points %s\n",
              static_cast<long long>(r.points.rows()), r.kl_series.front(),
              r.kl_series.back(), a.out.c_str(), csv.c_str());
  return 0;
}

struct ReportArgs {
  std::string ledger;
  std::string out;
};

int run_report(const ReportArgs& a) {
  const std::vector<ReportRow> rows = build_report(read_ledger(a.ledger));
  write_report_csv(a.out, rows);
  std::printf("wrote %zu report rows to %s\n", rows.size(), a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gslab: glyph recognition training experiments"};
  app.require_subcommand(1);

  EnumerateArgs enumerate_args;
  CLI::App* enumerate = app.add_subcommand("enumerate-augs", "Write the augmentation spec pool");
  enumerate->add_option("--base", enumerate_args.base, "Base crop token")
      ->capture_default_str();
  enumerate->add_option("--max-extra", enumerate_args.max_extra,
                        "Largest number of extra primitives per spec")
      ->capture_default_str();
  enumerate->add_option("--out", enumerate_args.out, "Output text file, one spec per line")
      ->required();

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "Render a synthetic glyph image directory");
  gen->add_option("--classes", gen_args.classes, "Number of glyph classes")
      ->capture_default_str();
  gen->add_option("--per-class", gen_args.per_class, "Images per class")->capture_default_str();
  gen->add_option("--side", gen_args.side, "Square image side in pixels")->capture_default_str();
  gen->add_option("--seed", gen_args.seed, "Generator seed")->capture_default_str();
  gen->add_option("--out-dir", gen_args.out_dir, "Directory for label subfolders")->required();

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand(
      "train", "Train from a manifest: cross-entropy, or embedding pretraining");
  train->add_option("--manifest", train_args.manifest, "Manifest JSON path")->required();
  train->add_option("--out-dir", train_args.out_dir, "Run output directory")->required();
  train->add_option("--ledger", train_args.ledger,
                    "Results CSV (default <out-dir>/results.csv)");

  TrainArgs finetune_args;
  CLI::App* finetune_cmd =
      app.add_subcommand("finetune", "Attach a classifier to a pretrained checkpoint");
  finetune_cmd->add_option("--manifest", finetune_args.manifest, "Manifest JSON path")
      ->required();
  finetune_cmd->add_option("--out-dir", finetune_args.out_dir, "Run output directory")
      ->required();
  finetune_cmd->add_option("--ledger", finetune_args.ledger,
                           "Results CSV (default <out-dir>/results.csv)");

  EvaluateArgs eval_args;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Report a checkpoint's loss and accuracy");
  evaluate->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint path")->required();
  evaluate->add_option("--manifest", eval_args.manifest, "Manifest defining data and split")
      ->required();
  evaluate->add_option("--split", eval_args.split, "train, valid, or test")
      ->capture_default_str();

  SelectTopArgs select_args;
  CLI::App* select = app.add_subcommand("select-top", "Rank augmentation specs from a ledger");
  select->add_option("--ledger", select_args.ledger, "Results CSV")->required();
  select->add_option("--strategy", select_args.strategy, "ttest or mean")
      ->capture_default_str();
  select->add_option("--k", select_args.k, "How many specs to print")->capture_default_str();
  select->add_option("--baseline", select_args.baseline, "Spec the t-test pairs against")
      ->capture_default_str();

  EmbedArgs embed_args;
  CLI::App* embed = app.add_subcommand("embed", "Export classifier-input features to CSV");
  embed->add_option("--checkpoint", embed_args.checkpoint, "Checkpoint path")->required();
  embed->add_option("--manifest", embed_args.manifest, "Manifest defining data and split")
      ->required();
  embed->add_option("--split", embed_args.split, "train, valid, or test")
      ->capture_default_str();
  embed->add_option("--sample-n", embed_args.sample_n, "Sample size (0 = whole split)")
      ->capture_default_str();
  embed->add_option("--seed", embed_args.seed, "Sampling seed")->capture_default_str();
  embed->add_option("--out", embed_args.out, "Output CSV path")->required();

  TsneArgs tsne_args;
  CLI::App* tsne_cmd = app.add_subcommand("tsne", "Project an embedding CSV to the plane");
  tsne_cmd->add_option("--embeddings", tsne_args.embeddings, "Embedding CSV path")->required();
  tsne_cmd->add_option("--out", tsne_args.out, "Output SVG scatter plot")->required();
  tsne_cmd->add_option("--csv", tsne_args.csv,
                       "Point CSV path (default: the SVG path with .csv)");
  tsne_cmd->add_option("--perplexity", tsne_args.perplexity, "Gaussian perplexity")
      ->capture_default_str();
  tsne_cmd->add_option("--iterations", tsne_args.iterations, "Gradient descent steps")
      ->capture_default_str();
  tsne_cmd->add_option("--lr", tsne_args.lr, "Learning rate")->capture_default_str();
  tsne_cmd->add_option("--seed", tsne_args.seed, "Layout init seed")->capture_default_str();

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "Aggregate a ledger into a per-spec table");
  report->add_option("--ledger", report_args.ledger, "Results CSV")->required();
  report->add_option("--out", report_args.out, "Report CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (enumerate->parsed()) return run_enumerate(enumerate_args);
    if (gen->parsed()) return run_gen_data(gen_args);
    if (train->parsed()) return run_train(train_args);
    if (finetune_cmd->parsed()) return run_finetune(finetune_args);
    if (evaluate->parsed()) return run_evaluate(eval_args);
    if (select->parsed()) return run_select_top(select_args);
    if (embed->parsed()) return run_embed(embed_args);
    if (tsne_cmd->parsed()) return run_tsne(tsne_args);
    if (report->parsed()) return run_report(report_args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
