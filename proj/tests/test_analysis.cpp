#include <doctest.h>

#include "gslab/analysis.hpp"
#include "gslab/rng.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace gslab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Scratch {
  fs::path dir;
  Scratch(const std::string& name) : dir(fs::temp_directory_path() / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string file(const std::string& n) const { return (dir / n).string(); }
};

}  // namespace

TEST_CASE("compute_embeddings covers the split in id order") {
  const Dataset ds = generate_glyphs(3, 10, 16, 2);
  MicroResNetConfig cfg;
  cfg.widths = {4};
  cfg.input_side = 12;
  cfg.num_classes = 3;
  const MicroResNet model = make_micro_resnet(cfg, 1);
  const PipelineGeometry geom{14, 12, 12};

  const EmbeddingTable full = compute_embeddings(model, ds, geom, ds.size(), 7);
  REQUIRE(full.features.rows() == 30);
  CHECK(full.features.cols() == 4);
  for (Index i = 0; i < 30; ++i) {
    CHECK(full.ids[static_cast<std::size_t>(i)] == i);
    CHECK(full.labels[static_cast<std::size_t>(i)] ==
          ds.items[static_cast<std::size_t>(i)].label);
  }

  const EmbeddingTable sample = compute_embeddings(model, ds, geom, 10, 7);
  REQUIRE(sample.features.rows() == 10);
  for (std::size_t i = 1; i < sample.ids.size(); ++i) {
    CHECK(sample.ids[i] > sample.ids[i - 1]);
  }
  // Sampled rows agree with the full table at the same ids.
  for (Index i = 0; i < 10; ++i) {
    const Index id = sample.ids[static_cast<std::size_t>(i)];
    CHECK((sample.features.row(i) - full.features.row(id)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(sample.labels[static_cast<std::size_t>(i)] ==
          full.labels[static_cast<std::size_t>(id)]);
  }

  const EmbeddingTable again = compute_embeddings(model, ds, geom, 10, 7);
  CHECK(again.ids == sample.ids);
  const EmbeddingTable other = compute_embeddings(model, ds, geom, 10, 8);
  CHECK(other.ids != sample.ids);

  CHECK_THROWS_AS(compute_embeddings(model, ds, geom, 0, 7), std::invalid_argument);
  CHECK_THROWS_AS(compute_embeddings(model, ds, geom, 31, 7), std::invalid_argument);
}

TEST_CASE("compute_embeddings reads the classifier input layer") {
  const Dataset ds = generate_glyphs(2, 6, 16, 3);
  MicroResNetConfig cfg;
  cfg.widths = {4};
  cfg.input_side = 12;
  cfg.num_classes = 2;
  cfg.embed_dim = 5;
  cfg.classifier_on_embed = true;
  const MicroResNet model = make_micro_resnet(cfg, 1);

  const EmbeddingTable t =
      compute_embeddings(model, ds, PipelineGeometry{14, 12, 12}, ds.size(), 1);
  CHECK(t.features.cols() == 5);
}

TEST_CASE("embedding csv round trips exactly") {
  Scratch scratch("gslab_analysis_csv");
  EmbeddingTable t;
  t.ids = {0, 3, 7};
  t.labels = {2, 0, 1};
  t.features.resize(3, 4);
  Rng rng(5);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 4; ++j) t.features(i, j) = rng.normal() * 1e3;
  }

  const std::string path = scratch.file("emb.csv");
  write_embedding_csv(path, t);
  const EmbeddingTable back = read_embedding_csv(path);
  CHECK(back.ids == t.ids);
  CHECK(back.labels == t.labels);
  CHECK((back.features - t.features).cwiseAbs().maxCoeff() == 0.0);

  {
    std::ofstream bad(scratch.file("bad_header.csv"));
    bad << "id,name,f0\n1,2,3\n";
  }
  CHECK_THROWS_AS(read_embedding_csv(scratch.file("bad_header.csv")), std::runtime_error);
  {
    std::ofstream bad(scratch.file("short_row.csv"));
    bad << "id,label,f0,f1\n1,2,0.5\n";
  }
  CHECK_THROWS_WITH_AS(read_embedding_csv(scratch.file("short_row.csv")),
                       doctest::Contains("line 2"), std::runtime_error);
  {
    std::ofstream bad(scratch.file("not_num.csv"));
    bad << "id,label,f0\n1,2,abc\n";
  }
  CHECK_THROWS_AS(read_embedding_csv(scratch.file("not_num.csv")), std::runtime_error);
  CHECK_THROWS_AS(read_embedding_csv(scratch.file("absent.csv")), std::runtime_error);
}

TEST_CASE("point csv and scatter svg artifacts") {
  Scratch scratch("gslab_analysis_plot");
  EmbeddingTable t;
  MatrixX points(20, 2);
  std::vector<int> labels;
  Rng rng(9);
  for (Index i = 0; i < 20; ++i) {
    t.ids.push_back(i);
    const int label = i < 10 ? 0 : 4;
    t.labels.push_back(label);
    labels.push_back(label);
    points(i, 0) = rng.normal() + (label ? 10.0 : 0.0);
    points(i, 1) = rng.normal();
  }

  const std::string csv = scratch.file("points.csv");
  write_point_csv(csv, t, points);
  const std::string content = slurp(csv);
  CHECK(content.rfind("id,label,x,y\n", 0) == 0);
  CHECK(std::count(content.begin(), content.end(), '\n') == 21);

  const std::string svg = scratch.file("plot.svg");
  write_scatter_svg(svg, points, labels);
  const std::string image = slurp(svg);
  CHECK(image.find("<svg") != std::string::npos);
  std::size_t circles = 0;
  for (std::size_t pos = 0; (pos = image.find("<circle", pos)) != std::string::npos; ++pos) {
    ++circles;
  }
  CHECK(circles == 20);
  CHECK(image.find("class 0") != std::string::npos);
  CHECK(image.find("class 4") != std::string::npos);

  write_scatter_svg(scratch.file("plot2.svg"), points, labels);
  CHECK(slurp(scratch.file("plot2.svg")) == image);

  MatrixX wrong(3, 2);
  CHECK_THROWS_AS(write_point_csv(scratch.file("x.csv"), t, wrong), std::invalid_argument);
  CHECK_THROWS_AS(write_scatter_svg(scratch.file("x.svg"), wrong, labels),
                  std::invalid_argument);
}

TEST_CASE("build_report deduplicates then averages per spec") {
  std::vector<LedgerRow> ledger;
  const auto push = [&](const std::string& spec, std::uint64_t seed, Scalar tr, Scalar va,
                        Scalar te) {
    LedgerRow r;
    r.aug_spec = spec;
    r.seed = seed;
    r.method = "baseline";
    r.stage = "train";
    r.train_acc = tr;
    r.valid_acc = va;
    r.test_acc = te;
    ledger.push_back(r);
  };
  push("b,x", 1, 0.50, 0.60, 0.55);
  push("b,x", 1, 0.52, 0.62, 0.57);  // same key: replaces the row above
  push("b,x", 2, 0.54, 0.64, 0.59);
  push("a", 1, 0.40, 0.50, 0.45);
  push("a", 2, 0.42, 0.52, 0.47);

  const std::vector<ReportRow> report = build_report(ledger);
  REQUIRE(report.size() == 2);
  CHECK(report[0].index == 1);
  CHECK(report[0].aug_spec == "a");
  CHECK(report[0].train_acc == doctest::Approx(0.41).epsilon(1e-12));
  CHECK(report[0].valid_acc == doctest::Approx(0.51).epsilon(1e-12));
  CHECK(report[0].test_acc == doctest::Approx(0.46).epsilon(1e-12));
  CHECK(report[1].index == 2);
  CHECK(report[1].aug_spec == "b,x");
  CHECK(report[1].train_acc == doctest::Approx(0.53).epsilon(1e-12));
  CHECK(report[1].valid_acc == doctest::Approx(0.63).epsilon(1e-12));
  CHECK(report[1].test_acc == doctest::Approx(0.58).epsilon(1e-12));

  Scratch scratch("gslab_analysis_report");
  const std::string path = scratch.file("report.csv");
  write_report_csv(path, report);
  CHECK(slurp(path) ==
        "index,aug_spec,train_acc,valid_acc,test_acc\n"
        "1,\"a\",0.410000,0.510000,0.460000\n"
        "2,\"b,x\",0.530000,0.630000,0.580000\n");
}
