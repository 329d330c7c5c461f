#include "gslab/analysis.hpp"

#include "gslab/nn.hpp"
#include "gslab/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace gslab {

namespace {

constexpr std::uint64_t kTagSample = 0x656d6264ULL;

// Enough digits to reconstruct the exact double on read-back.
std::string full_precision(Scalar v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                          "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

}  // namespace

EmbeddingTable compute_embeddings(const MicroResNet& model, const Dataset& split,
                                  const PipelineGeometry& geometry, Index sample_n,
                                  std::uint64_t seed) {
  const Index n = split.size();
  if (n == 0) throw std::invalid_argument("compute_embeddings: empty split");
  if (sample_n < 1 || sample_n > n) {
    throw std::invalid_argument("compute_embeddings: sample_n must lie in [1, " +
                                std::to_string(n) + "]");
  }

  std::vector<Index> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), Index{0});
  if (sample_n < n) {
    Rng rng = Rng::derive(seed, {kTagSample});
    for (Index i = 0; i < sample_n; ++i) {
      const Index j = i + static_cast<Index>(rng.uniform_int(static_cast<std::int64_t>(n - i)));
      std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }
    ids.resize(static_cast<std::size_t>(sample_n));
    std::sort(ids.begin(), ids.end());
  }

  const AugPipeline eval_pipe = build_eval_pipeline(geometry.final_side != 0 ? geometry.final_side
                                                                             : geometry.crop_side,
                                                    geometry);

  EmbeddingTable table;
  table.ids = ids;
  const Index total = static_cast<Index>(ids.size());
  constexpr Index kBatch = 64;
  for (Index start = 0; start < total; start += kBatch) {
    const Index count = std::min(kBatch, total - start);
    const std::vector<Index> chunk(ids.begin() + start, ids.begin() + start + count);
    const Tensor x = assemble_batch(split, chunk, eval_pipe, 0);
    const ForwardResult r = micro_resnet_forward_eval(model, x);
    MatrixX feats = model.config.classifier_on_embed
                        ? linear_forward(r.features, model.embed_head->w, model.embed_head->b)
                        : r.features;
    if (table.features.size() == 0) table.features.resize(total, feats.cols());
    table.features.middleRows(start, count) = feats;
    for (Index i : chunk) {
      table.labels.push_back(split.items[static_cast<std::size_t>(i)].label);
    }
  }
  return table;
}

void write_embedding_csv(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out = open_for_write(path);
  out << "id,label";
  for (Index f = 0; f < table.features.cols(); ++f) out << ",f" << f;
  out << "\n";
  for (Index i = 0; i < table.features.rows(); ++i) {
    out << table.ids[static_cast<std::size_t>(i)] << ','
        << table.labels[static_cast<std::size_t>(i)];
    for (Index f = 0; f < table.features.cols(); ++f) {
      out << ',' << full_precision(table.features(i, f));
    }
    out << "\n";
  }
}

EmbeddingTable read_embedding_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  const std::vector<std::string> header = split_fields(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
    throw std::runtime_error(path + ": expected header id,label,f0,...");
  }
  const Index dim = static_cast<Index>(header.size()) - 2;

  EmbeddingTable table;
  std::vector<Scalar> values;
  Index rows = 0;
  for (Index lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (static_cast<Index>(fields.size()) != dim + 2) {
      throw std::runtime_error(path + " line " + std::to_string(lineno) +
                               ": expected " + std::to_string(dim + 2) + " fields");
    }
    try {
      table.ids.push_back(static_cast<Index>(std::stoll(fields[0])));
      table.labels.push_back(std::stoi(fields[1]));
      for (Index f = 0; f < dim; ++f) {
        values.push_back(std::stod(fields[static_cast<std::size_t>(f) + 2]));
      }
    } catch (const std::exception&) {
      throw std::runtime_error(path + " line " + std::to_string(lineno) + ": malformed number");
    }
    ++rows;
  }
  table.features.resize(rows, dim);
  for (Index i = 0; i < rows; ++i) {
    for (Index f = 0; f < dim; ++f) {
      table.features(i, f) = values[static_cast<std::size_t>(i * dim + f)];
    }
  }
  return table;
}

void write_point_csv(const std::string& path, const EmbeddingTable& table, const MatrixX& points) {
  if (points.rows() != static_cast<Index>(table.ids.size()) || points.cols() != 2) {
    throw std::invalid_argument("write_point_csv: points must be one (x, y) row per id");
  }
  std::ofstream out = open_for_write(path);
  out << "id,label,x,y\n";
  for (Index i = 0; i < points.rows(); ++i) {
    out << table.ids[static_cast<std::size_t>(i)] << ','
        << table.labels[static_cast<std::size_t>(i)] << ',' << full_precision(points(i, 0))
        << ',' << full_precision(points(i, 1)) << "\n";
  }
}

void write_scatter_svg(const std::string& path, const MatrixX& points,
                       const std::vector<int>& labels) {
  if (points.cols() != 2 || points.rows() != static_cast<Index>(labels.size())) {
    throw std::invalid_argument("write_scatter_svg: need one label per (x, y) row");
  }
  if (points.rows() == 0) throw std::invalid_argument("write_scatter_svg: no points");

  constexpr Scalar kSide = 640.0;
  constexpr Scalar kMargin = 30.0;

  const Scalar min_x = points.col(0).minCoeff();
  const Scalar max_x = points.col(0).maxCoeff();
  const Scalar min_y = points.col(1).minCoeff();
  const Scalar max_y = points.col(1).maxCoeff();
  const Scalar span = std::max({max_x - min_x, max_y - min_y, Scalar(1e-12)});
  const Scalar scale = (kSide - 2.0 * kMargin) / span;
  // Center the shorter axis inside the square drawing area.
  const Scalar off_x = kMargin + 0.5 * ((kSide - 2.0 * kMargin) - (max_x - min_x) * scale);
  const Scalar off_y = kMargin + 0.5 * ((kSide - 2.0 * kMargin) - (max_y - min_y) * scale);

  std::vector<int> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::map<int, std::size_t> color_of;
  for (std::size_t i = 0; i < distinct.size(); ++i) color_of[distinct[i]] = i % 10;

  std::ofstream out = open_for_write(path);
  char buf[160];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
         "viewBox=\"0 0 640 640\">\n";
  out << "<rect width=\"640\" height=\"640\" fill=\"white\"/>\n";
  for (Index i = 0; i < points.rows(); ++i) {
    const Scalar cx = off_x + (points(i, 0) - min_x) * scale;
    const Scalar cy = kSide - (off_y + (points(i, 1) - min_y) * scale);
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\"/>\n",
                  cx, cy, kPalette[color_of[labels[static_cast<std::size_t>(i)]]]);
    out << buf;
  }
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    const Scalar y = 16.0 + 18.0 * static_cast<Scalar>(i);
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"8\" y=\"%.1f\" width=\"12\" height=\"12\" fill=\"%s\"/>"
                  "<text x=\"24\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"12\">"
                  "class %d</text>\n",
                  y - 10.0, kPalette[i % 10], y, distinct[i]);
    out << buf;
  }
  out << "</svg>\n";
}

std::vector<ReportRow> build_report(const std::vector<LedgerRow>& ledger) {
  using Key = std::tuple<std::string, std::uint64_t, std::string, std::string>;
  std::map<Key, LedgerRow> latest;
  for (const auto& row : ledger) {
    latest[{row.aug_spec, row.seed, row.method, row.stage}] = row;
  }

  std::map<std::string, std::vector<const LedgerRow*>> by_spec;
  for (const auto& [key, row] : latest) by_spec[row.aug_spec].push_back(&row);

  std::vector<ReportRow> report;
  int index = 1;
  for (const auto& [spec, rows] : by_spec) {
    ReportRow r;
    r.index = index++;
    r.aug_spec = spec;
    for (const LedgerRow* row : rows) {
      r.train_acc += row->train_acc;
      r.valid_acc += row->valid_acc;
      r.test_acc += row->test_acc;
    }
    const Scalar count = static_cast<Scalar>(rows.size());
    r.train_acc /= count;
    r.valid_acc /= count;
    r.test_acc /= count;
    report.push_back(std::move(r));
  }
  return report;
}

void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ofstream out = open_for_write(path);
  char buf[64];
  out << "index,aug_spec,train_acc,valid_acc,test_acc\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f\n", r.train_acc, r.valid_acc, r.test_acc);
    out << r.index << ",\"" << r.aug_spec << "\"" << buf;
  }
}

}  // namespace gslab
