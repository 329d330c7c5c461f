#pragma once

#include "gslab/combos.hpp"
#include "gslab/core.hpp"
#include "gslab/data.hpp"
#include "gslab/resnet.hpp"
#include "gslab/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gslab {

struct EmbeddingTable {
  std::vector<Index> ids;  // item indices within the source split, ascending
  std::vector<int> labels;
  MatrixX features;  // one row per id
};

// Features feeding the classification layer: the embedding-head output when
// the model classifies on it, the pooled backbone features otherwise.
// Computed in eval mode over a seeded uniform sample without replacement;
// sample_n equal to the split size covers every item. Rows are ordered by id.
EmbeddingTable compute_embeddings(const MicroResNet& model, const Dataset& split,
                                  const PipelineGeometry& geometry, Index sample_n,
                                  std::uint64_t seed);

// CSV with header id,label,f0..f{F-1}; feature values round-trip exactly.
void write_embedding_csv(const std::string& path, const EmbeddingTable& table);
EmbeddingTable read_embedding_csv(const std::string& path);

// Planar layout artifacts: a point table (id,label,x,y) and a scatter plot
// with one color per label.
void write_point_csv(const std::string& path, const EmbeddingTable& table, const MatrixX& points);
void write_scatter_svg(const std::string& path, const MatrixX& points,
                       const std::vector<int>& labels);

struct ReportRow {
  int index = 0;
  std::string aug_spec;
  Scalar train_acc = 0.0, valid_acc = 0.0, test_acc = 0.0;
};

// Ledger rows deduplicated by (spec, seed, method, stage) keeping the last,
// then averaged per spec over the surviving rows; one row per spec, ordered
// by spec string, indexed from 1.
std::vector<ReportRow> build_report(const std::vector<LedgerRow>& ledger);

// CSV with header index,aug_spec,train_acc,valid_acc,test_acc; the spec field
// is quoted since spec strings contain commas.
void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows);

}  // namespace gslab
