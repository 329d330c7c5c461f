#pragma once

#include "gslab/augment.hpp"
#include "gslab/image.hpp"
#include "gslab/rng.hpp"
#include "gslab/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace gslab {

struct DatasetItem {
  ImageBuffer image;
  int label = 0;
};

struct Dataset {
  std::vector<DatasetItem> items;
  int class_count = 0;
  std::string name;

  Index size() const { return static_cast<Index>(items.size()); }
};

// Checks label range and that no class is empty; throws on violation.
void validate_dataset(const Dataset& ds);

// Renders `per_class` images per class at the given side. Each class is a
// fixed stroke template drawn with seeded jitter in position (within 10% of
// the side), rotation (within 10 degrees), stroke thickness, per-image
// contrast, and additive background noise. Deterministic per seed.
Dataset generate_glyphs(int class_count, Index per_class, Index side, std::uint64_t seed);

struct AnnotationRecord {
  std::string image_path;
  Index x = 0, y = 0, w = 0, h = 0;
  std::string label;
};

// Parses a CSV file with header `image_path,x,y,w,h,label`. Relative image
// paths are resolved against the CSV's directory.
std::vector<AnnotationRecord> read_annotation_csv(const std::string& path);

// One dataset item per record, cropped from the referenced image. Labels map
// through `label_map`; the overload without a map assigns ids to the sorted
// distinct label tokens. A box extending outside its image raises an error
// naming the record.
Dataset crop_from_annotations(const std::vector<AnnotationRecord>& records,
                              const std::map<std::string, int>& label_map);
Dataset crop_from_annotations(const std::vector<AnnotationRecord>& records);

// Loads a directory laid out as root/<label>/<image file>, label ids assigned
// to the sorted label directory names.
Dataset load_image_directory(const std::string& root);

// Writes the dataset in the directory layout above (PNG files).
void save_image_directory(const Dataset& ds, const std::string& root,
                          const std::vector<std::string>& label_names = {});

struct SplitSpec {
  Scalar train_fraction = 0.70;
  Scalar valid_fraction = 0.15;
  Scalar test_fraction = 0.15;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train, valid, test;
};

// Seeded uniform shuffle, then train = floor(train_fraction * N),
// valid = floor(valid_fraction * N), test = the remainder.
SplitResult split(const Dataset& ds, const SplitSpec& spec);

// Item index triples: positives share their anchor's label (distinct item),
// negatives carry a different label.
struct TripletBatch {
  std::vector<Index> anchor, positive, negative;
};

TripletBatch make_triplet_batch(const Dataset& train, Index n, Rng& rng);

// Label-free handle used by the self-supervised path: the contrastive builder
// works on these views and never sees a label field.
struct UnlabeledImage {
  const ImageBuffer* image = nullptr;
  Index index = 0;
};

std::vector<UnlabeledImage> unlabeled_view(const Dataset& ds);

// Two independent augmented views per sampled source image, interleaved as
// [a1, b1, a2, b2, ...] so view i pairs with view (i xor 1). The two views of
// source j consume the pipeline streams for image indices 2j and 2j+1.
struct ContrastiveBatch {
  Tensor views;  // 2n x C x H x W
};

ContrastiveBatch make_contrastive_batch(const std::vector<UnlabeledImage>& pool, Index n,
                                        const AugPipeline& pipeline, Index epoch, Rng& rng);

// Applies the pipeline to the listed items (stream keyed by item index and
// epoch) and stacks the results into an NCHW batch.
Tensor assemble_batch(const Dataset& ds, const std::vector<Index>& items,
                      const AugPipeline& pipeline, Index epoch);

}  // namespace gslab
