#pragma once

#include "gslab/augment.hpp"

#include <string>
#include <vector>

namespace gslab {

// Augmentation spec strings: comma-separated op tokens, base crop first,
// e.g. "randomcrop224,morpho_erosion,gaussianblur".

// The eight combinable primitives in canonical table order.
const std::vector<std::string>& canonical_primitives();

struct AugSpec {
  std::vector<std::string> names;  // base token first

  int order() const { return static_cast<int>(names.size()); }
};

std::string format_spec(const AugSpec& spec);

// Splits and validates a spec string: known tokens only, base crop first, no
// duplicates. Throws std::invalid_argument naming the offending token.
AugSpec parse_tokens(const std::string& s);

// Crop side encoded in the base token ("randomcrop224" -> 224).
Index spec_crop_side(const AugSpec& spec);

// All subsets of the primitives with size 0..max_extra appended to the base,
// each subset in canonical order, listed by (subset size, lexicographic index
// order). The defaults yield the full 93-spec pool.
std::vector<AugSpec> enumerate_combinations(
    const std::string& base = "randomcrop224",
    const std::vector<std::string>& primitives = canonical_primitives(),
    int max_extra = 3);

// How spec tokens turn into concrete pipelines. crop_side 0 takes the side
// from the base token; final_side 0 keeps the crop side (no tail resize).
struct PipelineGeometry {
  Index resize_side = 256;
  Index crop_side = 0;
  Index final_side = 0;
};

Index resolve_crop_side(const AugSpec& spec, const PipelineGeometry& geometry);

// resize -> random crop (p=1) -> extras (p=0.5 each) -> optional tail resize
// to final_side -> normalize. Throws at build time if the crop cannot fit.
AugPipeline build_train_pipeline(const AugSpec& spec, const PipelineGeometry& geometry,
                                 std::uint64_t seed);

// resize -> center crop -> optional tail resize -> normalize; no randomness.
AugPipeline build_eval_pipeline(Index crop_side, const PipelineGeometry& geometry);

// Convenience: parse_tokens + build_train_pipeline.
AugPipeline parse_spec(const std::string& s, const PipelineGeometry& geometry = {},
                       std::uint64_t seed = 0);

}  // namespace gslab
