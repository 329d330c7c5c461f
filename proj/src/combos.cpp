#include "gslab/combos.hpp"

#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gslab {

namespace {

bool is_base_token(const std::string& token) {
  const std::string prefix = "randomcrop";
  if (token.size() <= prefix.size() || token.compare(0, prefix.size(), prefix) != 0) {
    return false;
  }
  for (std::size_t i = prefix.size(); i < token.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(token[i]))) return false;
  }
  return true;
}

AugOp primitive_op(const std::string& token) {
  AugOp op;
  op.p = 0.5;
  if (token == "morpho_erosion") {
    op.kind = AugKind::erosion;
  } else if (token == "morpho_dilation") {
    op.kind = AugKind::dilation;
  } else if (token == "affine") {
    op.kind = AugKind::affine;
  } else if (token == "colorjitter") {
    op.kind = AugKind::colorjitter;
  } else if (token == "hflip") {
    op.kind = AugKind::hflip;
  } else if (token == "invert") {
    op.kind = AugKind::invert;
  } else if (token == "gaussianblur") {
    op.kind = AugKind::gaussian_blur;
  } else if (token == "gray") {
    op.kind = AugKind::gray;
  } else {
    throw std::invalid_argument("parse_spec: unknown token \"" + token + "\"");
  }
  return op;
}

AugOp normalize_op() {
  AugOp op;
  op.kind = AugKind::normalize;
  op.p = 1.0;
  op.mean = kChannelMean;
  op.std = kChannelStd;
  return op;
}

}  // namespace

const std::vector<std::string>& canonical_primitives() {
  static const std::vector<std::string> names = {
      "morpho_erosion", "morpho_dilation", "affine",       "colorjitter",
      "hflip",          "invert",          "gaussianblur", "gray",
  };
  return names;
}

std::string format_spec(const AugSpec& spec) {
  std::string out;
  for (std::size_t i = 0; i < spec.names.size(); ++i) {
    if (i) out += ',';
    out += spec.names[i];
  }
  return out;
}

AugSpec parse_tokens(const std::string& s) {
  if (s.empty()) throw std::invalid_argument("parse_spec: empty spec string");
  AugSpec spec;
  std::stringstream ss(s);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) throw std::invalid_argument("parse_spec: empty token in \"" + s + "\"");
    spec.names.push_back(token);
  }
  if (spec.names.empty()) throw std::invalid_argument("parse_spec: empty spec string");
  if (!is_base_token(spec.names[0])) {
    throw std::invalid_argument("parse_spec: first token must be a randomcrop base, got \"" +
                                spec.names[0] + "\"");
  }
  std::set<std::string> seen;
  for (std::size_t i = 1; i < spec.names.size(); ++i) {
    primitive_op(spec.names[i]);  // validates the token
    if (!seen.insert(spec.names[i]).second) {
      throw std::invalid_argument("parse_spec: duplicate token \"" + spec.names[i] + "\"");
    }
  }
  return spec;
}

Index spec_crop_side(const AugSpec& spec) {
  if (spec.names.empty() || !is_base_token(spec.names[0])) {
    throw std::invalid_argument("spec_crop_side: spec has no randomcrop base token");
  }
  return static_cast<Index>(std::stol(spec.names[0].substr(10)));
}

std::vector<AugSpec> enumerate_combinations(const std::string& base,
                                            const std::vector<std::string>& primitives,
                                            int max_extra) {
  if (!is_base_token(base)) {
    throw std::invalid_argument("enumerate_combinations: invalid base token \"" + base + "\"");
  }
  std::set<std::string> unique(primitives.begin(), primitives.end());
  if (unique.size() != primitives.size()) {
    throw std::invalid_argument("enumerate_combinations: duplicate primitive tokens");
  }
  const int n = static_cast<int>(primitives.size());
  if (max_extra < 0 || max_extra > n) {
    throw std::invalid_argument("enumerate_combinations: max_extra outside [0, primitive count]");
  }

  std::vector<AugSpec> out;
  for (int size = 0; size <= max_extra; ++size) {
    // lexicographic index combinations of the primitive list
    std::vector<int> idx(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
    while (true) {
      AugSpec spec;
      spec.names.push_back(base);
      for (int i : idx) spec.names.push_back(primitives[static_cast<std::size_t>(i)]);
      out.push_back(std::move(spec));
      if (size == 0) break;
      int pos = size - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - size + pos) --pos;
      if (pos < 0) break;
      ++idx[static_cast<std::size_t>(pos)];
      for (int i = pos + 1; i < size; ++i) {
        idx[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i - 1)] + 1;
      }
    }
  }
  return out;
}

Index resolve_crop_side(const AugSpec& spec, const PipelineGeometry& geometry) {
  return geometry.crop_side > 0 ? geometry.crop_side : spec_crop_side(spec);
}

AugPipeline build_train_pipeline(const AugSpec& spec, const PipelineGeometry& geometry,
                                 std::uint64_t seed) {
  if (geometry.resize_side < 1) {
    throw std::invalid_argument("build_train_pipeline: resize side must be >= 1");
  }
  const Index crop = resolve_crop_side(spec, geometry);
  if (crop < 1 || crop > geometry.resize_side) {
    throw std::invalid_argument("build_train_pipeline: crop side " + std::to_string(crop) +
                                " does not fit the resize side " +
                                std::to_string(geometry.resize_side));
  }
  AugPipeline p;
  p.seed = seed;

  AugOp resize;
  resize.kind = AugKind::resize;
  resize.side = geometry.resize_side;
  p.ops.push_back(resize);

  AugOp rcrop;
  rcrop.kind = AugKind::random_crop;
  rcrop.side = crop;
  rcrop.p = 1.0;
  p.ops.push_back(rcrop);

  for (std::size_t i = 1; i < spec.names.size(); ++i) {
    p.ops.push_back(primitive_op(spec.names[i]));
  }

  if (geometry.final_side > 0 && geometry.final_side != crop) {
    AugOp tail;
    tail.kind = AugKind::resize;
    tail.side = geometry.final_side;
    p.ops.push_back(tail);
  }
  p.ops.push_back(normalize_op());
  return p;
}

AugPipeline build_eval_pipeline(Index crop_side, const PipelineGeometry& geometry) {
  if (geometry.resize_side < 1) {
    throw std::invalid_argument("build_eval_pipeline: resize side must be >= 1");
  }
  if (crop_side < 1 || crop_side > geometry.resize_side) {
    throw std::invalid_argument("build_eval_pipeline: crop side does not fit the resize side");
  }
  AugPipeline p;
  AugOp resize;
  resize.kind = AugKind::resize;
  resize.side = geometry.resize_side;
  p.ops.push_back(resize);

  AugOp ccrop;
  ccrop.kind = AugKind::center_crop;
  ccrop.side = crop_side;
  p.ops.push_back(ccrop);

  if (geometry.final_side > 0 && geometry.final_side != crop_side) {
    AugOp tail;
    tail.kind = AugKind::resize;
    tail.side = geometry.final_side;
    p.ops.push_back(tail);
  }
  p.ops.push_back(normalize_op());
  return p;
}

AugPipeline parse_spec(const std::string& s, const PipelineGeometry& geometry,
                       std::uint64_t seed) {
  return build_train_pipeline(parse_tokens(s), geometry, seed);
}

}  // namespace gslab
