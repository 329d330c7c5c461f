#include "gslab/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gslab {

namespace {

ImageBuffer apply_random_crop(const AugOp& op, const ImageBuffer& img, Rng& rng) {
  if (op.side > img.height || op.side > img.width) {
    throw std::invalid_argument("random_crop: side larger than input");
  }
  const Index top = rng.uniform_int(img.height - op.side + 1);
  const Index left = rng.uniform_int(img.width - op.side + 1);
  return crop(img, top, left, op.side, op.side);
}

ImageBuffer apply_affine(const AugOp& op, const ImageBuffer& img, Rng& rng) {
  if (op.shift_limit < 0.0 || op.scale_limit < 0.0 || op.rotate_limit < 0.0) {
    throw std::invalid_argument("affine: limits must be non-negative");
  }
  // draw order: dx, dy, scale, angle
  const Scalar dx = rng.uniform(-op.shift_limit, op.shift_limit) * static_cast<Scalar>(img.width);
  const Scalar dy = rng.uniform(-op.shift_limit, op.shift_limit) * static_cast<Scalar>(img.height);
  const Scalar scale = rng.uniform(1.0 - op.scale_limit, 1.0 + op.scale_limit);
  const Scalar angle = rng.uniform(-op.rotate_limit, op.rotate_limit);
  return affine_warp(img, dx, dy, scale, angle);
}

ImageBuffer apply_colorjitter(const AugOp& op, const ImageBuffer& img, Rng& rng) {
  // draw order: brightness, contrast, saturation, hue factors, then a
  // Fisher-Yates shuffle of the sub-op order
  const Scalar b = rng.uniform(op.brightness_lo, op.brightness_hi);
  const Scalar c = rng.uniform(op.contrast_lo, op.contrast_hi);
  const Scalar s = rng.uniform(op.saturation_lo, op.saturation_hi);
  const Scalar h = rng.uniform(op.hue_lo, op.hue_hi);
  int order[4] = {0, 1, 2, 3};
  for (int i = 3; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(i + 1));
    std::swap(order[i], order[j]);
  }
  ImageBuffer out = img;
  for (int step : order) {
    switch (step) {
      case 0: out = adjust_brightness(out, b); break;
      case 1: out = adjust_contrast(out, c); break;
      case 2: out = adjust_saturation(out, s); break;
      default: out = adjust_hue(out, h); break;
    }
  }
  return out;
}

ImageBuffer apply_gaussian_blur(const AugOp& op, const ImageBuffer& img, Rng& rng) {
  if (op.blur_lo < 1 || op.blur_hi < op.blur_lo) {
    throw std::invalid_argument("gaussian_blur: bad kernel range");
  }
  Index k = op.blur_lo + rng.uniform_int(op.blur_hi - op.blur_lo + 1);
  if (k % 2 == 0) ++k;  // even draws round up to the next odd size
  return gaussian_blur(img, k, op.sigma);
}

}  // namespace

ImageBuffer apply_op(const AugOp& op, const ImageBuffer& img, Rng& rng) {
  switch (op.kind) {
    case AugKind::resize:
      return resize_bilinear(img, op.side, op.side);
    case AugKind::random_crop:
      return apply_random_crop(op, img, rng);
    case AugKind::center_crop:
      return center_crop(img, op.side);
    case AugKind::hflip:
      return hflip(img);
    case AugKind::erosion:
      return morpho_erode(img, op.kernel_w, op.kernel_h);
    case AugKind::dilation:
      return morpho_dilate(img, op.kernel_w, op.kernel_h);
    case AugKind::affine:
      return apply_affine(op, img, rng);
    case AugKind::colorjitter:
      return apply_colorjitter(op, img, rng);
    case AugKind::gaussian_blur:
      return apply_gaussian_blur(op, img, rng);
    case AugKind::invert:
      return invert(img);
    case AugKind::gray:
      return to_gray(img);
    case AugKind::normalize:
      return normalize(img, op.mean, op.std);
  }
  throw std::logic_error("apply_op: unknown op kind");
}

ImageBuffer apply_pipeline(const AugPipeline& p, const ImageBuffer& img,
                           std::uint64_t image_index, std::uint64_t epoch) {
  Rng rng = Rng::derive(p.seed, {image_index, epoch});
  ImageBuffer out = img;
  for (const AugOp& op : p.ops) {
    if (op.p < 0.0 || op.p > 1.0) {
      throw std::invalid_argument("apply_pipeline: probability outside [0, 1]");
    }
    // gate draw happens for every op, applied or not
    const bool apply = rng.bernoulli(op.p);
    if (apply) out = apply_op(op, out, rng);
  }
  return out;
}

Index simclr_crop_side(Index resize_side, Scalar min_area_fraction) {
  if (min_area_fraction <= 0.0 || min_area_fraction > 1.0) {
    throw std::invalid_argument("simclr_crop_side: area fraction must be in (0, 1]");
  }
  return static_cast<Index>(
      std::lround(static_cast<Scalar>(resize_side) * std::sqrt(min_area_fraction)));
}

}  // namespace gslab
