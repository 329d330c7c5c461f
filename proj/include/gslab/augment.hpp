#pragma once

#include "gslab/image.hpp"
#include "gslab/rng.hpp"

#include <string>
#include <vector>

namespace gslab {

// Standardization constants used by every pipeline's closing normalize op.
inline const std::vector<Scalar> kChannelMean = {0.485, 0.456, 0.406};
inline const std::vector<Scalar> kChannelStd = {0.229, 0.224, 0.225};

enum class AugKind {
  resize,
  random_crop,
  center_crop,
  hflip,
  erosion,
  dilation,
  affine,
  colorjitter,
  gaussian_blur,
  invert,
  gray,
  normalize,
};

// Tagged op description; only the fields of the active kind matter. The
// defaults are the study's hyperparameters.
struct AugOp {
  AugKind kind = AugKind::resize;
  Scalar p = 1.0;  // apply probability, gated per image

  Index side = 0;                        // resize / crops
  Index kernel_w = 7, kernel_h = 7;      // morphology
  Scalar shift_limit = 0.05;             // affine, fraction of the side
  Scalar scale_limit = 0.1;
  Scalar rotate_limit = 30.0;            // degrees
  Scalar brightness_lo = 0.8, brightness_hi = 1.0;  // colorjitter ranges
  Scalar contrast_lo = 0.8, contrast_hi = 1.0;
  Scalar saturation_lo = 0.8, saturation_hi = 1.0;
  Scalar hue_lo = -0.5, hue_hi = 0.5;
  Index blur_lo = 3, blur_hi = 7;        // gaussian blur kernel range
  Scalar sigma = 0.0;                    // 0 = derive from kernel size
  std::vector<Scalar> mean, std;         // normalize
};

// Ordered, seeded, probability-gated op list. Image i at epoch e consumes the
// stream derived from (seed, i, e), so results are independent of application
// order and worker count.
struct AugPipeline {
  std::vector<AugOp> ops;
  std::uint64_t seed = 0;
};

// Applies one op unconditionally, consuming its draws from rng.
ImageBuffer apply_op(const AugOp& op, const ImageBuffer& img, Rng& rng);

ImageBuffer apply_pipeline(const AugPipeline& p, const ImageBuffer& img,
                           std::uint64_t image_index, std::uint64_t epoch);

// Crop side keeping at least the given area fraction of a resize_side square:
// round(resize_side * sqrt(min_area_fraction)).
Index simclr_crop_side(Index resize_side, Scalar min_area_fraction);

}  // namespace gslab
