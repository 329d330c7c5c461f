#pragma once

#include "gslab/core.hpp"

namespace gslab {

// Float64 image, HWC layout, values in [0, 1] until a normalize op runs
// (the flag records that the buffer now holds standardized values).
struct ImageBuffer {
  Index height = 0;
  Index width = 0;
  Index channels = 0;
  ArrayX data;
  bool normalized = false;

  ImageBuffer() = default;
  ImageBuffer(Index h, Index w, Index c, Scalar fill = 0.0);

  Scalar& at(Index y, Index x, Index c) { return data[(y * width + x) * channels + c]; }
  Scalar at(Index y, Index x, Index c) const { return data[(y * width + x) * channels + c]; }

  Index size() const { return height * width * channels; }
};

// Deterministic pixel ops. All of them allocate the output buffer; inputs are
// untouched.

// Bilinear, corner-aligned sampling.
ImageBuffer resize_bilinear(const ImageBuffer& in, Index out_h, Index out_w);

ImageBuffer crop(const ImageBuffer& in, Index top, Index left, Index h, Index w);
ImageBuffer center_crop(const ImageBuffer& in, Index side);
ImageBuffer hflip(const ImageBuffer& in);

// Sliding min/max over a kernel_w x kernel_h window (odd dims), replicate
// border. Erosion shrinks bright regions, dilation grows them.
ImageBuffer morpho_erode(const ImageBuffer& in, Index kernel_w, Index kernel_h);
ImageBuffer morpho_dilate(const ImageBuffer& in, Index kernel_w, Index kernel_h);

// Shift is in output pixels, scale > 0 zooms content, angle in degrees turns
// it counterclockwise. Inverse-mapped bilinear sampling, replicate border.
ImageBuffer affine_warp(const ImageBuffer& in, Scalar dx, Scalar dy, Scalar scale,
                        Scalar angle_deg);

ImageBuffer adjust_brightness(const ImageBuffer& in, Scalar factor);
ImageBuffer adjust_contrast(const ImageBuffer& in, Scalar factor);
ImageBuffer adjust_saturation(const ImageBuffer& in, Scalar factor);
// shift in [-0.5, 0.5] turns the hue wheel; grayscale input passes through.
ImageBuffer adjust_hue(const ImageBuffer& in, Scalar shift);

// Separable kernel; sigma <= 0 chooses 0.3 * ((k - 1) * 0.5 - 1) + 0.8.
ImageBuffer gaussian_blur(const ImageBuffer& in, Index kernel, Scalar sigma);

ImageBuffer invert(const ImageBuffer& in);

// Luma (0.299, 0.587, 0.114) replicated across the input's channels.
ImageBuffer to_gray(const ImageBuffer& in);

// Channel-wise (v - mean) / std; marks the buffer normalized. Rejects a
// second normalization and size mismatches.
ImageBuffer normalize(const ImageBuffer& in, const std::vector<Scalar>& mean,
                      const std::vector<Scalar>& std);

}  // namespace gslab
