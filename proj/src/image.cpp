#include "gslab/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace gslab {

namespace {

void check_nonempty(const ImageBuffer& img, const char* op) {
  if (img.height < 1 || img.width < 1 || img.channels < 1) {
    throw std::invalid_argument(std::string(op) + ": empty image");
  }
}

Scalar clamp01(Scalar v) { return std::clamp(v, 0.0, 1.0); }

Scalar luma(const ImageBuffer& img, Index y, Index x) {
  if (img.channels == 1) return img.at(y, x, 0);
  return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

void rgb_to_hsv(Scalar r, Scalar g, Scalar b, Scalar& h, Scalar& s, Scalar& v) {
  const Scalar mx = std::max({r, g, b});
  const Scalar mn = std::min({r, g, b});
  const Scalar delta = mx - mn;
  v = mx;
  s = (mx > 0.0) ? delta / mx : 0.0;
  if (delta <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r) {
    h = (g - b) / delta;
  } else if (mx == g) {
    h = 2.0 + (b - r) / delta;
  } else {
    h = 4.0 + (r - g) / delta;
  }
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(Scalar h, Scalar s, Scalar v, Scalar& r, Scalar& g, Scalar& b) {
  if (s <= 0.0) {
    r = g = b = v;
    return;
  }
  h = h - std::floor(h);
  const Scalar hh = h * 6.0;
  const int sector = std::min(5, static_cast<int>(hh));
  const Scalar f = hh - sector;
  const Scalar p = v * (1.0 - s);
  const Scalar q = v * (1.0 - s * f);
  const Scalar t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

ImageBuffer morpho(const ImageBuffer& in, Index kernel_w, Index kernel_h, bool take_min) {
  check_nonempty(in, "morpho");
  if (kernel_w < 1 || kernel_w % 2 == 0 || kernel_h < 1 || kernel_h % 2 == 0) {
    throw std::invalid_argument("morpho: kernel dims must be odd and positive");
  }
  const Index rx = kernel_w / 2;
  const Index ry = kernel_h / 2;
  ImageBuffer out(in.height, in.width, in.channels);
  out.normalized = in.normalized;
  for (Index y = 0; y < in.height; ++y) {
    for (Index x = 0; x < in.width; ++x) {
      for (Index c = 0; c < in.channels; ++c) {
        Scalar acc = in.at(std::clamp<Index>(y - ry, 0, in.height - 1),
                           std::clamp<Index>(x - rx, 0, in.width - 1), c);
        for (Index ky = -ry; ky <= ry; ++ky) {
          const Index sy = std::clamp<Index>(y + ky, 0, in.height - 1);
          for (Index kx = -rx; kx <= rx; ++kx) {
            const Index sx = std::clamp<Index>(x + kx, 0, in.width - 1);
            const Scalar v = in.at(sy, sx, c);
            acc = take_min ? std::min(acc, v) : std::max(acc, v);
          }
        }
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

// Bilinear read at fractional coordinates, replicate border.
Scalar sample_bilinear(const ImageBuffer& in, Scalar fy, Scalar fx, Index c) {
  fy = std::clamp(fy, 0.0, static_cast<Scalar>(in.height - 1));
  fx = std::clamp(fx, 0.0, static_cast<Scalar>(in.width - 1));
  const Index y0 = static_cast<Index>(std::floor(fy));
  const Index x0 = static_cast<Index>(std::floor(fx));
  const Index y1 = std::min<Index>(y0 + 1, in.height - 1);
  const Index x1 = std::min<Index>(x0 + 1, in.width - 1);
  const Scalar wy = fy - static_cast<Scalar>(y0);
  const Scalar wx = fx - static_cast<Scalar>(x0);
  const Scalar top = in.at(y0, x0, c) * (1.0 - wx) + in.at(y0, x1, c) * wx;
  const Scalar bot = in.at(y1, x0, c) * (1.0 - wx) + in.at(y1, x1, c) * wx;
  return top * (1.0 - wy) + bot * wy;
}

}  // namespace

ImageBuffer::ImageBuffer(Index h, Index w, Index c, Scalar fill)
    : height(h), width(w), channels(c) {
  if (h < 0 || w < 0 || c < 0) throw std::invalid_argument("ImageBuffer: negative dimension");
  data = ArrayX::Constant(h * w * c, fill);
}

ImageBuffer resize_bilinear(const ImageBuffer& in, Index out_h, Index out_w) {
  check_nonempty(in, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: output must be non-empty");
  ImageBuffer out(out_h, out_w, in.channels);
  out.normalized = in.normalized;
  const Scalar sy = (out_h > 1) ? static_cast<Scalar>(in.height - 1) / static_cast<Scalar>(out_h - 1) : 0.0;
  const Scalar sx = (out_w > 1) ? static_cast<Scalar>(in.width - 1) / static_cast<Scalar>(out_w - 1) : 0.0;
  for (Index y = 0; y < out_h; ++y) {
    for (Index x = 0; x < out_w; ++x) {
      for (Index c = 0; c < in.channels; ++c) {
        out.at(y, x, c) = sample_bilinear(in, y * sy, x * sx, c);
      }
    }
  }
  return out;
}

ImageBuffer crop(const ImageBuffer& in, Index top, Index left, Index h, Index w) {
  check_nonempty(in, "crop");
  if (h < 1 || w < 1) throw std::invalid_argument("crop: window must be non-empty");
  if (top < 0 || left < 0 || top + h > in.height || left + w > in.width) {
    throw std::invalid_argument("crop: window outside the image");
  }
  ImageBuffer out(h, w, in.channels);
  out.normalized = in.normalized;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (Index c = 0; c < in.channels; ++c) out.at(y, x, c) = in.at(top + y, left + x, c);
    }
  }
  return out;
}

ImageBuffer center_crop(const ImageBuffer& in, Index side) {
  if (side > in.height || side > in.width) {
    throw std::invalid_argument("center_crop: side larger than input");
  }
  return crop(in, (in.height - side) / 2, (in.width - side) / 2, side, side);
}

ImageBuffer hflip(const ImageBuffer& in) {
  check_nonempty(in, "hflip");
  ImageBuffer out(in.height, in.width, in.channels);
  out.normalized = in.normalized;
  for (Index y = 0; y < in.height; ++y) {
    for (Index x = 0; x < in.width; ++x) {
      for (Index c = 0; c < in.channels; ++c) {
        out.at(y, x, c) = in.at(y, in.width - 1 - x, c);
      }
    }
  }
  return out;
}

ImageBuffer morpho_erode(const ImageBuffer& in, Index kernel_w, Index kernel_h) {
  return morpho(in, kernel_w, kernel_h, true);
}

ImageBuffer morpho_dilate(const ImageBuffer& in, Index kernel_w, Index kernel_h) {
  return morpho(in, kernel_w, kernel_h, false);
}

ImageBuffer affine_warp(const ImageBuffer& in, Scalar dx, Scalar dy, Scalar scale,
                        Scalar angle_deg) {
  check_nonempty(in, "affine_warp");
  if (scale <= 0.0) throw std::invalid_argument("affine_warp: scale must be positive");
  const Scalar theta = angle_deg * std::numbers::pi / 180.0;
  const Scalar cos_t = std::cos(theta), sin_t = std::sin(theta);
  const Scalar cy = static_cast<Scalar>(in.height - 1) / 2.0;
  const Scalar cx = static_cast<Scalar>(in.width - 1) / 2.0;
  ImageBuffer out(in.height, in.width, in.channels);
  out.normalized = in.normalized;
  for (Index y = 0; y < in.height; ++y) {
    for (Index x = 0; x < in.width; ++x) {
      // invert: undo shift, rotate back, unscale, recenter
      const Scalar qx = static_cast<Scalar>(x) - dx - cx;
      const Scalar qy = static_cast<Scalar>(y) - dy - cy;
      const Scalar rx = (qx * cos_t + qy * sin_t) / scale + cx;
      const Scalar ry = (-qx * sin_t + qy * cos_t) / scale + cy;
      for (Index c = 0; c < in.channels; ++c) {
        out.at(y, x, c) = sample_bilinear(in, ry, rx, c);
      }
    }
  }
  return out;
}

ImageBuffer adjust_brightness(const ImageBuffer& in, Scalar factor) {
  check_nonempty(in, "adjust_brightness");
  if (factor < 0.0) throw std::invalid_argument("adjust_brightness: factor must be >= 0");
  ImageBuffer out = in;
  for (Index i = 0; i < out.size(); ++i) out.data[i] = clamp01(in.data[i] * factor);
  return out;
}

ImageBuffer adjust_contrast(const ImageBuffer& in, Scalar factor) {
  check_nonempty(in, "adjust_contrast");
  if (factor < 0.0) throw std::invalid_argument("adjust_contrast: factor must be >= 0");
  Scalar mean = 0.0;
  for (Index y = 0; y < in.height; ++y) {
    for (Index x = 0; x < in.width; ++x) mean += luma(in, y, x);
  }
  mean /= static_cast<Scalar>(in.height * in.width);
  ImageBuffer out = in;
  for (Index i = 0; i < out.size(); ++i) {
    out.data[i] = clamp01(mean + factor * (in.data[i] - mean));
  }
  return out;
}

ImageBuffer adjust_saturation(const ImageBuffer& in, Scalar factor) {
  check_nonempty(in, "adjust_saturation");
  if (factor < 0.0) throw std::invalid_argument("adjust_saturation: factor must be >= 0");
  if (in.channels == 1) return in;
  ImageBuffer out = in;
  for (Index y = 0; y < in.height; ++y) {
    for (Index x = 0; x < in.width; ++x) {
      const Scalar l = luma(in, y, x);
      for (Index c = 0; c < in.channels; ++c) {
        out.at(y, x, c) = clamp01(l + factor * (in.at(y, x, c) - l));
      }
    }
  }
  return out;
}

ImageBuffer adjust_hue(const ImageBuffer& in, Scalar shift) {
  check_nonempty(in, "adjust_hue");
  if (shift < -0.5 || shift > 0.5) throw std::invalid_argument("adjust_hue: shift outside [-0.5, 0.5]");
  if (in.channels == 1) return in;
  if (in.channels != 3) throw std::invalid_argument("adjust_hue: needs 1 or 3 channels");
  ImageBuffer out = in;
  for (Index y = 0; y < in.height; ++y) {
    for (Index x = 0; x < in.width; ++x) {
      Scalar h, s, v;
      rgb_to_hsv(in.at(y, x, 0), in.at(y, x, 1), in.at(y, x, 2), h, s, v);
      Scalar r, g, b;
      hsv_to_rgb(h + shift, s, v, r, g, b);
      out.at(y, x, 0) = clamp01(r);
      out.at(y, x, 1) = clamp01(g);
      out.at(y, x, 2) = clamp01(b);
    }
  }
  return out;
}

ImageBuffer gaussian_blur(const ImageBuffer& in, Index kernel, Scalar sigma) {
  check_nonempty(in, "gaussian_blur");
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("gaussian_blur: kernel must be odd and positive");
  }
  if (sigma <= 0.0) sigma = 0.3 * ((static_cast<Scalar>(kernel) - 1.0) * 0.5 - 1.0) + 0.8;
  const Index r = kernel / 2;
  std::vector<Scalar> weights(static_cast<std::size_t>(kernel));
  Scalar sum = 0.0;
  for (Index i = 0; i < kernel; ++i) {
    const Scalar d = static_cast<Scalar>(i - r);
    weights[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += weights[static_cast<std::size_t>(i)];
  }
  for (Scalar& w : weights) w /= sum;

  ImageBuffer mid(in.height, in.width, in.channels);
  mid.normalized = in.normalized;
  for (Index y = 0; y < in.height; ++y) {
    for (Index x = 0; x < in.width; ++x) {
      for (Index c = 0; c < in.channels; ++c) {
        Scalar acc = 0.0;
        for (Index k = -r; k <= r; ++k) {
          const Index sx = std::clamp<Index>(x + k, 0, in.width - 1);
          acc += weights[static_cast<std::size_t>(k + r)] * in.at(y, sx, c);
        }
        mid.at(y, x, c) = acc;
      }
    }
  }
  ImageBuffer out(in.height, in.width, in.channels);
  out.normalized = in.normalized;
  for (Index y = 0; y < in.height; ++y) {
    for (Index x = 0; x < in.width; ++x) {
      for (Index c = 0; c < in.channels; ++c) {
        Scalar acc = 0.0;
        for (Index k = -r; k <= r; ++k) {
          const Index sy = std::clamp<Index>(y + k, 0, in.height - 1);
          acc += weights[static_cast<std::size_t>(k + r)] * mid.at(sy, x, c);
        }
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

ImageBuffer invert(const ImageBuffer& in) {
  check_nonempty(in, "invert");
  if (in.normalized) throw std::invalid_argument("invert: image is already normalized");
  ImageBuffer out = in;
  out.data = 1.0 - in.data;
  return out;
}

ImageBuffer to_gray(const ImageBuffer& in) {
  check_nonempty(in, "to_gray");
  if (in.channels == 1) return in;
  if (in.channels != 3) throw std::invalid_argument("to_gray: needs 1 or 3 channels");
  ImageBuffer out = in;
  for (Index y = 0; y < in.height; ++y) {
    for (Index x = 0; x < in.width; ++x) {
      const Scalar l = luma(in, y, x);
      for (Index c = 0; c < 3; ++c) out.at(y, x, c) = l;
    }
  }
  return out;
}

ImageBuffer normalize(const ImageBuffer& in, const std::vector<Scalar>& mean,
                      const std::vector<Scalar>& std) {
  check_nonempty(in, "normalize");
  if (in.normalized) throw std::invalid_argument("normalize: image is already normalized");
  if (static_cast<Index>(mean.size()) != in.channels ||
      static_cast<Index>(std.size()) != in.channels) {
    throw std::invalid_argument("normalize: mean/std size must match channel count");
  }
  for (Scalar s : std) {
    if (s <= 0.0) throw std::invalid_argument("normalize: std must be positive");
  }
  ImageBuffer out = in;
  for (Index y = 0; y < in.height; ++y) {
    for (Index x = 0; x < in.width; ++x) {
      for (Index c = 0; c < in.channels; ++c) {
        out.at(y, x, c) = (in.at(y, x, c) - mean[static_cast<std::size_t>(c)]) /
                          std[static_cast<std::size_t>(c)];
      }
    }
  }
  out.normalized = true;
  return out;
}

}  // namespace gslab
