#pragma once

#include "gslab/image.hpp"

#include <string>

namespace gslab {

// 8-bit PNG. Grayscale files load as 1 channel, everything else as 3 (palette
// and alpha are expanded/stripped). Writing requires an unnormalized buffer;
// values are clamped to [0, 1] and quantized to 8 bits.
ImageBuffer read_png(const std::string& path);
void write_png(const std::string& path, const ImageBuffer& img);

// Binary PGM (P5, maxval 255), single channel.
ImageBuffer read_pgm(const std::string& path);
void write_pgm(const std::string& path, const ImageBuffer& img);

}  // namespace gslab
