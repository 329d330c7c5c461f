#include "gslab/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace gslab {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t quantize(Scalar v) {
  const Scalar c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

ImageBuffer read_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("read_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("read_png: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("read_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: " + path + " is not a valid PNG");
  }

  png_init_io(png, f.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const png_byte channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: unsupported channel layout in " + path);
  }

  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    rows[y] = raw.data() + static_cast<std::size_t>(y) * w * channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageBuffer img(static_cast<Index>(h), static_cast<Index>(w), channels);
  for (Index i = 0; i < img.size(); ++i) {
    img.data[i] = static_cast<Scalar>(raw[static_cast<std::size_t>(i)]) / 255.0;
  }
  return img;
}

void write_png(const std::string& path, const ImageBuffer& img) {
  if (img.normalized) throw std::invalid_argument("write_png: buffer holds normalized values");
  if (img.channels != 1 && img.channels != 3) {
    throw std::invalid_argument("write_png: image must have 1 or 3 channels");
  }
  if (img.height < 1 || img.width < 1) throw std::invalid_argument("write_png: empty image");

  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("write_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("write_png: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("write_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: failed writing " + path);
  }

  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * img.channels);
  for (Index y = 0; y < img.height; ++y) {
    for (Index x = 0; x < img.width; ++x) {
      for (Index c = 0; c < img.channels; ++c) {
        row[static_cast<std::size_t>(x * img.channels + c)] = quantize(img.at(y, x, c));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageBuffer read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("read_pgm: " + path + " is not binary PGM (P5)");

  auto next_int = [&in, &path]() {
    // skip whitespace and '#' comment lines between header fields
    int ch = in.peek();
    while (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '#') {
      if (ch == '#') {
        std::string line;
        std::getline(in, line);
      } else {
        in.get();
      }
      ch = in.peek();
    }
    long v = -1;
    in >> v;
    if (!in || v < 0) throw std::runtime_error("read_pgm: malformed header in " + path);
    return v;
  };

  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  if (w < 1 || h < 1 || maxval != 255) {
    throw std::runtime_error("read_pgm: unsupported dimensions or maxval in " + path);
  }
  in.get();  // single whitespace after maxval

  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw std::runtime_error("read_pgm: truncated pixel data in " + path);
  }

  ImageBuffer img(static_cast<Index>(h), static_cast<Index>(w), 1);
  for (Index i = 0; i < img.size(); ++i) {
    img.data[i] = static_cast<Scalar>(raw[static_cast<std::size_t>(i)]) / 255.0;
  }
  return img;
}

void write_pgm(const std::string& path, const ImageBuffer& img) {
  if (img.normalized) throw std::invalid_argument("write_pgm: buffer holds normalized values");
  if (img.channels != 1) throw std::invalid_argument("write_pgm: image must have 1 channel");
  if (img.height < 1 || img.width < 1) throw std::invalid_argument("write_pgm: empty image");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(img.size()));
  for (Index i = 0; i < img.size(); ++i) raw[static_cast<std::size_t>(i)] = quantize(img.data[i]);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("write_pgm: failed writing " + path);
}

}  // namespace gslab
