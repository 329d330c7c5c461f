#pragma once

#include "gslab/resnet.hpp"

#include <string>

namespace gslab {

// Model state file. Layout: the magic line "GSLAB1", a handful of `key value`
// config lines, an `arrays <count>` line followed by one `<name> <rank>
// <dims...>` line per array (parameters first, then batch-norm running
// buffers), a `data` separator, and finally every array as raw little-endian
// float64 in manifest order. Round trips are bit-exact.
void save_checkpoint(const std::string& path, MicroResNet& model);

MicroResNet load_checkpoint(const std::string& path);

// Copies every parameter and buffer whose name appears in both models from
// `src` into `dst`. Matched names with different shapes raise an error.
// Returns the number of arrays copied.
int copy_matching_arrays(MicroResNet& dst, MicroResNet& src);

}  // namespace gslab
