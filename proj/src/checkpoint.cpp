#include "gslab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace gslab {

namespace {

constexpr const char* kMagic = "GSLAB1";

struct ArrayView {
  std::string name;
  Scalar* data;
  std::vector<Index> shape;
  Index size;
};

std::vector<ArrayView> named_arrays(MicroResNet& m) {
  std::vector<ArrayView> out;
  for (ParamRef& p : collect_params(m)) out.push_back({p.name, p.value, p.shape, p.size});
  for (BufferRef& b : collect_buffers(m)) out.push_back({b.name, b.value, b.shape, b.size});
  return out;
}

void write_f64_le(std::ostream& os, const Scalar* p, Index n) {
  std::vector<unsigned char> buf(static_cast<std::size_t>(n) * 8);
  for (Index i = 0; i < n; ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(p[i]);
    for (int j = 0; j < 8; ++j) {
      buf[static_cast<std::size_t>(i) * 8 + j] =
          static_cast<unsigned char>(bits >> (8 * j));
    }
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_f64_le(std::istream& is, Scalar* p, Index n) {
  std::vector<unsigned char> buf(static_cast<std::size_t>(n) * 8);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!is) throw std::runtime_error("checkpoint: truncated data section");
  for (Index i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int j = 0; j < 8; ++j) {
      bits |= static_cast<std::uint64_t>(buf[static_cast<std::size_t>(i) * 8 + j]) << (8 * j);
    }
    p[i] = std::bit_cast<Scalar>(bits);
  }
}

std::string next_line(std::istream& is, const std::string& path) {
  std::string line;
  if (!std::getline(is, line)) {
    throw std::runtime_error("checkpoint: unexpected end of manifest in " + path);
  }
  return line;
}

}  // namespace

void save_checkpoint(const std::string& path, MicroResNet& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);

  const MicroResNetConfig& c = model.config;
  os << kMagic << "\n";
  os << "in_channels " << c.in_channels << "\n";
  os << "input_side " << c.input_side << "\n";
  os << "num_classes " << c.num_classes << "\n";
  os << "embed_dim " << c.embed_dim << "\n";
  os << "proj_dim " << c.proj_dim << "\n";
  os << "classifier_on_embed " << (c.classifier_on_embed ? 1 : 0) << "\n";
  os << "widths " << c.widths.size();
  for (Index w : c.widths) os << " " << w;
  os << "\n";

  auto arrays = named_arrays(model);
  os << "arrays " << arrays.size() << "\n";
  for (const ArrayView& a : arrays) {
    os << a.name << " " << a.shape.size();
    for (Index d : a.shape) os << " " << d;
    os << "\n";
  }
  os << "data\n";
  for (const ArrayView& a : arrays) write_f64_le(os, a.data, a.size);
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

MicroResNet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);

  if (next_line(is, path) != kMagic) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }

  MicroResNetConfig c;
  c.widths.clear();
  std::size_t array_count = 0;
  for (;;) {
    std::istringstream ls(next_line(is, path));
    std::string key;
    ls >> key;
    if (key == "in_channels") ls >> c.in_channels;
    else if (key == "input_side") ls >> c.input_side;
    else if (key == "num_classes") ls >> c.num_classes;
    else if (key == "embed_dim") ls >> c.embed_dim;
    else if (key == "proj_dim") ls >> c.proj_dim;
    else if (key == "classifier_on_embed") { int v = 0; ls >> v; c.classifier_on_embed = v != 0; }
    else if (key == "widths") {
      std::size_t n = 0;
      ls >> n;
      c.widths.resize(n);
      for (std::size_t i = 0; i < n; ++i) ls >> c.widths[i];
    } else if (key == "arrays") {
      ls >> array_count;
      break;
    } else {
      throw std::runtime_error("checkpoint: unknown manifest key \"" + key + "\" in " + path);
    }
    if (!ls) throw std::runtime_error("checkpoint: malformed manifest line in " + path);
  }

  struct Entry {
    std::string name;
    std::vector<Index> shape;
  };
  std::vector<Entry> entries(array_count);
  for (Entry& e : entries) {
    std::istringstream ls(next_line(is, path));
    std::size_t rank = 0;
    ls >> e.name >> rank;
    e.shape.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) ls >> e.shape[i];
    if (!ls) throw std::runtime_error("checkpoint: malformed array entry in " + path);
  }
  if (next_line(is, path) != "data") {
    throw std::runtime_error("checkpoint: missing data separator in " + path);
  }

  MicroResNet model = make_micro_resnet(c, 0);
  auto arrays = named_arrays(model);
  if (arrays.size() != entries.size()) {
    throw std::runtime_error("checkpoint: array count does not match the model layout in " + path);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name != arrays[i].name || entries[i].shape != arrays[i].shape) {
      throw std::runtime_error("checkpoint: array \"" + entries[i].name +
                               "\" does not match the model layout in " + path);
    }
    read_f64_le(is, arrays[i].data, arrays[i].size);
  }
  return model;
}

int copy_matching_arrays(MicroResNet& dst, MicroResNet& src) {
  std::map<std::string, ArrayView> from;
  for (ArrayView& a : named_arrays(src)) from.emplace(a.name, a);

  int copied = 0;
  for (ArrayView& a : named_arrays(dst)) {
    auto it = from.find(a.name);
    if (it == from.end()) continue;
    if (it->second.shape != a.shape) {
      throw std::runtime_error("checkpoint: shape mismatch for \"" + a.name + "\"");
    }
    MapVector(a.data, a.size) = ConstMapVector(it->second.data, a.size);
    ++copied;
  }
  return copied;
}

}  // namespace gslab
