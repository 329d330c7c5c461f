#include "gslab/data.hpp"

#include "gslab/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gslab {

namespace {

namespace fs = std::filesystem;

struct Seg {
  Scalar x1, y1, x2, y2;
};

// Ten stroke templates in unit coordinates, chosen for distinct topology.
// Classes 10..29 reuse them with a short marker bar added in a corner.
std::vector<Seg> glyph_segments(int class_id) {
  static const std::vector<std::vector<Seg>> base = {
      // 0: triangle
      {{0.20, 0.80, 0.50, 0.20}, {0.50, 0.20, 0.80, 0.80}, {0.80, 0.80, 0.20, 0.80}},
      // 1: two crossing diagonals
      {{0.25, 0.20, 0.75, 0.80}, {0.75, 0.20, 0.25, 0.80}},
      // 2: vertical bar with a top arm
      {{0.30, 0.20, 0.30, 0.80}, {0.30, 0.20, 0.75, 0.20}},
      // 3: octagonal ring
      {{0.50, 0.20, 0.71, 0.29}, {0.71, 0.29, 0.80, 0.50}, {0.80, 0.50, 0.71, 0.71},
       {0.71, 0.71, 0.50, 0.80}, {0.50, 0.80, 0.29, 0.71}, {0.29, 0.71, 0.20, 0.50},
       {0.20, 0.50, 0.29, 0.29}, {0.29, 0.29, 0.50, 0.20}},
      // 4: zigzag between two horizontals
      {{0.75, 0.20, 0.25, 0.20}, {0.25, 0.20, 0.60, 0.50}, {0.60, 0.50, 0.25, 0.80},
       {0.25, 0.80, 0.75, 0.80}},
      // 5: two verticals and a crossbar
      {{0.30, 0.20, 0.30, 0.80}, {0.70, 0.20, 0.70, 0.80}, {0.30, 0.50, 0.70, 0.50}},
      // 6: vee
      {{0.25, 0.20, 0.50, 0.80}, {0.50, 0.80, 0.75, 0.20}},
      // 7: top bar with a center stem
      {{0.25, 0.20, 0.75, 0.20}, {0.50, 0.20, 0.50, 0.80}},
      // 8: corner bracket
      {{0.30, 0.20, 0.30, 0.80}, {0.30, 0.80, 0.75, 0.80}},
      // 9: two verticals joined by a diagonal
      {{0.30, 0.80, 0.30, 0.20}, {0.30, 0.20, 0.70, 0.80}, {0.70, 0.80, 0.70, 0.20}},
  };
  std::vector<Seg> segs = base[static_cast<std::size_t>(class_id % 10)];
  const int variant = class_id / 10;
  if (variant == 1) segs.push_back({0.78, 0.12, 0.90, 0.12});
  if (variant == 2) segs.push_back({0.10, 0.88, 0.22, 0.88});
  return segs;
}

Scalar point_segment_distance(Scalar px, Scalar py, const Seg& s) {
  const Scalar vx = s.x2 - s.x1, vy = s.y2 - s.y1;
  const Scalar len2 = vx * vx + vy * vy;
  Scalar t = len2 > 0.0 ? ((px - s.x1) * vx + (py - s.y1) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Scalar cx = s.x1 + t * vx, cy = s.y1 + t * vy;
  return std::hypot(px - cx, py - cy);
}

ImageBuffer render_glyph(int class_id, Index side, Rng& rng) {
  // Draw order: shift x, shift y, angle, thickness scale, ink, background,
  // three channel tints, noise level, then one noise value per pixel.
  const Scalar dx = rng.uniform(-0.10, 0.10) * static_cast<Scalar>(side);
  const Scalar dy = rng.uniform(-0.10, 0.10) * static_cast<Scalar>(side);
  const Scalar angle = rng.uniform(-10.0, 10.0) * std::numbers::pi / 180.0;
  const Scalar tscale = rng.uniform(0.7, 1.3);
  const Scalar ink = rng.uniform(0.0, 0.15);
  const Scalar bg = rng.uniform(0.85, 1.0);
  Scalar tint[3];
  for (Scalar& t : tint) t = rng.uniform(-0.04, 0.04);
  const Scalar sigma = rng.uniform(0.03, 0.09);
  const Scalar thickness = std::max(1.0, static_cast<Scalar>(side) / 16.0) * tscale;

  const Scalar ca = std::cos(angle), sa = std::sin(angle);
  std::vector<Seg> segs = glyph_segments(class_id);
  for (Seg& s : segs) {
    auto place = [&](Scalar& x, Scalar& y) {
      const Scalar ux = x - 0.5, uy = y - 0.5;
      x = (0.5 + ca * ux - sa * uy) * static_cast<Scalar>(side - 1) + dx;
      y = (0.5 + sa * ux + ca * uy) * static_cast<Scalar>(side - 1) + dy;
    };
    place(s.x1, s.y1);
    place(s.x2, s.y2);
  }

  ImageBuffer img(side, side, 3);
  for (Index y = 0; y < side; ++y) {
    for (Index x = 0; x < side; ++x) {
      Scalar d = std::numeric_limits<Scalar>::infinity();
      for (const Seg& s : segs) {
        d = std::min(d, point_segment_distance(static_cast<Scalar>(x),
                                               static_cast<Scalar>(y), s));
      }
      const Scalar cov = std::clamp(thickness * 0.5 + 0.5 - d, 0.0, 1.0);
      const Scalar v = bg + (ink - bg) * cov;
      const Scalar noise = sigma * rng.normal();
      for (Index c = 0; c < 3; ++c) {
        img.at(y, x, c) = std::clamp(v + tint[c] + noise, 0.0, 1.0);
      }
    }
  }
  return img;
}

ImageBuffer read_image_any(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".pgm") return read_pgm(path);
  return read_png(path);
}

}  // namespace

void validate_dataset(const Dataset& ds) {
  if (ds.class_count < 1) throw std::invalid_argument("dataset: class_count must be positive");
  std::vector<Index> counts(static_cast<std::size_t>(ds.class_count), 0);
  for (const DatasetItem& it : ds.items) {
    if (it.label < 0 || it.label >= ds.class_count) {
      throw std::invalid_argument("dataset: label " + std::to_string(it.label) +
                                  " outside [0, " + std::to_string(ds.class_count) + ")");
    }
    ++counts[static_cast<std::size_t>(it.label)];
  }
  for (int c = 0; c < ds.class_count; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw std::invalid_argument("dataset: class " + std::to_string(c) + " has no items");
    }
  }
}

Dataset generate_glyphs(int class_count, Index per_class, Index side, std::uint64_t seed) {
  if (class_count < 2) throw std::invalid_argument("generate_glyphs: need at least two classes");
  if (class_count > 30) {
    throw std::invalid_argument("generate_glyphs: the template pool covers at most 30 classes");
  }
  if (per_class < 1 || side < 8) {
    throw std::invalid_argument("generate_glyphs: per_class must be >= 1 and side >= 8");
  }

  Dataset ds;
  ds.class_count = class_count;
  ds.name = "glyphs" + std::to_string(class_count) + "x" + std::to_string(per_class);
  ds.items.reserve(static_cast<std::size_t>(class_count) * static_cast<std::size_t>(per_class));
  for (int c = 0; c < class_count; ++c) {
    for (Index i = 0; i < per_class; ++i) {
      Rng rng = Rng::derive(seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i)});
      ds.items.push_back({render_glyph(c, side, rng), c});
    }
  }
  validate_dataset(ds);
  return ds;
}

std::vector<AnnotationRecord> read_annotation_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("annotations: cannot open " + path);
  const fs::path dir = fs::path(path).parent_path();

  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("annotations: empty file " + path);
  auto strip = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    return s;
  };
  if (strip(line) != "image_path,x,y,w,h,label") {
    throw std::runtime_error("annotations: expected header image_path,x,y,w,h,label in " + path);
  }

  std::vector<AnnotationRecord> records;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    line = strip(line);
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string fields[6];
    for (int i = 0; i < 6; ++i) {
      if (!std::getline(ls, fields[i], ',')) {
        throw std::runtime_error("annotations: line " + std::to_string(line_no) +
                                 " has fewer than 6 fields");
      }
    }
    AnnotationRecord r;
    fs::path img(fields[0]);
    r.image_path = img.is_absolute() ? img.string() : (dir / img).string();
    try {
      r.x = std::stoll(fields[1]);
      r.y = std::stoll(fields[2]);
      r.w = std::stoll(fields[3]);
      r.h = std::stoll(fields[4]);
    } catch (const std::exception&) {
      throw std::runtime_error("annotations: line " + std::to_string(line_no) +
                               " has a non-numeric box field");
    }
    r.label = fields[5];
    records.push_back(std::move(r));
  }
  return records;
}

Dataset crop_from_annotations(const std::vector<AnnotationRecord>& records,
                              const std::map<std::string, int>& label_map) {
  Dataset ds;
  ds.name = "annotations";
  ds.class_count = 0;
  for (const auto& [token, id] : label_map) {
    (void)token;
    ds.class_count = std::max(ds.class_count, id + 1);
  }

  std::map<std::string, ImageBuffer> cache;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const AnnotationRecord& r = records[i];
    auto it = cache.find(r.image_path);
    if (it == cache.end()) it = cache.emplace(r.image_path, read_image_any(r.image_path)).first;
    const ImageBuffer& img = it->second;

    if (r.w < 1 || r.h < 1 || r.x < 0 || r.y < 0 || r.x + r.w > img.width ||
        r.y + r.h > img.height) {
      throw std::runtime_error(
          "annotations: record " + std::to_string(i + 1) + " (" + r.image_path + "): box " +
          std::to_string(r.x) + "," + std::to_string(r.y) + "," + std::to_string(r.w) + "," +
          std::to_string(r.h) + " falls outside the " + std::to_string(img.width) + "x" +
          std::to_string(img.height) + " image");
    }
    auto lit = label_map.find(r.label);
    if (lit == label_map.end()) {
      throw std::runtime_error("annotations: record " + std::to_string(i + 1) +
                               ": unmapped label \"" + r.label + "\"");
    }
    ds.items.push_back({crop(img, r.y, r.x, r.h, r.w), lit->second});
  }
  validate_dataset(ds);
  return ds;
}

Dataset crop_from_annotations(const std::vector<AnnotationRecord>& records) {
  std::set<std::string> tokens;
  for (const AnnotationRecord& r : records) tokens.insert(r.label);
  std::map<std::string, int> label_map;
  int next = 0;
  for (const std::string& t : tokens) label_map[t] = next++;
  return crop_from_annotations(records, label_map);
}

Dataset load_image_directory(const std::string& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset: not a directory: " + root);
  std::vector<std::string> labels;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) labels.push_back(e.path().filename().string());
  }
  std::sort(labels.begin(), labels.end());
  if (labels.empty()) throw std::runtime_error("dataset: no label directories under " + root);

  Dataset ds;
  ds.name = fs::path(root).filename().string();
  ds.class_count = static_cast<int>(labels.size());
  for (int c = 0; c < ds.class_count; ++c) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(fs::path(root) / labels[static_cast<std::size_t>(c)])) {
      if (e.is_regular_file()) files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    for (const std::string& f : files) ds.items.push_back({read_image_any(f), c});
  }
  validate_dataset(ds);
  return ds;
}

void save_image_directory(const Dataset& ds, const std::string& root,
                          const std::vector<std::string>& label_names) {
  if (!label_names.empty() && static_cast<int>(label_names.size()) != ds.class_count) {
    throw std::invalid_argument("dataset: label_names size must equal class_count");
  }
  auto name_of = [&](int c) {
    if (!label_names.empty()) return label_names[static_cast<std::size_t>(c)];
    char buf[16];
    std::snprintf(buf, sizeof(buf), "class%02d", c);
    return std::string(buf);
  };
  std::vector<Index> counter(static_cast<std::size_t>(ds.class_count), 0);
  for (int c = 0; c < ds.class_count; ++c) {
    fs::create_directories(fs::path(root) / name_of(c));
  }
  for (const DatasetItem& it : ds.items) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05lld.png",
                  static_cast<long long>(counter[static_cast<std::size_t>(it.label)]++));
    write_png((fs::path(root) / name_of(it.label) / buf).string(), it.image);
  }
}

SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  const Scalar sum = spec.train_fraction + spec.valid_fraction + spec.test_fraction;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split: fractions must sum to 1");
  }
  const Index n = ds.size();
  if (n < 10) throw std::invalid_argument("split: dataset must hold at least 10 items");

  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng = Rng::derive(spec.seed, {0x73706c6974ULL});
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  const Index n_train = static_cast<Index>(std::floor(spec.train_fraction * static_cast<Scalar>(n)));
  const Index n_valid = static_cast<Index>(std::floor(spec.valid_fraction * static_cast<Scalar>(n)));

  SplitResult r;
  auto take = [&](Dataset& out, Index begin, Index count, const char* tag) {
    out.class_count = ds.class_count;
    out.name = ds.name + "/" + tag;
    out.items.reserve(static_cast<std::size_t>(count));
    for (Index k = 0; k < count; ++k) {
      out.items.push_back(ds.items[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + k)])]);
    }
  };
  take(r.train, 0, n_train, "train");
  take(r.valid, n_train, n_valid, "valid");
  take(r.test, n_train + n_valid, n - n_train - n_valid, "test");
  return r;
}

TripletBatch make_triplet_batch(const Dataset& train, Index n, Rng& rng) {
  if (train.class_count < 2) {
    throw std::invalid_argument("make_triplet_batch: dataset must hold at least two classes");
  }
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(train.class_count));
  for (Index i = 0; i < train.size(); ++i) {
    by_class[static_cast<std::size_t>(train.items[static_cast<std::size_t>(i)].label)].push_back(i);
  }
  for (const auto& cls : by_class) {
    if (cls.size() < 2) {
      throw std::invalid_argument("make_triplet_batch: every class needs at least two items");
    }
  }

  const Index total = train.size();
  TripletBatch batch;
  batch.anchor.reserve(static_cast<std::size_t>(n));
  batch.positive.reserve(static_cast<std::size_t>(n));
  batch.negative.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Index a = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(total)));
    const int label = train.items[static_cast<std::size_t>(a)].label;
    const auto& cls = by_class[static_cast<std::size_t>(label)];
    const auto a_pos = static_cast<std::size_t>(
        std::lower_bound(cls.begin(), cls.end(), a) - cls.begin());
    std::size_t j = static_cast<std::size_t>(rng.uniform_int(cls.size() - 1));
    if (j >= a_pos) ++j;  // skip the anchor itself
    Index neg;
    do {
      neg = static_cast<Index>(rng.uniform_int(static_cast<std::uint64_t>(total)));
    } while (train.items[static_cast<std::size_t>(neg)].label == label);
    batch.anchor.push_back(a);
    batch.positive.push_back(cls[j]);
    batch.negative.push_back(neg);
  }
  return batch;
}

std::vector<UnlabeledImage> unlabeled_view(const Dataset& ds) {
  std::vector<UnlabeledImage> view;
  view.reserve(ds.items.size());
  for (Index i = 0; i < ds.size(); ++i) {
    view.push_back({&ds.items[static_cast<std::size_t>(i)].image, i});
  }
  return view;
}

namespace {

Tensor stack_views(const std::vector<ImageBuffer>& views) {
  const Index n = static_cast<Index>(views.size());
  const Index c = views[0].channels, h = views[0].height, w = views[0].width;
  for (const ImageBuffer& v : views) {
    if (v.channels != c || v.height != h || v.width != w) {
      throw std::logic_error("batch: augmented views disagree on shape");
    }
  }
  Tensor out({n, c, h, w});
  for (Index i = 0; i < n; ++i) {
    const ImageBuffer& v = views[static_cast<std::size_t>(i)];
    for (Index ch = 0; ch < c; ++ch) {
      for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) out(i, ch, y, x) = v.at(y, x, ch);
      }
    }
  }
  return out;
}

}  // namespace

ContrastiveBatch make_contrastive_batch(const std::vector<UnlabeledImage>& pool, Index n,
                                        const AugPipeline& pipeline, Index epoch, Rng& rng) {
  if (n < 2) throw std::invalid_argument("make_contrastive_batch: need at least two images");
  if (pool.empty()) throw std::invalid_argument("make_contrastive_batch: empty pool");

  std::vector<UnlabeledImage> chosen(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    chosen[static_cast<std::size_t>(i)] = pool[rng.uniform_int(pool.size())];
  }

  std::vector<ImageBuffer> views(static_cast<std::size_t>(2 * n));
  parallel_for(2 * n, [&](Index v) {
    const UnlabeledImage& src = chosen[static_cast<std::size_t>(v / 2)];
    const std::uint64_t stream = 2 * static_cast<std::uint64_t>(src.index) +
                                 static_cast<std::uint64_t>(v % 2);
    views[static_cast<std::size_t>(v)] =
        apply_pipeline(pipeline, *src.image, stream, static_cast<std::uint64_t>(epoch));
  });
  return {stack_views(views)};
}

Tensor assemble_batch(const Dataset& ds, const std::vector<Index>& items,
                      const AugPipeline& pipeline, Index epoch) {
  if (items.empty()) throw std::invalid_argument("assemble_batch: empty item list");
  for (Index idx : items) {
    if (idx < 0 || idx >= ds.size()) throw std::out_of_range("assemble_batch: item index");
  }
  std::vector<ImageBuffer> views(items.size());
  parallel_for(static_cast<Index>(items.size()), [&](Index k) {
    const Index idx = items[static_cast<std::size_t>(k)];
    views[static_cast<std::size_t>(k)] =
        apply_pipeline(pipeline, ds.items[static_cast<std::size_t>(idx)].image,
                       static_cast<std::uint64_t>(idx), static_cast<std::uint64_t>(epoch));
  });
  return stack_views(views);
}

}  // namespace gslab
