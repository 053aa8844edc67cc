#include "discnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace discnn {

namespace {
constexpr int64_t kStl10ImageBytes = 3 * 96 * 96;  // 27648
}

std::vector<Sample> load_stl10_split(const std::string& images_path,
                                     const std::string& labels_path,
                                     const std::vector<int>& class_filter,
                                     int positive_class) {
  std::ifstream imgs(images_path, std::ios::binary | std::ios::ate);
  if (!imgs) throw io_error("cannot open STL-10 images: " + images_path);
  const int64_t img_bytes = imgs.tellg();
  if (img_bytes % kStl10ImageBytes != 0)
    throw io_error("STL-10 images file size " + std::to_string(img_bytes) +
                   " is not a multiple of " + std::to_string(kStl10ImageBytes) +
                   " (" + std::to_string(img_bytes / kStl10ImageBytes) +
                   " whole images plus " +
                   std::to_string(img_bytes % kStl10ImageBytes) + " bytes)");
  const int64_t n_images = img_bytes / kStl10ImageBytes;

  std::ifstream labels(labels_path, std::ios::binary | std::ios::ate);
  if (!labels) throw io_error("cannot open STL-10 labels: " + labels_path);
  const int64_t n_labels = labels.tellg();
  if (n_labels != n_images)
    throw io_error("STL-10 label count " + std::to_string(n_labels) +
                   " does not match image count " + std::to_string(n_images));
  imgs.seekg(0);
  labels.seekg(0);

  std::vector<Sample> out;
  std::vector<uint8_t> buf(kStl10ImageBytes);
  for (int64_t i = 0; i < n_images; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(buf.data()), kStl10ImageBytes))
      throw io_error("truncated STL-10 image record " + std::to_string(i));
    int cls = labels.get();
    if (cls < 1 || cls > 10)
      throw io_error("STL-10 label out of range at record " + std::to_string(i) +
                     ": " + std::to_string(cls));
    if (std::find(class_filter.begin(), class_filter.end(), cls) ==
        class_filter.end())
      continue;
    Sample s;
    s.image = Image(96, 96);
    // channel-planar, column-major within each channel
    for (int c = 0; c < 3; ++c)
      for (int x = 0; x < 96; ++x)
        for (int y = 0; y < 96; ++y)
          s.image.at(x, y)[c] = buf[c * 9216 + x * 96 + y];
    s.source_class = cls;
    s.label = (cls == positive_class) ? 1 : 0;
    out.push_back(std::move(s));
  }
  return out;
}

LemmaReport validate_lemma_requirements(const std::vector<Sample>& dataset,
                                        double min_ratio,
                                        int min_negative_classes) {
  LemmaReport r;
  std::set<int> neg_classes;
  for (const Sample& s : dataset) {
    if (s.label == 1) {
      ++r.n_pos;
    } else {
      ++r.n_neg;
      neg_classes.insert(s.source_class);
    }
  }
  r.negative_classes = static_cast<int>(neg_classes.size());
  r.neg_pos_ratio = r.n_pos > 0 ? static_cast<double>(r.n_neg) / r.n_pos : 0.0;
  if (r.n_pos == 0) r.warnings.push_back("no positive samples");
  if (r.n_neg == 0) r.warnings.push_back("no negative samples");
  if (r.n_neg > 0 && r.negative_classes < min_negative_classes)
    r.warnings.push_back("only " + std::to_string(r.negative_classes) +
                         " negative class(es); at least " +
                         std::to_string(min_negative_classes) +
                         " distinct negative classes recommended");
  if (r.n_pos > 0 && r.n_neg > 0 && r.neg_pos_ratio < min_ratio)
    r.warnings.push_back("negative:positive ratio " +
                         std::to_string(r.neg_pos_ratio) + " below minimum " +
                         std::to_string(min_ratio));
  return r;
}

namespace {

struct GlyphColors {
  float body[3] = {232, 148, 36};
  float bar[3] = {44, 214, 228};
  float disk[3] = {30, 34, 86};
  float hub[3] = {224, 226, 238};
};

void put_px(Image& img, int x, int y, const float rgb[3], float gain[3]) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  uint8_t* p = img.at(x, y);
  for (int c = 0; c < 3; ++c) {
    float v = rgb[c] * gain[c];
    p[c] = static_cast<uint8_t>(std::clamp(v, 0.f, 255.f));
  }
}

// Body plate, top bar, two disks with bright hubs. Proportions are fixed;
// `gain` jitters the palette per image.
void render_glyph(Image& img, int x0, int y0, int g, float gain[3]) {
  GlyphColors col;
  const int body_x0 = x0 + static_cast<int>(0.10 * g);
  const int body_x1 = x0 + static_cast<int>(0.90 * g);
  const int body_y0 = y0 + static_cast<int>(0.32 * g);
  const int body_y1 = y0 + static_cast<int>(0.74 * g);
  for (int y = body_y0; y < body_y1; ++y)
    for (int x = body_x0; x < body_x1; ++x) put_px(img, x, y, col.body, gain);

  const int bar_x0 = x0 + static_cast<int>(0.20 * g);
  const int bar_x1 = x0 + static_cast<int>(0.80 * g);
  const int bar_y0 = y0 + static_cast<int>(0.10 * g);
  const int bar_y1 = y0 + static_cast<int>(0.26 * g);
  for (int y = bar_y0; y < bar_y1; ++y)
    for (int x = bar_x0; x < bar_x1; ++x) put_px(img, x, y, col.bar, gain);

  const double r = 0.13 * g, hub_r = 0.055 * g;
  const double cy = y0 + 0.82 * g;
  for (double cxf : {x0 + 0.28 * g, x0 + 0.72 * g}) {
    const int lo_x = static_cast<int>(cxf - r) - 1, hi_x = static_cast<int>(cxf + r) + 1;
    const int lo_y = static_cast<int>(cy - r) - 1, hi_y = static_cast<int>(cy + r) + 1;
    for (int y = lo_y; y <= hi_y; ++y)
      for (int x = lo_x; x <= hi_x; ++x) {
        const double d2 = (x + 0.5 - cxf) * (x + 0.5 - cxf) +
                          (y + 0.5 - cy) * (y + 0.5 - cy);
        if (d2 <= hub_r * hub_r)
          put_px(img, x, y, col.hub, gain);
        else if (d2 <= r * r)
          put_px(img, x, y, col.disk, gain);
      }
  }
}

// Negative texture families. Channel values stay <= 200 so the glyph's
// bright palette cannot occur in any negative.
constexpr float kNegMax = 200.f;

uint8_t neg_channel(Rng& rng) {
  return static_cast<uint8_t>(rng.uniform(0.0, kNegMax));
}

void fill_block_noise(Image& img, Box region, Rng& rng) {
  static const int kBlocks[] = {1, 2, 4, 8, 16, 32};
  const int block = kBlocks[rng.uniform_int(0, 5)];
  const bool smooth = rng.uniform() < 0.5;
  const int gw = (region.width() + block - 1) / block + 1;
  const int gh = (region.height() + block - 1) / block + 1;
  std::vector<uint8_t> grid(static_cast<size_t>(gw) * gh * 3);
  for (auto& v : grid) v = neg_channel(rng);
  for (int y = region.ymin; y < region.ymax; ++y)
    for (int x = region.xmin; x < region.xmax; ++x) {
      const double gx = static_cast<double>(x - region.xmin) / block;
      const double gy = static_cast<double>(y - region.ymin) / block;
      uint8_t* p = img.at(x, y);
      if (!smooth) {
        const uint8_t* s =
            &grid[(static_cast<size_t>(gy) * gw + static_cast<size_t>(gx)) * 3];
        p[0] = s[0];
        p[1] = s[1];
        p[2] = s[2];
      } else {
        const int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
        const double fx = gx - x0, fy = gy - y0;
        for (int c = 0; c < 3; ++c) {
          const double v00 = grid[(static_cast<size_t>(y0) * gw + x0) * 3 + c];
          const double v10 = grid[(static_cast<size_t>(y0) * gw + x0 + 1) * 3 + c];
          const double v01 = grid[(static_cast<size_t>(y0 + 1) * gw + x0) * 3 + c];
          const double v11 = grid[(static_cast<size_t>(y0 + 1) * gw + x0 + 1) * 3 + c];
          const double top = v00 + (v10 - v00) * fx;
          const double bot = v01 + (v11 - v01) * fx;
          p[c] = static_cast<uint8_t>(top + (bot - top) * fy);
        }
      }
    }
}

void fill_stripes(Image& img, Box region, Rng& rng) {
  const bool horizontal = rng.uniform() < 0.5;
  const int period = static_cast<int>(rng.uniform_int(6, 32));
  uint8_t a[3] = {neg_channel(rng), neg_channel(rng), neg_channel(rng)};
  uint8_t b[3] = {neg_channel(rng), neg_channel(rng), neg_channel(rng)};
  const int phase = static_cast<int>(rng.uniform_int(0, period - 1));
  for (int y = region.ymin; y < region.ymax; ++y)
    for (int x = region.xmin; x < region.xmax; ++x) {
      const int t = (horizontal ? y - region.ymin : x - region.xmin) + phase;
      const uint8_t* s = ((t / (period / 2 == 0 ? 1 : period / 2)) % 2 == 0) ? a : b;
      uint8_t* p = img.at(x, y);
      p[0] = s[0];
      p[1] = s[1];
      p[2] = s[2];
    }
}

void fill_flat(Image& img, Box region, Rng& rng) {
  uint8_t a[3] = {neg_channel(rng), neg_channel(rng), neg_channel(rng)};
  const bool gradient = rng.uniform() < 0.5;
  uint8_t b[3] = {neg_channel(rng), neg_channel(rng), neg_channel(rng)};
  const bool horizontal = rng.uniform() < 0.5;
  for (int y = region.ymin; y < region.ymax; ++y)
    for (int x = region.xmin; x < region.xmax; ++x) {
      uint8_t* p = img.at(x, y);
      if (!gradient) {
        p[0] = a[0];
        p[1] = a[1];
        p[2] = a[2];
      } else {
        const double denom = horizontal ? std::max(1, region.width() - 1)
                                        : std::max(1, region.height() - 1);
        const double f = (horizontal ? x - region.xmin : y - region.ymin) / denom;
        for (int c = 0; c < 3; ++c)
          p[c] = static_cast<uint8_t>(a[c] + (b[c] - a[c]) * f);
      }
    }
}

void fill_negative_texture(Image& img, Box region, int family, Rng& rng) {
  switch (family) {
    case 1: fill_block_noise(img, region, rng); break;
    case 2: fill_stripes(img, region, rng); break;
    default: fill_flat(img, region, rng); break;
  }
}

}  // namespace

std::vector<Sample> generate_synthetic_dataset(uint32_t seed, int n_pos, int n_neg) {
  if (n_pos < 0 || n_neg < 0)
    throw config_error("generate_synthetic_dataset: negative counts");
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(n_pos) + n_neg);
  for (int i = 0; i < n_pos; ++i) {
    Sample s;
    s.image = Image(96, 96);
    s.label = 1;
    s.source_class = 0;
    // dim textured background so the snug glyph's margins look like scenery
    const int family = static_cast<int>(rng.uniform_int(1, 3));
    fill_negative_texture(s.image, Box{0, 0, 96, 96}, family, rng);
    const int g = static_cast<int>(rng.uniform_int(76, 92));
    const int max_off = 96 - g;
    int x0 = max_off / 2 + static_cast<int>(rng.uniform_int(-3, 3));
    int y0 = max_off / 2 + static_cast<int>(rng.uniform_int(-3, 3));
    x0 = std::clamp(x0, 0, max_off);
    y0 = std::clamp(y0, 0, max_off);
    float gain[3];
    for (float& v : gain) v = static_cast<float>(rng.uniform(0.86, 1.14));
    render_glyph(s.image, x0, y0, g, gain);
    out.push_back(std::move(s));
  }
  for (int i = 0; i < n_neg; ++i) {
    Sample s;
    s.image = Image(96, 96);
    s.label = 0;
    s.source_class = 1 + i % 3;
    fill_negative_texture(s.image, Box{0, 0, 96, 96}, s.source_class, rng);
    out.push_back(std::move(s));
  }
  return out;
}

Scene make_scene(const SceneSpec& spec) {
  if (spec.width < 1 || spec.height < 1)
    throw config_error("make_scene: empty scene");
  if (spec.plant_glyph) {
    const Box& b = spec.glyph_box;
    if (!b.valid() || b.xmin < 0 || b.ymin < 0 || b.xmax > spec.width ||
        b.ymax > spec.height)
      throw config_error("make_scene: glyph box out of scene bounds");
    if (b.width() != b.height())
      throw config_error("make_scene: glyph box must be square");
  }
  Rng rng(spec.seed);
  Scene scene;
  scene.image = Image(spec.width, spec.height);

  // patchwork background: recursive random splits, one texture per cell
  std::vector<Box> cells{Box{0, 0, spec.width, spec.height}};
  for (int round = 0; round < 4; ++round) {
    std::vector<Box> next;
    for (const Box& cell : cells) {
      const bool split_x = cell.width() >= cell.height();
      const int extent = split_x ? cell.width() : cell.height();
      if (extent < 96 || rng.uniform() < 0.25) {
        next.push_back(cell);
        continue;
      }
      const int cut = static_cast<int>(rng.uniform_int(extent / 3, 2 * extent / 3));
      Box a = cell, b = cell;
      if (split_x) {
        a.xmax = cell.xmin + cut;
        b.xmin = cell.xmin + cut;
      } else {
        a.ymax = cell.ymin + cut;
        b.ymin = cell.ymin + cut;
      }
      next.push_back(a);
      next.push_back(b);
    }
    cells = std::move(next);
  }
  for (const Box& cell : cells) {
    const int family = static_cast<int>(rng.uniform_int(1, 3));
    fill_negative_texture(scene.image, cell, family, rng);
  }

  if (spec.plant_glyph) {
    float gain[3];
    for (float& v : gain) v = static_cast<float>(rng.uniform(0.9, 1.1));
    render_glyph(scene.image, spec.glyph_box.xmin, spec.glyph_box.ymin,
                 spec.glyph_box.width(), gain);
    scene.truth = spec.glyph_box;
    scene.components = glyph_component_boxes(
        spec.glyph_box.xmin, spec.glyph_box.ymin, spec.glyph_box.width());
  }
  return scene;
}

Image glyph_template(int size) {
  Image img(size, size);
  float gain[3] = {1.f, 1.f, 1.f};
  render_glyph(img, 0, 0, size, gain);
  return img;
}

std::vector<Box> glyph_component_boxes(int x0, int y0, int g) {
  auto box = [&](double fx0, double fy0, double fx1, double fy1) {
    return Box{x0 + static_cast<int>(fx0 * g), y0 + static_cast<int>(fy0 * g),
               x0 + static_cast<int>(fx1 * g), y0 + static_cast<int>(fy1 * g)};
  };
  return {
      box(0.20, 0.10, 0.80, 0.26),  // bar
      box(0.15, 0.69, 0.41, 0.95),  // left disk
      box(0.59, 0.69, 0.85, 0.95),  // right disk
      box(0.10, 0.32, 0.90, 0.74),  // body
  };
}

}  // namespace discnn
