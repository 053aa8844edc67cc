#include "discnn/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace discnn {

namespace {

// PPM header tokens are separated by whitespace; '#' starts a comment that
// runs to end of line.
int next_header_int(std::istream& is, const char* what) {
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) break;
  }
  if (c == EOF) throw io_error(std::string("PPM header ended before ") + what);
  if (!std::isdigit(c))
    throw io_error(std::string("PPM header: expected digit for ") + what);
  long v = 0;
  do {
    v = v * 10 + (c - '0');
    if (v > 1 << 30) throw io_error(std::string("PPM header: absurd ") + what);
    c = is.get();
  } while (c != EOF && std::isdigit(c));
  if (c != EOF && !std::isspace(c))
    throw io_error(std::string("PPM header: junk after ") + what);
  return static_cast<int>(v);
}

}  // namespace

Image load_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open image: " + path);
  char p, six;
  is.get(p);
  is.get(six);
  if (!is || p != 'P' || six != '6')
    throw io_error("not a binary PPM (P6): " + path);
  int w = next_header_int(is, "width");
  int h = next_header_int(is, "height");
  int maxval = next_header_int(is, "maxval");
  if (w < 1 || h < 1) throw io_error("PPM with empty dimensions: " + path);
  if (maxval != 255)
    throw io_error("unsupported PPM maxval " + std::to_string(maxval) + ": " + path);
  Image img(w, h);
  if (!is.read(reinterpret_cast<char*>(img.pixels.data()),
               static_cast<std::streamsize>(img.pixels.size())))
    throw io_error("truncated PPM pixel data: " + path);
  return img;
}

void save_image(const Image& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw io_error("write failed: " + path);
}

namespace {

struct LerpAxis {
  std::vector<int> lo;
  std::vector<float> frac;
};

// Corner-aligned mapping: target i -> source i*(s-1)/(t-1); a single target
// sample maps to the source center.
LerpAxis make_axis(int src, int dst) {
  LerpAxis ax;
  ax.lo.resize(dst);
  ax.frac.resize(dst);
  for (int i = 0; i < dst; ++i) {
    double pos = (dst == 1) ? (src - 1) / 2.0
                            : static_cast<double>(i) * (src - 1) / (dst - 1);
    int lo = static_cast<int>(pos);
    if (lo > src - 2) lo = src - 2;
    if (lo < 0) lo = 0;
    double f = pos - lo;
    if (src == 1) {
      lo = 0;
      f = 0;
    }
    ax.lo[i] = lo;
    ax.frac[i] = static_cast<float>(f);
  }
  return ax;
}

}  // namespace

Image resize_bilinear(const Image& src, int target_w, int target_h) {
  if (target_w < 1 || target_h < 1)
    throw shape_error("resize_bilinear: target must be positive");
  Image out(target_w, target_h);
  LerpAxis xs = make_axis(src.width, target_w);
  LerpAxis ys = make_axis(src.height, target_h);
  for (int y = 0; y < target_h; ++y) {
    const int y0 = ys.lo[y];
    const int y1 = std::min(y0 + 1, src.height - 1);
    const float fy = ys.frac[y];
    for (int x = 0; x < target_w; ++x) {
      const int x0 = xs.lo[x];
      const int x1 = std::min(x0 + 1, src.width - 1);
      const float fx = xs.frac[x];
      const uint8_t* p00 = src.at(x0, y0);
      const uint8_t* p10 = src.at(x1, y0);
      const uint8_t* p01 = src.at(x0, y1);
      const uint8_t* p11 = src.at(x1, y1);
      uint8_t* dst = out.at(x, y);
      for (int c = 0; c < 3; ++c) {
        float top = p00[c] + (p10[c] - p00[c]) * fx;
        float bot = p01[c] + (p11[c] - p01[c]) * fx;
        float v = top + (bot - top) * fy;
        dst[c] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.f, 255.f)));
      }
    }
  }
  return out;
}

void resize_bilinear_to_float(const Image& src, int n, float* dst,
                              int dst_row_stride) {
  LerpAxis xs = make_axis(src.width, n);
  LerpAxis ys = make_axis(src.height, n);
  constexpr float kInv255 = 1.f / 255.f;
  for (int y = 0; y < n; ++y) {
    const int y0 = ys.lo[y];
    const int y1 = std::min(y0 + 1, src.height - 1);
    const float fy = ys.frac[y];
    float* drow = dst + static_cast<size_t>(y) * dst_row_stride;
    for (int x = 0; x < n; ++x) {
      const int x0 = xs.lo[x];
      const int x1 = std::min(x0 + 1, src.width - 1);
      const float fx = xs.frac[x];
      const uint8_t* p00 = src.at(x0, y0);
      const uint8_t* p10 = src.at(x1, y0);
      const uint8_t* p01 = src.at(x0, y1);
      const uint8_t* p11 = src.at(x1, y1);
      for (int c = 0; c < 3; ++c) {
        float top = p00[c] + (p10[c] - p00[c]) * fx;
        float bot = p01[c] + (p11[c] - p01[c]) * fx;
        drow[x * 3 + c] = (top + (bot - top) * fy) * kInv255;
      }
    }
  }
}

Image draw_boxes(const Image& img, const std::vector<Box>& boxes, Color color,
                 int thickness) {
  Image out = img;
  for (const Box& b : boxes) {
    if (!b.valid()) continue;
    const int x0 = std::max(b.xmin, 0), x1 = std::min(b.xmax, img.width);
    const int y0 = std::max(b.ymin, 0), y1 = std::min(b.ymax, img.height);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        bool border = x < b.xmin + thickness || x >= b.xmax - thickness ||
                      y < b.ymin + thickness || y >= b.ymax - thickness;
        if (!border) continue;
        uint8_t* p = out.at(x, y);
        p[0] = color[0];
        p[1] = color[1];
        p[2] = color[2];
      }
  }
  return out;
}

}  // namespace discnn
