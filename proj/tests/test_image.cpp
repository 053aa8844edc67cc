#include <cstring>
#include <filesystem>
#include <fstream>

#include "discnn/image.hpp"
#include "discnn/rng.hpp"
#include "doctest.h"

using namespace discnn;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Image random_image(Rng& rng, int w, int h) {
  Image img(w, h);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(0, 255));
  return img;
}

}  // namespace

TEST_CASE("PPM: save/load round trip reproduces identical bytes") {
  Rng rng(1);
  Image img = random_image(rng, 13, 9);
  const std::string path = temp_path("discnn_rt.ppm");
  save_image(img, path);
  Image back = load_image(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.pixels == img.pixels);

  // and the files themselves round trip
  save_image(back, path + "2");
  std::ifstream a(path, std::ios::binary), b(path + "2", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {});
  std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  std::filesystem::remove(path);
  std::filesystem::remove(path + "2");
}

TEST_CASE("PPM: a 2x2 file is the documented header plus 12 pixel bytes") {
  Image img(2, 2);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<uint8_t>(i * 7);
  const std::string path = temp_path("discnn_2x2.ppm");
  save_image(img, path);
  std::ifstream is(path, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(is)), {});
  const std::string header = "P6\n2 2\n255\n";
  REQUIRE(data.size() == header.size() + 12);
  CHECK(data.compare(0, header.size(), header) == 0);
  for (size_t i = 0; i < 12; ++i)
    CHECK(static_cast<uint8_t>(data[header.size() + i]) == img.pixels[i]);
  std::filesystem::remove(path);
}

TEST_CASE("PPM: loading a text file is a format error") {
  const std::string path = temp_path("discnn_text.txt");
  std::ofstream os(path);
  os << "hello, definitely not pixels\n";
  os.close();
  CHECK_THROWS_AS(load_image(path), io_error);
  std::filesystem::remove(path);
}

TEST_CASE("PPM: truncated pixel data is an error") {
  const std::string path = temp_path("discnn_trunc.ppm");
  std::ofstream os(path, std::ios::binary);
  os << "P6\n4 4\n255\n";
  os << "only a few bytes";
  os.close();
  CHECK_THROWS_WITH_AS(load_image(path), doctest::Contains("truncated"), io_error);
  std::filesystem::remove(path);
}

TEST_CASE("PPM: comments and odd whitespace in the header parse fine") {
  const std::string path = temp_path("discnn_comment.ppm");
  std::ofstream os(path, std::ios::binary);
  os << "P6\n# a comment\n 3\t2 #another\n255\n";
  for (int i = 0; i < 18; ++i) os.put(static_cast<char>(i));
  os.close();
  Image img = load_image(path);
  CHECK(img.width == 3);
  CHECK(img.height == 2);
  CHECK(img.pixels[17] == 17);
  std::filesystem::remove(path);
}

TEST_CASE("resize: identity when the target equals the source") {
  Rng rng(2);
  Image img = random_image(rng, 7, 5);
  Image out = resize_bilinear(img, 7, 5);
  CHECK(out.pixels == img.pixels);
}

TEST_CASE("resize: constant image stays constant") {
  Image img(5, 4);
  for (size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = 10;
    img.pixels[i + 1] = 200;
    img.pixels[i + 2] = 77;
  }
  Image out = resize_bilinear(img, 11, 9);
  for (size_t i = 0; i < out.pixels.size(); i += 3) {
    CHECK(out.pixels[i] == 10);
    CHECK(out.pixels[i + 1] == 200);
    CHECK(out.pixels[i + 2] == 77);
  }
}

TEST_CASE("resize: 2x2 gradient to 4x4 matches the hand-computed table") {
  Image img(2, 2);
  const uint8_t corners[4] = {0, 60, 120, 180};  // (0,0) (1,0) (0,1) (1,1)
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 3; ++c) img.pixels[static_cast<size_t>(i * 3 + c)] = corners[i];
  Image out = resize_bilinear(img, 4, 4);
  // corner-aligned: fractions {0, 1/3, 2/3, 1} along each axis
  const int want[4][4] = {{0, 20, 40, 60},
                          {40, 60, 80, 100},
                          {80, 100, 120, 140},
                          {120, 140, 160, 180}};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(out.at(x, y)[0] == want[y][x]);
}

TEST_CASE("resize: output values stay within the source range") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Image img = random_image(rng, static_cast<int>(rng.uniform_int(2, 40)),
                             static_cast<int>(rng.uniform_int(2, 40)));
    uint8_t lo = 255, hi = 0;
    for (uint8_t p : img.pixels) {
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
    Image out = resize_bilinear(img, static_cast<int>(rng.uniform_int(1, 64)),
                                static_cast<int>(rng.uniform_int(1, 64)));
    for (uint8_t p : out.pixels) {
      CHECK(p >= lo);
      CHECK(p <= hi);
    }
  }
}

TEST_CASE("resize to float matches the u8 path up to quantization") {
  Rng rng(4);
  Image img = random_image(rng, 17, 17);
  Image u8 = resize_bilinear(img, 96, 96);
  std::vector<float> f(96 * 96 * 3);
  resize_bilinear_to_float(img, 96, f.data(), 96 * 3);
  for (size_t i = 0; i < f.size(); ++i)
    CHECK(std::abs(f[i] * 255.f - u8.pixels[i]) <= 0.5f + 1e-3f);
}

TEST_CASE("draw_boxes: empty list leaves the image unchanged") {
  Rng rng(5);
  Image img = random_image(rng, 9, 9);
  Image out = draw_boxes(img, {}, {255, 0, 0});
  CHECK(out.pixels == img.pixels);
}

TEST_CASE("draw_boxes: thickness-1 box paints exactly the border ring") {
  Rng rng(6);
  Image img = random_image(rng, 8, 8);
  Image out = draw_boxes(img, {Box{1, 1, 4, 4}}, {9, 8, 7}, 1);
  int changed = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const bool diff = std::memcmp(img.at(x, y), out.at(x, y), 3) != 0;
      const bool in_box = x >= 1 && x < 4 && y >= 1 && y < 4;
      const bool interior = x >= 2 && x < 3 && y >= 2 && y < 3;
      if (in_box && !interior) {
        CHECK(out.at(x, y)[0] == 9);
        ++changed;
      } else {
        CHECK(!diff);
      }
    }
  CHECK(changed == 8);  // 3x3 ring minus the single interior pixel
}

TEST_CASE("draw_boxes: partially out-of-bounds boxes clamp without crashing") {
  Rng rng(7);
  Image img = random_image(rng, 10, 10);
  Image out = draw_boxes(img, {Box{-5, -5, 3, 3}, Box{8, 8, 40, 40}}, {1, 2, 3}, 2);
  CHECK(out.width == 10);
  // visible border band painted: first box shows x or y in [1,3)
  CHECK(out.at(1, 0)[0] == 1);
  CHECK(out.at(2, 2)[0] == 1);
  CHECK(out.at(9, 9)[0] == 1);
  // the first box's surviving interior pixel stays untouched
  CHECK(std::memcmp(img.at(0, 0), out.at(0, 0), 3) == 0);
}
