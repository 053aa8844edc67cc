#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "discnn/image.hpp"
#include "discnn/rng.hpp"

namespace discnn {

// One training image: 96x96 RGB, binary label (1 = positive class), plus the
// originating class tag for dataset diagnostics.
struct Sample {
  Image image;
  int label = 0;
  int source_class = 0;
};

struct LemmaReport {
  int64_t n_pos = 0;
  int64_t n_neg = 0;
  int negative_classes = 0;
  double neg_pos_ratio = 0;
  std::vector<std::string> warnings;
  bool clean() const { return warnings.empty(); }
};

// STL-10 binary layout: per image 3x96x96 unsigned bytes, channels R,G,B,
// each channel column-major; labels are one byte each, values 1..10. Only
// classes in `class_filter` are kept; label = 1 iff class == positive_class.
std::vector<Sample> load_stl10_split(const std::string& images_path,
                                     const std::string& labels_path,
                                     const std::vector<int>& class_filter,
                                     int positive_class);

// Structural screening of the training-data requirements: enough distinct
// negative classes and a high enough negative:positive ratio. Whether the
// classes actually share features cannot be checked here; this only warns.
LemmaReport validate_lemma_requirements(const std::vector<Sample>& dataset,
                                        double min_ratio = 2.0,
                                        int min_negative_classes = 2);

// Synthetic desk-scale dataset. Positives carry a compositional glyph (body
// plate, two disks, top bar) nearly filling the frame with position/scale/
// color jitter; negatives are glyph-free textures: block/value noise (class
// 1), stripes (class 2), flat or gradient fills (class 3). Negative textures
// stay below channel value 200 so the glyph's bright signature colors cannot
// occur in them. Deterministic in `seed`.
std::vector<Sample> generate_synthetic_dataset(uint32_t seed, int n_pos, int n_neg);

struct SceneSpec {
  int width = 512;
  int height = 512;
  Box glyph_box;  // ground truth; ignored when plant_glyph is false
  uint32_t seed = 0;
  bool plant_glyph = true;
};

struct Scene {
  Image image;
  Box truth;
  // Sub-feature ground truth: boxes of the bar, the two disks and the body,
  // in scene coordinates (empty for blank scenes).
  std::vector<Box> components;
};

// Large detection scene: patchwork of negative textures, glyph rendered at
// the ground-truth box. Deterministic in spec.seed.
Scene make_scene(const SceneSpec& spec);

// Canonical glyph raster (no jitter) for template-correlation oracles.
Image glyph_template(int size);

// Component boxes of a glyph rendered at (x0, y0) with the given size, in
// the same coordinate frame: {bar, left disk, right disk, body}.
std::vector<Box> glyph_component_boxes(int x0, int y0, int size);

}  // namespace discnn
