#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "discnn/image.hpp"
#include "discnn/model.hpp"

#include "json.hpp"

namespace discnn {

// Multi-scale sliding-window detection: the window starts at the full image
// side and shrinks by the window attenuation until it reaches the minimum
// size; every scale contributes thresholded patch records, which are
// clustered once at the end and boxed by their extremes.

struct ScheduleEntry {
  int sws = 0;     // window edge length
  int stride = 0;  // max(1, sws / stride_div)
  int wa = 0;      // max(1, sws / wa_div)
};

struct WindowSchedule {
  std::vector<ScheduleEntry> entries;
  int min_sws = 0;
};

// l is the image height, m the width. With no range override the first
// window is min(l, m) and iteration continues while the next sws stays above
// min_sws; an override [hi, lo) starts at hi and keeps sizes >= lo. The first
// window is always emitted.
WindowSchedule window_schedule(int l, int m, int min_sws,
                               std::optional<std::pair<int, int>> range = {},
                               int stride_div = 3, int wa_div = 20);

struct PatchRecord {
  Box box;
  int sws = 0;
  double module = 0;
};

struct DetectionCluster {
  std::vector<PatchRecord> members;
  Box bounds;
  double max_module = 0;
};

struct DetectConfig {
  int min_sws = 40;
  double threshold = 0;
  double link_distance = 0;  // <= 0: defaults to min_sws (or range low)
  int batch_cap = 512;       // patches resident per inference batch
  std::optional<std::pair<int, int>> range;  // [hi, lo) override
  int stride_div = 3;
  int wa_div = 20;

  void validate() const;
};

// Grid origins (x, y) for one scale: multiples of stride with x+sws <= width,
// plus one edge-clamped final column/row when the grid does not touch the
// border. Row-major (y outer).
std::vector<std::pair<int, int>> patch_positions(int width, int height, int sws,
                                                 int stride);

std::vector<std::pair<Box, Image>> extract_patches(const Image& image, int sws,
                                                   int stride);

// Resize every patch to n x n, normalize, score in infer mode in batches of
// at most `batch_cap`; output order follows input order.
std::vector<PatchRecord> score_patches(const DisCNNModel& model,
                                       const std::vector<std::pair<Box, Image>>& patches,
                                       int batch_cap, int n = kInputSize);

// Strictly-greater filter, order preserved.
std::vector<PatchRecord> threshold_filter(const std::vector<PatchRecord>& records,
                                          double thr);

// Single-linkage connected components over patch centers: records connect
// when center distance <= link_distance. Deterministic and input-order
// invariant (members and clusters come out in canonical box order).
std::vector<DetectionCluster> cluster_records(const std::vector<PatchRecord>& records,
                                              double link_distance);

Box max_boundary_box(const DetectionCluster& cluster);

double iou(const Box& a, const Box& b);

// The full pipeline over every scale of the schedule.
std::vector<DetectionCluster> detect(const Image& image, const DisCNNModel& model,
                                     const DetectConfig& config);

// JSON document: image id, config echo, per-cluster box/member_count/
// max_module/scales_present. Key order is fixed so equal results serialize
// to identical bytes.
nlohmann::ordered_json detection_to_json(const std::string& image_id,
                                         const DetectConfig& config,
                                         const std::vector<DetectionCluster>& clusters);

}  // namespace discnn
