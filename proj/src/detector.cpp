#include "discnn/detector.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "discnn/fastpath.hpp"

namespace discnn {

void DetectConfig::validate() const {
  if (threshold < 0) throw config_error("detect: threshold must be >= 0");
  if (batch_cap < 1) throw config_error("detect: batch cap must be >= 1");
  if (min_sws < 1 && !range) throw config_error("detect: min_sws must be >= 1");
  if (stride_div < 1 || wa_div < 1)
    throw config_error("detect: stride/wa divisors must be >= 1");
  if (range && (range->first < range->second || range->second < 1))
    throw config_error("detect: window range must satisfy hi >= lo >= 1");
}

WindowSchedule window_schedule(int l, int m, int min_sws,
                               std::optional<std::pair<int, int>> range,
                               int stride_div, int wa_div) {
  if (stride_div < 1 || wa_div < 1)
    throw config_error("window_schedule: divisors must be >= 1");
  WindowSchedule sched;
  int sws;
  int lo;
  bool inclusive_lo;
  if (range) {
    if (range->first < range->second || range->second < 1)
      throw config_error("window_schedule: invalid range override");
    sws = range->first;
    lo = range->second;
    inclusive_lo = true;  // [hi, lo): iterate while sws >= lo
    sched.min_sws = lo;
  } else {
    if (min_sws < 1)
      throw config_error("window_schedule: min_sws must be >= 1");
    if (min_sws > std::min(l, m))
      throw config_error("window_schedule: min_sws " + std::to_string(min_sws) +
                         " exceeds min(l,m) = " + std::to_string(std::min(l, m)));
    sws = std::min(l, m);
    lo = min_sws;
    inclusive_lo = false;  // iterate while sws > min_sws
    sched.min_sws = min_sws;
  }
  while (true) {
    ScheduleEntry e;
    e.sws = sws;
    e.stride = std::max(1, sws / stride_div);
    e.wa = std::max(1, sws / wa_div);
    sched.entries.push_back(e);
    const int next = sws - e.wa;
    if (inclusive_lo ? next < lo : next <= lo) break;
    sws = next;
  }
  return sched;
}

std::vector<std::pair<int, int>> patch_positions(int width, int height, int sws,
                                                 int stride) {
  if (sws < 1) throw config_error("patch_positions: sws must be >= 1");
  if (stride < 1) throw config_error("patch_positions: stride must be >= 1");
  if (sws > width || sws > height)
    throw shape_error("patch_positions: window " + std::to_string(sws) +
                      " exceeds image " + std::to_string(width) + "x" +
                      std::to_string(height));
  auto axis = [&](int extent) {
    std::vector<int> xs;
    for (int x = 0; x + sws <= extent; x += stride) xs.push_back(x);
    if (xs.back() + sws < extent) xs.push_back(extent - sws);  // edge clamp
    return xs;
  };
  const std::vector<int> xs = axis(width), ys = axis(height);
  std::vector<std::pair<int, int>> out;
  out.reserve(xs.size() * ys.size());
  for (int y : ys)
    for (int x : xs) out.emplace_back(x, y);
  return out;
}

namespace {

Image crop(const Image& image, int x0, int y0, int size) {
  Image out(size, size);
  for (int y = 0; y < size; ++y)
    std::memcpy(out.at(0, y), image.at(x0, y0 + y), static_cast<size_t>(size) * 3);
  return out;
}

// Shared scoring core over (box, image view) pairs.
std::vector<PatchRecord> score_with_plan(
    const InferencePlan& plan, const std::vector<std::pair<Box, Image>>& patches,
    int batch_cap, int n) {
  if (batch_cap < 1) throw config_error("score_patches: batch cap must be >= 1");
  if (n != kInputSize)
    throw config_error("score_patches: model input size is " +
                       std::to_string(kInputSize));
  std::vector<PatchRecord> records(patches.size());
  const int64_t total = static_cast<int64_t>(patches.size());
  for (int64_t start = 0; start < total; start += batch_cap) {
    const int64_t end = std::min<int64_t>(start + batch_cap, total);
#pragma omp parallel
    {
      InferScratch scratch;
      float out16[16];
#pragma omp for schedule(dynamic, 4)
      for (int64_t i = start; i < end; ++i) {
        const auto& [box, img] = patches[static_cast<size_t>(i)];
        resize_bilinear_to_float(img, kInputSize, scratch.input_interior(),
                                 InferScratch::input_row_stride);
        infer_run(plan, scratch, out16);
        PatchRecord& r = records[static_cast<size_t>(i)];
        r.box = box;
        r.sws = box.width();
        r.module = output_module(out16, 16);
      }
    }
  }
  return records;
}

}  // namespace

std::vector<std::pair<Box, Image>> extract_patches(const Image& image, int sws,
                                                   int stride) {
  std::vector<std::pair<Box, Image>> out;
  for (auto [x, y] : patch_positions(image.width, image.height, sws, stride))
    out.emplace_back(Box{x, y, x + sws, y + sws}, crop(image, x, y, sws));
  return out;
}

std::vector<PatchRecord> score_patches(
    const DisCNNModel& model, const std::vector<std::pair<Box, Image>>& patches,
    int batch_cap, int n) {
  return score_with_plan(make_inference_plan(model), patches, batch_cap, n);
}

std::vector<PatchRecord> threshold_filter(const std::vector<PatchRecord>& records,
                                          double thr) {
  if (thr < 0) throw config_error("threshold_filter: thr must be >= 0");
  std::vector<PatchRecord> out;
  for (const PatchRecord& r : records)
    if (r.module > thr) out.push_back(r);
  return out;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

bool record_less(const PatchRecord& a, const PatchRecord& b) {
  auto key = [](const PatchRecord& r) {
    return std::tuple(r.box.ymin, r.box.xmin, r.box.ymax, r.box.xmax, r.module);
  };
  return key(a) < key(b);
}

}  // namespace

std::vector<DetectionCluster> cluster_records(const std::vector<PatchRecord>& records,
                                              double link_distance) {
  if (link_distance <= 0)
    throw config_error("cluster_records: link distance must be > 0");
  const size_t n = records.size();
  std::vector<double> cx(n), cy(n);
  for (size_t i = 0; i < n; ++i) {
    cx[i] = (records[i].box.xmin + records[i].box.xmax) / 2.0;
    cy[i] = (records[i].box.ymin + records[i].box.ymax) / 2.0;
  }
  UnionFind uf(n);
  const double d2 = link_distance * link_distance;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      const double dx = cx[i] - cx[j], dy = cy[i] - cy[j];
      if (dx * dx + dy * dy <= d2) uf.unite(static_cast<int>(i), static_cast<int>(j));
    }
  std::vector<std::vector<size_t>> groups(n);
  for (size_t i = 0; i < n; ++i) groups[static_cast<size_t>(uf.find(static_cast<int>(i)))].push_back(i);

  std::vector<DetectionCluster> clusters;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    DetectionCluster c;
    for (size_t i : g) {
      c.members.push_back(records[i]);
      c.max_module = std::max(c.max_module, records[i].module);
    }
    std::sort(c.members.begin(), c.members.end(), record_less);
    c.bounds = max_boundary_box(c);
    clusters.push_back(std::move(c));
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const DetectionCluster& a, const DetectionCluster& b) {
              return std::tuple(a.bounds.ymin, a.bounds.xmin, a.bounds.ymax,
                                a.bounds.xmax, a.members.size()) <
                     std::tuple(b.bounds.ymin, b.bounds.xmin, b.bounds.ymax,
                                b.bounds.xmax, b.members.size());
            });
  return clusters;
}

Box max_boundary_box(const DetectionCluster& cluster) {
  if (cluster.members.empty())
    throw config_error("max_boundary_box: empty cluster");
  Box b = cluster.members.front().box;
  for (const PatchRecord& r : cluster.members) {
    b.xmin = std::min(b.xmin, r.box.xmin);
    b.ymin = std::min(b.ymin, r.box.ymin);
    b.xmax = std::max(b.xmax, r.box.xmax);
    b.ymax = std::max(b.ymax, r.box.ymax);
  }
  return b;
}

double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw config_error("iou: invalid box");
  const double ix = std::max(
      0, std::min(a.xmax, b.xmax) - std::max(a.xmin, b.xmin));
  const double iy = std::max(
      0, std::min(a.ymax, b.ymax) - std::max(a.ymin, b.ymin));
  const double inter = ix * iy;
  const double uni = static_cast<double>(a.width()) * a.height() +
                     static_cast<double>(b.width()) * b.height() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::vector<DetectionCluster> detect(const Image& image, const DisCNNModel& model,
                                     const DetectConfig& config) {
  config.validate();
  const WindowSchedule sched = window_schedule(
      image.height, image.width, config.min_sws, config.range, config.stride_div,
      config.wa_div);
  const InferencePlan plan = make_inference_plan(model);
  std::vector<PatchRecord> survivors;

  for (const ScheduleEntry& entry : sched.entries) {
    if (entry.sws > std::min(image.width, image.height)) continue;  // range override wider than image
    const auto positions =
        patch_positions(image.width, image.height, entry.sws, entry.stride);
    // patches stream through in bounded batches so memory stays O(batch_cap)
    for (size_t start = 0; start < positions.size();
         start += static_cast<size_t>(config.batch_cap)) {
      const size_t end = std::min(positions.size(),
                                  start + static_cast<size_t>(config.batch_cap));
      std::vector<std::pair<Box, Image>> chunk;
      chunk.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        auto [x, y] = positions[i];
        chunk.emplace_back(Box{x, y, x + entry.sws, y + entry.sws},
                           crop(image, x, y, entry.sws));
      }
      auto scored = score_with_plan(plan, chunk, config.batch_cap, kInputSize);
      for (auto& r : threshold_filter(scored, config.threshold))
        survivors.push_back(r);
    }
  }
  if (survivors.empty()) return {};
  const double link = config.link_distance > 0
                          ? config.link_distance
                          : static_cast<double>(sched.min_sws);
  return cluster_records(survivors, link);
}

nlohmann::ordered_json detection_to_json(
    const std::string& image_id, const DetectConfig& config,
    const std::vector<DetectionCluster>& clusters) {
  nlohmann::ordered_json doc;
  doc["image"] = image_id;
  nlohmann::ordered_json cfg;
  cfg["min_sws"] = config.min_sws;
  cfg["threshold"] = config.threshold;
  cfg["link_distance"] = config.link_distance;
  cfg["batch_cap"] = config.batch_cap;
  if (config.range) cfg["range"] = {config.range->first, config.range->second};
  cfg["stride_div"] = config.stride_div;
  cfg["wa_div"] = config.wa_div;
  doc["config"] = cfg;
  doc["clusters"] = nlohmann::ordered_json::array();
  for (const DetectionCluster& c : clusters) {
    nlohmann::ordered_json jc;
    jc["box"] = {c.bounds.xmin, c.bounds.ymin, c.bounds.xmax, c.bounds.ymax};
    jc["member_count"] = c.members.size();
    jc["max_module"] = c.max_module;
    std::set<int> scales;
    for (const PatchRecord& r : c.members) scales.insert(r.sws);
    jc["scales_present"] = scales;
    doc["clusters"].push_back(jc);
  }
  return doc;
}

}  // namespace discnn
