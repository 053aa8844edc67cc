// Command-line front end: train a single-class detector, run multi-scale
// detection on large images, inspect per-scale patch rankings, evaluate on
// ground-truth scenes, calibrate thresholds, and generate synthetic scenes.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "discnn/dataset.hpp"
#include "discnn/detector.hpp"
#include "discnn/orchestrator.hpp"
#include "discnn/rng.hpp"
#include "discnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace discnn;

namespace {

std::vector<int> parse_int_list(const std::string& csv, const char* what) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (...) {
      throw config_error(std::string("cannot parse ") + what + ": \"" + item + "\"");
    }
  }
  if (out.empty()) throw config_error(std::string(what) + " list is empty");
  return out;
}

struct DetectFlags {
  double thr = -1;
  int min_sws = 40;
  std::string range;  // "hi,lo"
  double link_distance = 0;
  int batch_cap = 512;
  int stride_div = 3;
  int wa_div = 20;

  void attach(CLI::App* cmd, bool thr_required = true) {
    auto* o = cmd->add_option("--thr", thr, "Module threshold (patches above are positive)");
    if (thr_required) o->required();
    cmd->add_option("--min-sws", min_sws, "Minimum sliding window size")
        ->capture_default_str();
    cmd->add_option("--range", range,
                    "Window range override \"hi,lo\" ([hi, lo), e.g. 220,180)");
    cmd->add_option("--link-distance", link_distance,
                    "Cluster link distance (default: min window size)");
    cmd->add_option("--batch-cap", batch_cap, "Max patches per inference batch")
        ->capture_default_str();
    cmd->add_option("--stride-div", stride_div, "stride = sws / stride-div")
        ->capture_default_str();
    cmd->add_option("--wa-div", wa_div, "window attenuation = sws / wa-div")
        ->capture_default_str();
  }

  DetectConfig to_config() const {
    DetectConfig cfg;
    cfg.threshold = thr;
    cfg.min_sws = min_sws;
    cfg.link_distance = link_distance;
    cfg.batch_cap = batch_cap;
    cfg.stride_div = stride_div;
    cfg.wa_div = wa_div;
    if (!range.empty()) {
      auto v = parse_int_list(range, "--range");
      if (v.size() != 2) throw config_error("--range needs exactly \"hi,lo\"");
      cfg.range = std::make_pair(v[0], v[1]);
    }
    cfg.validate();
    return cfg;
  }
};

struct DataFlags {
  bool synthetic = false;
  uint32_t seed = 7;
  int n_pos = 64;
  int n_neg = 128;
  std::string images, labels;
  std::string class_filter = "2,3,4,5,6,7,8";
  int positive_class = 3;

  void attach(CLI::App* cmd) {
    cmd->add_flag("--synthetic", synthetic, "Generate the synthetic glyph dataset");
    cmd->add_option("--seed", seed, "Seed for generation, init and shuffling")
        ->capture_default_str();
    cmd->add_option("--n-pos", n_pos, "Synthetic positive count")->capture_default_str();
    cmd->add_option("--n-neg", n_neg, "Synthetic negative count")->capture_default_str();
    cmd->add_option("--images", images, "STL-10 binary image file (train_X.bin)");
    cmd->add_option("--labels", labels, "STL-10 binary label file (train_y.bin)");
    cmd->add_option("--class-filter", class_filter,
                    "STL-10 classes to keep (comma separated)")
        ->capture_default_str();
    cmd->add_option("--positive-class", positive_class, "STL-10 positive class id")
        ->capture_default_str();
  }

  std::vector<Sample> load() const {
    if (synthetic) return generate_synthetic_dataset(seed, n_pos, n_neg);
    if (images.empty() || labels.empty())
      throw config_error("need --synthetic or both --images and --labels");
    return load_stl10_split(images, labels,
                            parse_int_list(class_filter, "--class-filter"),
                            positive_class);
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << text;
  if (!os) throw io_error("write failed: " + path);
}

int run_train(const DataFlags& data, N2OConfig cfg, double stop_ratio,
              const std::string& out, std::string log_path) {
  std::vector<Sample> samples = data.load();
  LemmaReport report = validate_lemma_requirements(samples);
  for (const std::string& w : report.warnings)
    std::cerr << "warning: dataset: " << w << "\n";

  cfg.seed = data.seed;
  DisCNNModel model = build_discnn(data.seed);
  if (log_path.empty()) log_path = out + ".log";
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw io_error("cannot open training log: " + log_path);
  TrainResult result =
      train(model, samples, cfg,
            [&](int epoch, const EpochMetrics& m) {
              const std::string line = format_epoch_line(epoch, m);
              log << line << "\n";
              std::cout << line << "\n";
            },
            stop_ratio);
  save_model(model, out);
  std::cout << "saved " << out << " after " << result.epochs_run
            << " epoch(s), ratio=" << result.final_metrics.separation_ratio << "\n";
  return 0;
}

int run_detect(const std::string& model_path, const std::string& image_path,
               const DetectFlags& flags, std::string out_json,
               std::string out_image) {
  DisCNNModel model = load_model(model_path);
  Image image = load_image(image_path);
  DetectConfig cfg = flags.to_config();
  auto clusters = detect(image, model, cfg);
  auto doc = detection_to_json(fs::path(image_path).filename().string(), cfg, clusters);
  if (out_json.empty())
    out_json = fs::path(image_path).replace_extension(".det.json").string();
  write_text(out_json, doc.dump(2) + "\n");
  if (out_image.empty())
    out_image = fs::path(image_path).replace_extension(".det.ppm").string();
  std::vector<Box> boxes;
  for (const auto& c : clusters) boxes.push_back(c.bounds);
  save_image(draw_boxes(image, boxes, {0, 255, 0}), out_image);
  std::cout << "clusters=" << clusters.size() << " json=" << out_json
            << " annotated=" << out_image << "\n";
  return 0;
}

const std::vector<Color> kPalette = {
    {0, 255, 0}, {255, 64, 64}, {64, 96, 255}, {255, 224, 32},
    {255, 64, 255}, {64, 224, 224},
};

int run_detect_multi(const std::string& registry_path, const std::string& image_path,
                     int parallelism, std::string out_json, std::string out_image) {
  std::ifstream is(registry_path);
  if (!is) throw io_error("cannot open registry: " + registry_path);
  nlohmann::json reg_doc;
  try {
    is >> reg_doc;
  } catch (const std::exception& e) {
    throw config_error("registry is not valid JSON: " + std::string(e.what()));
  }
  if (!reg_doc.contains("classes") || !reg_doc["classes"].is_array())
    throw config_error("registry needs a \"classes\" array");

  const fs::path base = fs::path(registry_path).parent_path();
  ClassRegistry registry;
  for (const auto& jc : reg_doc["classes"]) {
    DetectConfig cfg;
    cfg.threshold = jc.at("thr").get<double>();
    cfg.min_sws = jc.value("min_sws", 40);
    cfg.link_distance = jc.value("link_distance", 0.0);
    cfg.batch_cap = jc.value("batch_cap", 512);
    cfg.stride_div = jc.value("stride_div", 3);
    cfg.wa_div = jc.value("wa_div", 20);
    if (jc.contains("range"))
      cfg.range = std::make_pair(jc["range"][0].get<int>(), jc["range"][1].get<int>());
    std::string model_path = jc.at("model").get<std::string>();
    if (!fs::path(model_path).is_absolute() && !base.empty())
      model_path = (base / model_path).string();
    register_class_model(registry, jc.at("name").get<std::string>(), model_path, cfg);
  }

  Image image = load_image(image_path);
  auto results = detect_multi(image, registry, parallelism);
  auto doc = multi_detection_to_json(fs::path(image_path).filename().string(),
                                     registry, results);
  if (out_json.empty())
    out_json = fs::path(image_path).replace_extension(".multi.json").string();
  write_text(out_json, doc.dump(2) + "\n");

  if (out_image.empty())
    out_image = fs::path(image_path).replace_extension(".multi.ppm").string();
  Image annotated = image;
  size_t color_idx = 0;
  for (const auto& [name, res] : results) {
    std::vector<Box> boxes;
    for (const auto& c : res.clusters) boxes.push_back(c.bounds);
    annotated = draw_boxes(annotated, boxes, kPalette[color_idx % kPalette.size()]);
    ++color_idx;
  }
  save_image(annotated, out_image);

  for (const auto& [name, res] : results) {
    if (res.ok())
      std::cout << name << ": clusters=" << res.clusters.size() << "\n";
    else
      std::cout << name << ": error: " << res.error << "\n";
  }
  std::cout << "json=" << out_json << " annotated=" << out_image << "\n";
  return 0;
}

int run_inspect(const std::string& model_path, const std::string& image_path,
                const std::string& sws_csv, int top, int stride_div, int batch_cap,
                const std::string& out_dir) {
  DisCNNModel model = load_model(model_path);
  Image image = load_image(image_path);
  fs::create_directories(out_dir);
  for (int sws : parse_int_list(sws_csv, "--sws")) {
    const int stride = std::max(1, sws / stride_div);
    auto patches = extract_patches(image, sws, stride);
    auto records = score_patches(model, patches, batch_cap);
    std::vector<size_t> order(records.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return records[a].module > records[b].module;
    });
    const int k = std::min<int>(top, static_cast<int>(order.size()));
    constexpr int tile = 96, gap = 4;
    Image strip(k * tile + (k - 1) * gap, tile);
    std::fill(strip.pixels.begin(), strip.pixels.end(), 255);
    std::cout << "sws=" << sws << ":";
    for (int i = 0; i < k; ++i) {
      const auto& [box, img] = patches[order[static_cast<size_t>(i)]];
      Image t = resize_bilinear(img, tile, tile);
      for (int y = 0; y < tile; ++y)
        std::copy_n(t.at(0, y), tile * 3, strip.at(i * (tile + gap), y));
      std::cout << " " << records[order[static_cast<size_t>(i)]].module;
    }
    std::cout << "\n";
    const std::string path =
        (fs::path(out_dir) / ("strip_" + std::to_string(sws) + ".ppm")).string();
    save_image(strip, path);
    std::cout << "wrote " << path << "\n";
  }
  return 0;
}

int run_eval(const std::string& model_path, const std::string& scenes_dir,
             const DetectFlags& flags) {
  DisCNNModel model = load_model(model_path);
  DetectConfig cfg = flags.to_config();
  std::vector<fs::path> ppms;
  for (const auto& entry : fs::directory_iterator(scenes_dir))
    if (entry.path().extension() == ".ppm") ppms.push_back(entry.path());
  std::sort(ppms.begin(), ppms.end());
  if (ppms.empty()) throw config_error("no .ppm scenes in " + scenes_dir);

  int hits = 0, total = 0;
  for (const fs::path& ppm : ppms) {
    fs::path gt_path = ppm;
    gt_path.replace_extension(".json");
    if (!fs::exists(gt_path)) {
      std::cerr << "warning: no ground truth for " << ppm << ", skipped\n";
      continue;
    }
    std::ifstream gs(gt_path);
    nlohmann::json gt;
    gs >> gt;
    Image image = load_image(ppm.string());
    auto clusters = detect(image, model, cfg);
    ++total;
    if (gt.value("blank", false)) {
      const bool hit = clusters.empty();
      hits += hit;
      std::cout << "scene=" << ppm.filename().string()
                << " clusters=" << clusters.size() << " blank_expected=1 hit=" << hit
                << "\n";
      continue;
    }
    Box truth{gt["box"][0], gt["box"][1], gt["box"][2], gt["box"][3]};
    double best = 0;
    for (const auto& c : clusters) best = std::max(best, iou(c.bounds, truth));
    const bool hit = clusters.size() == 1 && best >= 0.5;
    hits += hit;
    std::cout << "scene=" << ppm.filename().string() << " clusters=" << clusters.size()
              << " best_iou=" << best << " hit=" << hit << "\n";
  }
  std::cout << "hit_rate=" << hits << "/" << total << "\n";
  return 0;
}

int run_calibrate(const std::string& model_path, const DataFlags& data,
                  const std::string& out) {
  DisCNNModel model = load_model(model_path);
  std::vector<Sample> samples = data.load();
  EpochMetrics m = separation_report(model, samples);
  const double thr = (m.mean_pos_module + m.mean_neg_module) / 2.0;
  std::cout << "pos_mean=" << m.mean_pos_module << " neg_mean=" << m.mean_neg_module
            << " thr=" << thr << "\n";
  if (!out.empty()) write_text(out, std::to_string(thr) + "\n");
  return 0;
}

int run_gen_scenes(const std::string& out_dir, int count, int size, int glyph_size,
                   uint32_t seed, bool blank) {
  fs::create_directories(out_dir);
  for (int k = 0; k < count; ++k) {
    SceneSpec spec;
    spec.width = spec.height = size;
    spec.seed = seed + static_cast<uint32_t>(k);
    spec.plant_glyph = !blank;
    if (!blank) {
      Rng rng(spec.seed ^ 0x9e3779b9u);
      const int margin = 8;
      const int x0 = static_cast<int>(rng.uniform_int(margin, size - glyph_size - margin));
      const int y0 = static_cast<int>(rng.uniform_int(margin, size - glyph_size - margin));
      spec.glyph_box = Box{x0, y0, x0 + glyph_size, y0 + glyph_size};
    }
    Scene scene = make_scene(spec);
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03d", k);
    const std::string ppm = (fs::path(out_dir) / (std::string(name) + ".ppm")).string();
    save_image(scene.image, ppm);
    nlohmann::ordered_json gt;
    if (blank) {
      gt["blank"] = true;
    } else {
      gt["box"] = {scene.truth.xmin, scene.truth.ymin, scene.truth.xmax,
                   scene.truth.ymax};
    }
    write_text((fs::path(out_dir) / (std::string(name) + ".json")).string(),
               gt.dump(2) + "\n");
  }
  std::cout << "wrote " << count << " scene(s) to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DisCNN single-positive-class training and multi-scale sliding-window detection"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI file (flag names as keys)");

  int rc = 1;

  // train
  auto* t = app.add_subcommand("train", "Train a detector and write a checkpoint");
  DataFlags train_data;
  train_data.attach(t);
  N2OConfig n2o;
  double stop_ratio = 0;
  std::string train_out, train_log, loss_name = "n2o-bce";
  t->add_option("--epochs", n2o.epochs, "Max training epochs")->capture_default_str();
  t->add_option("--batch-size", n2o.batch_size, "Mini-batch size")->capture_default_str();
  t->add_option("--lr", n2o.lr, "Learning rate")->capture_default_str();
  t->add_option("--momentum", n2o.momentum, "SGD momentum")->capture_default_str();
  t->add_option("--lambda", n2o.lambda, "Extra origin-pull weight on negatives")
      ->capture_default_str();
  t->add_option("--loss", loss_name, "Loss variant")->capture_default_str();
  t->add_option("--stop-ratio", stop_ratio,
                "Stop once separation ratio falls below this (0 = run all epochs)")
      ->capture_default_str();
  t->add_option("--out", train_out, "Checkpoint output path")->required();
  t->add_option("--log", train_log, "Training log path (default: <out>.log)");
  t->callback([&] {
    n2o.loss = loss_variant_from_name(loss_name);
    rc = run_train(train_data, n2o, stop_ratio, train_out, train_log);
  });

  // detect
  auto* d = app.add_subcommand("detect", "Detect positives in a large image");
  std::string d_model, d_image, d_json, d_annot;
  DetectFlags d_flags;
  d->add_option("--model", d_model, "Checkpoint path")->required();
  d->add_option("--image", d_image, "Scene image (PPM)")->required();
  d_flags.attach(d);
  d->add_option("--out-json", d_json, "Detection JSON path");
  d->add_option("--out-image", d_annot, "Annotated image path");
  d->callback([&] { rc = run_detect(d_model, d_image, d_flags, d_json, d_annot); });

  // detect-multi
  auto* dm = app.add_subcommand("detect-multi",
                                "Run one detector per registered class in parallel");
  std::string dm_registry, dm_image, dm_json, dm_annot;
  int dm_par = 4;
  dm->add_option("--registry", dm_registry, "Class registry JSON")->required();
  dm->add_option("--image", dm_image, "Scene image (PPM)")->required();
  dm->add_option("--parallelism", dm_par, "Worker count")->capture_default_str();
  dm->add_option("--out-json", dm_json, "Multi-class JSON path");
  dm->add_option("--out-image", dm_annot, "Annotated image path");
  dm->callback([&] {
    rc = run_detect_multi(dm_registry, dm_image, dm_par, dm_json, dm_annot);
  });

  // inspect
  auto* ins = app.add_subcommand(
      "inspect", "Render per-scale patch strips sorted by output module");
  std::string i_model, i_image, i_sws = "280,180,50", i_dir = "inspect_out";
  int i_top = 8, i_stride_div = 3, i_cap = 512;
  ins->add_option("--model", i_model, "Checkpoint path")->required();
  ins->add_option("--image", i_image, "Scene image (PPM)")->required();
  ins->add_option("--sws", i_sws, "Fixed window sizes, comma separated")
      ->capture_default_str();
  ins->add_option("--top", i_top, "Patches per strip")->capture_default_str();
  ins->add_option("--stride-div", i_stride_div, "stride = sws / stride-div")
      ->capture_default_str();
  ins->add_option("--batch-cap", i_cap, "Max patches per inference batch")
      ->capture_default_str();
  ins->add_option("--out-dir", i_dir, "Strip output directory")->capture_default_str();
  ins->callback([&] {
    rc = run_inspect(i_model, i_image, i_sws, i_top, i_stride_div, i_cap, i_dir);
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate detection against ground truth scenes");
  std::string e_model, e_dir;
  DetectFlags e_flags;
  ev->add_option("--model", e_model, "Checkpoint path")->required();
  ev->add_option("--scenes", e_dir, "Directory of scene .ppm + .json pairs")->required();
  e_flags.attach(ev);
  ev->callback([&] { rc = run_eval(e_model, e_dir, e_flags); });

  // calibrate-threshold
  auto* cal = app.add_subcommand("calibrate-threshold",
                                 "Suggest a threshold from labeled samples");
  std::string c_model, c_out;
  DataFlags cal_data;
  cal->add_option("--model", c_model, "Checkpoint path")->required();
  cal_data.attach(cal);
  cal->add_option("--out", c_out, "Write the threshold to this file");
  cal->callback([&] { rc = run_calibrate(c_model, cal_data, c_out); });

  // gen-scenes
  auto* gen = app.add_subcommand("gen-scenes", "Write synthetic ground-truth scenes");
  std::string g_dir;
  int g_count = 20, g_size = 512, g_glyph = 64;
  uint32_t g_seed = 1;
  bool g_blank = false;
  gen->add_option("--out-dir", g_dir, "Output directory")->required();
  gen->add_option("--count", g_count, "Scene count")->capture_default_str();
  gen->add_option("--size", g_size, "Scene edge length")->capture_default_str();
  gen->add_option("--glyph-size", g_glyph, "Planted glyph edge length")
      ->capture_default_str();
  gen->add_option("--seed", g_seed, "Base seed")->capture_default_str();
  gen->add_flag("--blank", g_blank, "Background-only scenes");
  gen->callback(
      [&] { rc = run_gen_scenes(g_dir, g_count, g_size, g_glyph, g_seed, g_blank); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
