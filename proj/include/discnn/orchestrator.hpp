#pragma once

#include <map>
#include <string>
#include <vector>

#include "discnn/detector.hpp"

namespace discnn {

// One independent single-class detector per positive class; classes run in
// parallel over an immutable shared image and produce exactly what the
// standalone detector would.

struct ClassEntry {
  std::string name;
  std::string checkpoint;
  DetectConfig config;
  DisCNNModel model;
};

struct ClassRegistry {
  std::vector<ClassEntry> entries;

  const ClassEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
  size_t size() const { return entries.size(); }
};

// Loads the checkpoint eagerly; duplicate names and load failures throw and
// leave the registry unchanged.
void register_class_model(ClassRegistry& registry, const std::string& name,
                          const std::string& checkpoint_path,
                          const DetectConfig& config);

struct ClassDetection {
  std::vector<DetectionCluster> clusters;
  std::string error;  // empty on success
  bool ok() const { return error.empty(); }
};

// Runs detect() once per registered class with up to `parallelism` workers.
// The result map is bit-identical for every parallelism degree; per-class
// failures are reported in-band without aborting the others.
std::map<std::string, ClassDetection> detect_multi(const Image& image,
                                                   const ClassRegistry& registry,
                                                   int parallelism);

// {"classes": {name: detection document}, "errors": {name: message}}
nlohmann::ordered_json multi_detection_to_json(
    const std::string& image_id, const ClassRegistry& registry,
    const std::map<std::string, ClassDetection>& results);

}  // namespace discnn
