#include "discnn/orchestrator.hpp"

#include <atomic>
#include <thread>

namespace discnn {

void register_class_model(ClassRegistry& registry, const std::string& name,
                          const std::string& checkpoint_path,
                          const DetectConfig& config) {
  if (registry.find(name))
    throw config_error("register_class_model: duplicate class \"" + name + "\"");
  config.validate();
  ClassEntry entry;
  entry.name = name;
  entry.checkpoint = checkpoint_path;
  entry.config = config;
  entry.model = load_model(checkpoint_path);  // throws on a bad checkpoint
  registry.entries.push_back(std::move(entry));
}

std::map<std::string, ClassDetection> detect_multi(const Image& image,
                                                   const ClassRegistry& registry,
                                                   int parallelism) {
  if (registry.entries.empty())
    throw config_error("detect_multi: no classes registered");
  if (parallelism < 1)
    throw config_error("detect_multi: parallelism must be >= 1");

  std::vector<ClassDetection> results(registry.entries.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= registry.entries.size()) return;
      const ClassEntry& entry = registry.entries[i];
      try {
        results[i].clusters = detect(image, entry.model, entry.config);
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };
  const size_t workers = std::min<size_t>(static_cast<size_t>(parallelism),
                                          registry.entries.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::map<std::string, ClassDetection> out;
  for (size_t i = 0; i < registry.entries.size(); ++i)
    out.emplace(registry.entries[i].name, std::move(results[i]));
  return out;
}

nlohmann::ordered_json multi_detection_to_json(
    const std::string& image_id, const ClassRegistry& registry,
    const std::map<std::string, ClassDetection>& results) {
  nlohmann::ordered_json doc;
  doc["image"] = image_id;
  doc["classes"] = nlohmann::ordered_json::object();
  doc["errors"] = nlohmann::ordered_json::object();
  for (const auto& [name, res] : results) {
    const ClassEntry* entry = registry.find(name);
    if (res.ok() && entry)
      doc["classes"][name] = detection_to_json(image_id, entry->config, res.clusters);
    else
      doc["errors"][name] = res.error.empty() ? "unknown class" : res.error;
  }
  return doc;
}

}  // namespace discnn
