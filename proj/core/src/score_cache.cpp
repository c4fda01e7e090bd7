#include "fasp/score_cache.hpp"

#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "fasp/error.hpp"

namespace fasp {
namespace {

// Serializes read-modify-write cycles on cache files within this process.
std::mutex& cache_mutex() {
  static std::mutex mu;
  return mu;
}

std::optional<nlohmann::json> read_entry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(in);
    if (!j.is_object() || !j.contains("inputs_hash") || !j.contains("heads") ||
        !j.at("heads").is_object()) {
      throw std::runtime_error("missing fields");
    }
    return j;
  } catch (const std::exception& e) {
    std::cerr << "warning: ignoring corrupt cache file " << path << ": " << e.what() << "\n";
    return std::nullopt;
  }
}

bool matches(const nlohmann::json& entry, const CacheKey& key) {
  return entry.value("inputs_hash", "") == key.inputs_hash &&
         entry.value("model_hash", "") == key.model_hash;
}

}  // namespace

ScoreCache::ScoreCache(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path ScoreCache::file_for(const CacheKey& key) const {
  if (key.model_hash.empty() || key.metric.empty()) {
    throw InvalidArgumentError("cache key needs a model hash and a metric");
  }
  std::string name = key.metric;
  if (!key.category.empty()) name += "." + key.category;
  return root_ / key.model_hash / (name + ".json");
}

std::optional<double> ScoreCache::get(const CacheKey& key) const {
  const auto path = file_for(key);
  std::lock_guard lock(cache_mutex());
  const auto entry = read_entry(path);
  if (!entry || !matches(*entry, key)) return std::nullopt;
  try {
    if (!key.head) {
      if (!entry->contains("baseline") || entry->at("baseline").is_null()) return std::nullopt;
      return entry->at("baseline").get<double>();
    }
    const auto& heads = entry->at("heads");
    auto it = heads.find(std::to_string(*key.head));
    if (it == heads.end()) return std::nullopt;
    return it->get<double>();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "warning: ignoring corrupt cache value in " << path << ": " << e.what() << "\n";
    return std::nullopt;
  }
}

void ScoreCache::put(const CacheKey& key, double value) const {
  const auto path = file_for(key);
  std::lock_guard lock(cache_mutex());
  std::filesystem::create_directories(path.parent_path());
  auto entry = read_entry(path);
  if (!entry || !matches(*entry, key)) {
    entry = nlohmann::json{{"model_hash", key.model_hash},
                           {"metric", key.metric},
                           {"category", key.category},
                           {"inputs_hash", key.inputs_hash},
                           {"baseline", nullptr},
                           {"heads", nlohmann::json::object()}};
  }
  if (key.head) {
    (*entry)["heads"][std::to_string(*key.head)] = value;
  } else {
    (*entry)["baseline"] = value;
  }
  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream suffix;
  suffix << ".tmp." << std::this_thread::get_id() << "." << counter++;
  const auto tmp = path.string() + suffix.str();
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write cache file " + tmp);
    out << entry->dump(2) << "\n";
    if (!out) throw IoError("failed writing cache file " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fasp
