#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tunedemand::io {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
/// Its 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Directory of JSON documents, one subdirectory per kind (songs, fits,
/// plans, clusters), raw ingest inputs under inputs/, columnar draws under
/// draws/<fit id>/, and the append-only runlog.jsonl. Writes go through one
/// mutex; reads open files directly.
class ProjectStore {
 public:
  explicit ProjectStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  /// Stores `doc` as <kind>/<id>.json. Rewriting identical content is a
  /// no-op; different content throws ConflictError unless `replace`.
  void put(const std::string& kind, const std::string& id, const nlohmann::json& doc, bool replace = false);
  /// Throws NotFoundError for unknown ids.
  nlohmann::json get(const std::string& kind, const std::string& id) const;
  bool has(const std::string& kind, const std::string& id) const;
  /// Ids of a kind in sorted order.
  std::vector<std::string> list(const std::string& kind) const;

  /// Keeps raw input text, returning its hash.
  std::string save_input(std::string_view text);
  std::string load_input(const std::string& hash) const;

  std::filesystem::path draws_dir(const std::string& fit_id) const;

  void append_log(const nlohmann::json& entry);
  std::vector<nlohmann::json> read_log() const;

  /// Serializes a multi-step write against other writers.
  std::unique_lock<std::mutex> lock_writes() { return std::unique_lock<std::mutex>(mutex_); }

 private:
  std::filesystem::path file(const std::string& kind, const std::string& id) const;
  void check_id(const std::string& id) const;

  std::filesystem::path root_;
  std::mutex mutex_;
  std::mutex log_mutex_;
};

}  // namespace tunedemand::io
