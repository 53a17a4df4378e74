#include "tunedemand/io/store.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tunedemand/error.hpp"

namespace tunedemand::io {
namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Write-then-rename so readers never see a half-written document.
void write_file(const std::filesystem::path& p, const std::string& content) {
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

ProjectStore::ProjectStore(std::filesystem::path root) : root_(std::move(root)) {
  for (const char* kind : {"songs", "fits", "plans", "clusters", "inputs", "draws"}) {
    std::filesystem::create_directories(root_ / kind);
  }
}

void ProjectStore::check_id(const std::string& id) const {
  const bool ok = !id.empty() && id.size() <= 200 && id.front() != '.' &&
                  std::all_of(id.begin(), id.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
                  });
  if (!ok) throw ValidationError("invalid id '" + id + "': use letters, digits, '-', '_' or '.'");
}

std::filesystem::path ProjectStore::file(const std::string& kind, const std::string& id) const {
  check_id(id);
  return root_ / kind / (id + ".json");
}

void ProjectStore::put(const std::string& kind, const std::string& id, const nlohmann::json& doc, bool replace) {
  const auto path = file(kind, id);
  const auto text = doc.dump(2) + "\n";
  std::lock_guard<std::mutex> guard(mutex_);
  std::filesystem::create_directories(path.parent_path());
  if (std::filesystem::exists(path) && !replace && read_file(path) != text) {
    throw ConflictError(kind + " '" + id + "' already exists with different content");
  }
  write_file(path, text);
}

nlohmann::json ProjectStore::get(const std::string& kind, const std::string& id) const {
  const auto path = file(kind, id);
  if (!std::filesystem::exists(path)) throw NotFoundError(kind + " '" + id + "' not found");
  return nlohmann::json::parse(read_file(path));
}

bool ProjectStore::has(const std::string& kind, const std::string& id) const {
  return std::filesystem::exists(file(kind, id));
}

std::vector<std::string> ProjectStore::list(const std::string& kind) const {
  std::vector<std::string> ids;
  const auto dir = root_ / kind;
  if (!std::filesystem::exists(dir)) return ids;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string ProjectStore::save_input(std::string_view text) {
  const auto hash = fnv1a_hex(text);
  std::lock_guard<std::mutex> guard(mutex_);
  const auto path = root_ / "inputs" / (hash + ".csv");
  if (!std::filesystem::exists(path)) write_file(path, std::string(text));
  return hash;
}

std::string ProjectStore::load_input(const std::string& hash) const {
  check_id(hash);
  const auto path = root_ / "inputs" / (hash + ".csv");
  if (!std::filesystem::exists(path)) throw NotFoundError("input '" + hash + "' not found");
  return read_file(path);
}

std::filesystem::path ProjectStore::draws_dir(const std::string& fit_id) const {
  check_id(fit_id);
  return root_ / "draws" / fit_id;
}

void ProjectStore::append_log(const nlohmann::json& entry) {
  std::lock_guard<std::mutex> guard(log_mutex_);
  std::ofstream out(root_ / "runlog.jsonl", std::ios::app);
  out << entry.dump() << '\n';
}

std::vector<nlohmann::json> ProjectStore::read_log() const {
  std::vector<nlohmann::json> out;
  std::ifstream in(root_ / "runlog.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

}  // namespace tunedemand::io
