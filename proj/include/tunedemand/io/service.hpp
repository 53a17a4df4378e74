#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "tunedemand/io/store.hpp"

namespace httplib {
class Server;
}

namespace tunedemand::io {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string store = "tunedemand-store";

  /// TUNEDEMAND_HOST, TUNEDEMAND_PORT and TUNEDEMAND_STORE override the defaults.
  static ServiceConfig from_environment();
};

struct JobStatus {
  std::string id;
  std::string kind;
  std::string state;  // queued, running, done, failed
  nlohmann::json result;
  std::string error;
  int error_status = 0;
};

/// HTTP/JSON front end over a ProjectStore. Fits run one at a time on a
/// background worker; every other request is served from the pool.
class Service {
 public:
  explicit Service(ProjectStore& store);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves until stop(). Returns false if the bind failed.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port; returns it, or -1.
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

  /// Queued job id.
  std::string submit(const std::string& kind, std::function<nlohmann::json()> work);
  std::optional<JobStatus> job(const std::string& id) const;

 private:
  void routes();
  void worker_loop();

  ProjectStore& store_;
  std::unique_ptr<httplib::Server> server_;

  mutable std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::map<std::string, JobStatus> jobs_;
  std::deque<std::pair<std::string, std::function<nlohmann::json()>>> queue_;
  std::uint64_t next_job_ = 1;
  bool stopping_ = false;
  std::thread worker_;
};

/// Blocking entry point used by `tunedemand serve`.
int serve(const ServiceConfig& config);

}  // namespace tunedemand::io
