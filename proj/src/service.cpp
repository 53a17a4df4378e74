#include "tunedemand/io/service.hpp"

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "tunedemand/error.hpp"
#include "tunedemand/io/operations.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that breaks Eigen's headers.
#include <httplib.h>

namespace tunedemand::io {
namespace {

using nlohmann::json;

struct Failure {
  int status;
  json body;
};

// Maps exceptions to a status and a body that never carries internals.
Failure classify(std::exception_ptr e) {
  try {
    std::rethrow_exception(e);
  } catch (const ValidationError& v) {
    return {400, {{"error", "validation"}, {"message", v.what()}, {"details", v.details()}}};
  } catch (const ConfigurationError& v) {
    return {400, {{"error", "configuration"}, {"message", v.what()}}};
  } catch (const DomainError& v) {
    return {400, {{"error", "domain"}, {"message", v.what()}}};
  } catch (const InfeasibleError& v) {
    return {400, {{"error", "infeasible"}, {"message", v.what()}}};
  } catch (const json::exception& v) {
    return {400, {{"error", "bad_request"}, {"message", v.what()}}};
  } catch (const NotFoundError& v) {
    return {404, {{"error", "not_found"}, {"message", v.what()}}};
  } catch (const ConflictError& v) {
    return {409, {{"error", "conflict"}, {"message", v.what()}}};
  } catch (const FitError& v) {
    return {422, {{"error", "fit_failed"}, {"message", v.what()}}};
  } catch (...) {
    return {500, {{"error", "internal"}, {"message", "internal server error"}}};
  }
}

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (...) {
    const auto failure = classify(std::current_exception());
    send(res, failure.status, failure.body);
  }
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body);
  if (!j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

std::vector<double> levels_of(const httplib::Request& req) {
  if (!req.has_param("levels")) return {0.05, 0.5, 0.95};
  std::vector<double> out;
  std::stringstream ss(req.get_param_value("levels"));
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ValidationError("levels must be comma-separated numbers");
    }
  }
  return out;
}

json job_json(const JobStatus& j) {
  json out{{"job_id", j.id}, {"kind", j.kind}, {"status", j.state}};
  if (j.state == "done") out["result"] = j.result;
  if (j.state == "failed") out["error"] = j.result;
  return out;
}

}  // namespace

ServiceConfig ServiceConfig::from_environment() {
  ServiceConfig c;
  if (const char* h = std::getenv("TUNEDEMAND_HOST")) c.host = h;
  if (const char* p = std::getenv("TUNEDEMAND_PORT")) {
    try {
      c.port = std::stoi(p);
    } catch (const std::exception&) {
      throw ConfigurationError("TUNEDEMAND_PORT is not a port number");
    }
  }
  if (const char* s = std::getenv("TUNEDEMAND_STORE")) c.store = s;
  return c;
}

Service::Service(ProjectStore& store) : store_(store), server_(std::make_unique<httplib::Server>()) {
  routes();
  worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(jobs_mutex_);
    stopping_ = true;
  }
  jobs_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

bool Service::listen(const std::string& host, int port) { return server_->listen(host, port); }
int Service::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }
bool Service::listen_after_bind() { return server_->listen_after_bind(); }
void Service::stop() { server_->stop(); }
void Service::wait_until_ready() const { server_->wait_until_ready(); }

std::string Service::submit(const std::string& kind, std::function<json()> work) {
  std::lock_guard lock(jobs_mutex_);
  const auto id = "job-" + std::to_string(next_job_++);
  jobs_[id] = JobStatus{id, kind, "queued", nullptr, "", 0};
  queue_.emplace_back(id, std::move(work));
  jobs_cv_.notify_one();
  return id;
}

std::optional<JobStatus> Service::job(const std::string& id) const {
  std::lock_guard lock(jobs_mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

void Service::worker_loop() {
  for (;;) {
    std::pair<std::string, std::function<json()>> item;
    {
      std::unique_lock lock(jobs_mutex_);
      jobs_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      item = std::move(queue_.front());
      queue_.pop_front();
      jobs_[item.first].state = "running";
    }
    json result;
    std::string state = "done";
    int status = 0;
    try {
      result = item.second();
    } catch (...) {
      const auto failure = classify(std::current_exception());
      result = failure.body;
      status = failure.status;
      state = "failed";
    }
    std::lock_guard lock(jobs_mutex_);
    auto& j = jobs_[item.first];
    j.result = std::move(result);
    j.error_status = status;
    j.state = state;
  }
}

void Service::routes() {
  auto& s = *server_;

  s.Get("/health", [](const httplib::Request&, httplib::Response& res) { send(res, 200, {{"status", "ok"}}); });

  s.Post("/ingest", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, ingest_op(store_, body_of(req))); });
  });

  s.Get("/songs", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json songs = json::array();
      for (const auto& id : store_.list("songs")) {
        const auto doc = store_.get("songs", id);
        songs.push_back({{"song_id", id},
                         {"artist_id", doc["artist_id"]},
                         {"release_date", doc["release_date"]},
                         {"strata", doc["strata"]},
                         {"weeks", doc["curves"].empty() ? 0 : doc["curves"][0].size()}});
      }
      send(res, 200, {{"songs", songs}});
    });
  });

  s.Get(R"(/songs/([A-Za-z0-9._-]+)/curves)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto song = song_from_json(store_.get("songs", req.matches[1]));
      json curves = json::array();
      for (std::size_t k = 0; k < song.curves.size(); ++k)
        curves.push_back({{"stratum", song.strata[k]}, {"values", song.curves[k].values}});
      send(res, 200, {{"song_id", song.song_id}, {"curves", curves}, {"aggregate", song.aggregate().values}});
    });
  });

  s.Get(R"(/songs/([A-Za-z0-9._-]+)/control-chart)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const double level = req.has_param("level") ? std::stod(req.get_param_value("level")) : 0.9;
      send(res, 200, control_chart_op(store_, req.matches[1], level));
    });
  });

  auto job_route = [this](const std::string& kind, json (*op)(ProjectStore&, const json&)) {
    return [this, kind, op](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto request = body_of(req);
        // Unknown songs fail fast instead of as a job.
        if (!request.contains("song_id") || !request["song_id"].is_string()) throw ValidationError("request needs a song_id");
        store_.get("songs", request["song_id"].get<std::string>());
        const auto id = submit(kind, [this, op, request] { return op(store_, request); });
        send(res, 202, {{"job_id", id}, {"status", "queued"}});
      });
    };
  };
  s.Post("/fit/null", job_route("fit_null", &fit_null_op));
  s.Post("/fit/forced", job_route("fit_forced", &fit_forced_op));
  s.Post("/fit/adsr", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, fit_adsr_op(store_, body_of(req))); });
  });

  s.Post("/classify", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, classify_op(store_, body_of(req))); });
  });

  s.Get("/fits", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, {{"fits", store_.list("fits")}}); });
  });
  s.Get(R"(/fits/([A-Za-z0-9._-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, store_.get("fits", req.matches[1])); });
  });
  s.Get(R"(/fits/([A-Za-z0-9._-]+)/predictive)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, predictive_op(store_, req.matches[1], levels_of(req))); });
  });

  auto optimize_route = [this](const char* scheme) {
    return [this, scheme](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto request = body_of(req);
        request["scheme"] = scheme;
        send(res, 200, optimize_op(store_, request));
      });
    };
  };
  s.Post("/optimize/null", optimize_route("null"));
  s.Post("/optimize/forced", optimize_route("forced"));
  s.Post("/optimize/whatif", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, whatif_op(store_, body_of(req))); });
  });

  s.Get(R"(/plans/([A-Za-z0-9._-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, store_.get("plans", req.matches[1])); });
  });
  s.Get(R"(/clusters/([A-Za-z0-9._-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send(res, 200, store_.get("clusters", req.matches[1])); });
  });

  s.Get(R"(/jobs/([A-Za-z0-9._-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto j = job(req.matches[1]);
    if (!j) return send(res, 404, {{"error", "not_found"}, {"message", "unknown job"}});
    send(res, 200, job_json(*j));
  });

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    send(res, 500, {{"error", "internal"}, {"message", "internal server error"}});
  });
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send(res, res.status, {{"error", res.status == 404 ? "not_found" : "error"}});
  });
}

int serve(const ServiceConfig& config) {
  ProjectStore store(config.store);
  Service service(store);
  std::cerr << "serving " << config.store << " on http://" << config.host << ':' << config.port << '\n';
  return service.listen(config.host, config.port) ? 0 : 2;
}

}  // namespace tunedemand::io
