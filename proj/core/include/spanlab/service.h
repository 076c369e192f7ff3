#ifndef SPANLAB_SERVICE_H_
#define SPANLAB_SERVICE_H_

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "spanlab/session.h"

namespace spanlab {

struct ServiceOptions {
  // Where POST /save and shutdown write the project; empty disables saving.
  std::filesystem::path project_path;
  // Selection changes inside this window coalesce into one fit.
  std::chrono::milliseconds debounce{300};
};

// Single-project HTTP/JSON front end for one annotation session. Every
// response is an envelope {"status": "ok", "payload": ...} or
// {"status": "error", "error": {"code", "message"}}.
//
//   GET  /health                 GET  /lfs
//   GET  /project                POST /lfs/{id}/select
//   GET  /next_doc               POST /lfs/{id}/deselect
//   POST /annotations            POST /lfs/{id}/negate
//   POST /retrain                GET  /lfs/{id}/feedback
//   GET  /model                  GET  /export?split=&force=
//   POST /save
//
// Fits run on a background worker; GET /model reports fresh|stale|fitting.
class Service {
 public:
  Service(Project project, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds the listening socket; port 0 picks a free port. Returns the bound
  // port. Throws std::runtime_error when the port is unavailable.
  int Bind(const std::string& host, int port);
  // Serves until Stop(). Requires Bind().
  void Run();
  // Bind() must have been called; serves on a background thread.
  void Start();
  // Stops listening, waits for a running fit, and saves the project.
  void Stop();

  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace spanlab

#endif  // SPANLAB_SERVICE_H_
