#include "spanlab/service.h"

#include <atomic>
#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include "httplib.h"
#include "json_io.h"

namespace spanlab {

using nlohmann::json;

namespace {

struct ApiError {
  int http_status;
  std::string code;
  std::string message;
};

void SendOk(httplib::Response& res, json payload) {
  res.status = 200;
  res.set_content(json{{"status", "ok"}, {"payload", std::move(payload)}}.dump(),
                  "application/json");
}

void SendError(httplib::Response& res, const ApiError& e) {
  res.status = e.http_status;
  res.set_content(
      json{{"status", "error"}, {"error", {{"code", e.code}, {"message", e.message}}}}.dump(),
      "application/json");
}

int HttpStatusFor(const std::string& code) {
  static const std::map<std::string, int> kStatus = {
      {"BAD_REQUEST", 400},     {"INVALID_SPAN", 400},    {"UNKNOWN_LABEL", 400},
      {"SPAN_TOO_LONG", 400},   {"INVALID_CONDITION", 400}, {"UNKNOWN_DOC", 404},
      {"UNKNOWN_LF", 404},      {"NOT_FOUND", 404},       {"EXHAUSTED", 409},
      {"EMPTY_SELECTION", 409}, {"NO_SNAPSHOT", 409},     {"STALE_SNAPSHOT", 409},
      {"LF_SELECTED", 409},     {"NO_PROJECT_PATH", 409},
  };
  auto it = kStatus.find(code);
  return it == kStatus.end() ? 500 : it->second;
}

ApiError MakeError(const std::string& code, const std::string& message) {
  return {HttpStatusFor(code), code, message};
}

json TokenJson(const Token& t) {
  return {{"text", t.text}, {"pos", t.pos}, {"dep", t.dep}, {"ner", t.ner}};
}

}  // namespace

struct Service::Impl {
  struct Preview {
    std::size_t doc_coverage = 0;
    LFStats stats;
  };

  Impl(Project p, ServiceOptions o) : project(std::move(p)), options(std::move(o)) {}

  // Guards project and previews.
  std::mutex mu;
  Project project;
  ServiceOptions options;
  std::map<std::string, Preview> previews;

  // Retrain scheduling state, guarded by job_mu.
  std::mutex job_mu;
  std::condition_variable job_cv;
  bool pending = false;
  bool stopping = false;
  std::chrono::steady_clock::time_point due;
  std::atomic<bool> fitting{false};
  // Published fits since start.
  std::atomic<std::size_t> fits{0};
  std::optional<std::string> last_error;  // guarded by mu

  httplib::Server server;
  std::thread listener;
  std::thread worker;
  int bound_port = -1;
  bool stopped = false;

  // --- helpers (callers hold mu) ---

  const Preview& PreviewFor(const LabelingFunction& lf) {
    auto it = previews.find(lf.id);
    if (it == previews.end()) {
      it = previews
               .emplace(lf.id,
                        Preview{project.PreviewDocCoverage(lf), project.PreviewStats(lf)})
               .first;
    }
    return it->second;
  }

  json FunctionEntry(const LabelingFunction& lf) {
    const auto& preview = PreviewFor(lf);
    json j = json_io::ToJson(lf);
    j["doc_coverage"] = preview.doc_coverage;
    const auto snapshot = project.snapshot();
    const LFStats* fitted = snapshot ? snapshot->stats_for(lf.id) : nullptr;
    // Conflict rates depend on the selection, so prefer the fitted figures.
    j["stats"] = json_io::ToJson(fitted ? *fitted : preview.stats);
    j["coverage"] = preview.stats.coverage;
    j["dev_precision"] =
        preview.stats.dev_precision ? json(*preview.stats.dev_precision) : json(nullptr);
    j["selected"] = project.selected().contains(lf.id);
    return j;
  }

  std::string StatusName() {
    if (fitting.load()) return "fitting";
    {
      std::lock_guard<std::mutex> lock(job_mu);
      if (pending) return "fitting";
    }
    return SnapshotStatusName(project.status());
  }

  // --- retrain worker ---

  void Schedule(std::chrono::milliseconds delay) {
    std::lock_guard<std::mutex> lock(job_mu);
    const auto when = std::chrono::steady_clock::now() + delay;
    due = pending ? std::max(due, when) : when;
    pending = true;
    job_cv.notify_all();
  }

  void WorkerLoop() {
    std::unique_lock<std::mutex> lock(job_mu);
    while (!stopping) {
      if (!pending) {
        job_cv.wait(lock);
        continue;
      }
      if (std::chrono::steady_clock::now() < due) {
        job_cv.wait_until(lock, due);
        continue;
      }
      fitting = true;
      pending = false;
      lock.unlock();
      RunOneFit();
      fitting = false;
      lock.lock();
    }
  }

  void RunOneFit() {
    RetrainJob job;
    {
      std::lock_guard<std::mutex> lock(mu);
      try {
        job = project.PrepareRetrain();
      } catch (const std::exception& e) {
        last_error = e.what();
        return;
      }
    }
    try {
      auto snapshot = Project::RunRetrain(job);
      std::lock_guard<std::mutex> lock(mu);
      project.Publish(std::move(snapshot));
      ++fits;
      last_error.reset();
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(mu);
      last_error = std::string("fit failed: ") + e.what();
    }
  }

  void Routes();
};

void Service::Impl::Routes() {
  // Wraps a handler with envelope and error translation.
  const auto wrap = [this](auto fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        SendOk(res, fn(req));
      } catch (const ApiError& e) {
        SendError(res, e);
      } catch (const AnnotationError& e) {
        SendError(res, MakeError(AnnotationErrorCode(e.code()), e.what()));
      } catch (const SessionComplete& e) {
        SendError(res, MakeError("EXHAUSTED", e.what()));
      } catch (const SessionError& e) {
        SendError(res, MakeError(e.code(), e.what()));
      } catch (const json::exception& e) {
        SendError(res, MakeError("BAD_REQUEST", e.what()));
      } catch (const std::exception& e) {
        SendError(res, {500, "INTERNAL", e.what()});
      }
    };
  };

  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });

  server.Get("/project", wrap([this](const httplib::Request&) {
    std::lock_guard<std::mutex> lock(mu);
    const auto& corpus = project.corpus();
    json annotations = json::array();
    for (const auto& a : project.annotations()) annotations.push_back(json_io::ToJson(a));
    return json{{"labels", project.labels().classes()},
                {"model", ModelKindName(project.model_kind())},
                {"tau_default", project.tau_default()},
                {"documents",
                 {{"train", corpus.split(Split::kTrain).size()},
                  {"dev", corpus.split(Split::kDev).size()},
                  {"test", corpus.split(Split::kTest).size()}}},
                {"annotations", std::move(annotations)},
                {"suggested", project.suggested().size()},
                {"selected", project.selected()},
                {"sampler",
                 {{"parity", project.sampler_state().parity},
                  {"served", project.sampler_state().served.size()},
                  {"seed", project.sampler_state().seed}}}};
  }));

  server.Get("/next_doc", wrap([this](const httplib::Request&) {
    std::lock_guard<std::mutex> lock(mu);
    const auto pick = project.NextDocument();
    const auto& doc = *project.corpus().find(pick.doc_id);
    json tokens = json::array();
    for (const auto& t : doc.tokens) tokens.push_back(TokenJson(t));
    return json{{"doc_id", doc.id},
                {"split", SplitName(doc.split)},
                {"tokens", std::move(tokens)},
                {"strategy", StrategyName(pick.strategy)}};
  }));

  server.Post("/annotations", wrap([this](const httplib::Request& req) {
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      throw MakeError("BAD_REQUEST", "body must be a JSON object");
    }
    const auto field = [&](const char* key, bool (json::*check)() const) -> const json& {
      auto it = body.find(key);
      if (it == body.end() || !((*it).*check)()) {
        throw MakeError("BAD_REQUEST", std::string("field \"") + key + "\" is missing or mistyped");
      }
      return *it;
    };
    SpanAnnotation ann;
    ann.doc_id = field("doc_id", &json::is_string).get<std::string>();
    const auto start = field("start", &json::is_number_integer).get<long long>();
    const auto end = field("end", &json::is_number_integer).get<long long>();
    ann.label = field("label", &json::is_string).get<std::string>();
    const auto polarity = ParsePolarity(field("polarity", &json::is_string).get<std::string>());
    if (!polarity) throw MakeError("BAD_REQUEST", "polarity must be positive or negative");
    ann.polarity = *polarity;
    if (start < 0 || end <= start) {
      throw MakeError("INVALID_SPAN", "span end must be greater than its start");
    }
    ann.start = static_cast<std::size_t>(start);
    ann.end = static_cast<std::size_t>(end);

    std::lock_guard<std::mutex> lock(mu);
    auto suggestions = project.SubmitAnnotation(ann);
    json out = json::array();
    for (auto& s : suggestions) {
      previews[s.lf.id] = {s.doc_coverage, s.preview};
      out.push_back(FunctionEntry(s.lf));
    }
    return json{{"suggestions", std::move(out)},
                {"off_train", project.last_annotation_off_train()}};
  }));

  server.Get("/lfs", wrap([this](const httplib::Request&) {
    std::lock_guard<std::mutex> lock(mu);
    json suggested = json::array(), selected = json::array();
    for (const auto& lf : project.suggested()) {
      json entry = FunctionEntry(lf);
      if (project.selected().contains(lf.id)) selected.push_back(entry);
      suggested.push_back(std::move(entry));
    }
    return json{{"suggested", std::move(suggested)}, {"selected", std::move(selected)}};
  }));

  const auto toggle = [this](bool on) {
    return [this, on](const httplib::Request& req) {
      const std::string id = req.path_params.at("id");
      json entry;
      bool any_selected = false;
      {
        std::lock_guard<std::mutex> lock(mu);
        project.SetSelected(id, on);
        entry = FunctionEntry(*project.find_function(id));
        any_selected = !project.selected().empty();
      }
      if (any_selected) Schedule(options.debounce);
      return entry;
    };
  };
  server.Post("/lfs/:id/select", wrap(toggle(true)));
  server.Post("/lfs/:id/deselect", wrap(toggle(false)));

  server.Post("/lfs/:id/negate", wrap([this](const httplib::Request& req) {
    const json body = json::parse(req.body.empty() ? "{}" : req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      throw MakeError("BAD_REQUEST", "body must be a JSON object");
    }
    const auto position = body.value("position", std::size_t{0});
    const auto condition = body.value("condition", std::size_t{0});
    std::lock_guard<std::mutex> lock(mu);
    const auto& lf = project.DeriveNegated(req.path_params.at("id"), position, condition);
    return FunctionEntry(lf);
  }));

  server.Get("/lfs/:id/feedback", wrap([this](const httplib::Request& req) {
    std::lock_guard<std::mutex> lock(mu);
    return json_io::ToJson(project.FalsePositiveFeedback(req.path_params.at("id")));
  }));

  server.Post("/retrain", wrap([this](const httplib::Request&) {
    {
      std::lock_guard<std::mutex> lock(mu);
      project.PrepareRetrain();  // surfaces EMPTY_SELECTION synchronously
    }
    Schedule(std::chrono::milliseconds(0));
    return json{{"status", "fitting"}};
  }));

  server.Get("/model", wrap([this](const httplib::Request&) {
    std::lock_guard<std::mutex> lock(mu);
    const auto snapshot = project.snapshot();
    json j;
    j["status"] = StatusName();
    j["last_error"] = last_error ? json(*last_error) : json(nullptr);
    j["fits"] = fits.load();
    if (!snapshot) {
      j["snapshot"] = nullptr;
      return j;
    }
    json stats = json::array();
    for (std::size_t k = 0; k < snapshot->functions.size(); ++k) {
      json s = json_io::ToJson(snapshot->lf_stats[k]);
      s["id"] = snapshot->functions[k].id;
      s["name"] = snapshot->functions[k].name;
      stats.push_back(std::move(s));
    }
    j["snapshot"] = {
        {"selected_hash", snapshot->selected_hash},
        {"model", ModelKindName(snapshot->model->kind())},
        {"functions", snapshot->functions.size()},
        {"dev_metrics",
         snapshot->dev_metrics ? json_io::ToJson(*snapshot->dev_metrics) : json(nullptr)},
        {"lf_stats", std::move(stats)},
        {"params", json_io::ParamsToJson(*snapshot->model)},
        {"fit_seconds", snapshot->fit_seconds}};
    return j;
  }));

  server.Get("/export", wrap([this](const httplib::Request& req) {
    const std::string name = req.has_param("split") ? req.get_param_value("split") : "train";
    const auto split = ParseSplit(name);
    if (!split) throw MakeError("BAD_REQUEST", "split must be train|dev|test");
    const bool force = req.has_param("force") && req.get_param_value("force") != "0" &&
                       req.get_param_value("force") != "false";
    std::lock_guard<std::mutex> lock(mu);
    json records = json::array();
    for (const auto& line : project.Export(*split, force)) records.push_back(json::parse(line));
    return json{{"split", name}, {"records", std::move(records)}};
  }));

  server.Post("/save", wrap([this](const httplib::Request&) {
    if (options.project_path.empty()) {
      throw MakeError("NO_PROJECT_PATH", "service was started without a project file");
    }
    std::lock_guard<std::mutex> lock(mu);
    project.Save(options.project_path);
    return json{{"path", options.project_path.string()}};
  }));

  // SO_REUSEADDR only: the library default adds SO_REUSEPORT, which would let
  // a second server share a busy port silently.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) {
      SendError(res, {404, "NOT_FOUND", "no such endpoint"});
    }
  });
}

Service::Service(Project project, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(project), std::move(options))) {
  impl_->Routes();
  impl_->worker = std::thread([this] { impl_->WorkerLoop(); });
}

Service::~Service() { Stop(); }

int Service::Bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->bound_port = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    impl_->bound_port = port;
  } else {
    impl_->bound_port = -1;
  }
  if (impl_->bound_port < 0) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) +
                             " (port in use?)");
  }
  return impl_->bound_port;
}

void Service::Run() {
  if (impl_->bound_port < 0) throw std::logic_error("Bind() before Run()");
  impl_->server.listen_after_bind();
}

void Service::Start() {
  if (impl_->bound_port < 0) throw std::logic_error("Bind() before Start()");
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void Service::Stop() {
  if (!impl_ || impl_->stopped) return;
  impl_->stopped = true;
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
  {
    std::lock_guard<std::mutex> lock(impl_->job_mu);
    impl_->stopping = true;
    impl_->job_cv.notify_all();
  }
  if (impl_->worker.joinable()) impl_->worker.join();
  if (!impl_->options.project_path.empty()) {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->project.Save(impl_->options.project_path);
  }
}

int Service::port() const { return impl_->bound_port; }

}  // namespace spanlab
