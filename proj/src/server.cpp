#include "machstate/server.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <thread>

#include "machstate/json.hpp"
#include "machstate/util.hpp"

namespace machstate {
namespace {

using namespace std::chrono_literals;

// A session plus the thread that paces it.
struct Live {
  std::shared_ptr<Session> session;
  std::thread ticker;
  std::mutex mu;
  std::condition_variable cv;
  bool stop = false;
  std::uint64_t version = 0;  // bumped after every step

  void notify() {
    {
      std::lock_guard lock(mu);
      ++version;
    }
    cv.notify_all();
  }

  void halt() {
    {
      std::lock_guard lock(mu);
      stop = true;
    }
    cv.notify_all();
    if (ticker.joinable()) ticker.join();
  }
};

void send_json(httplib::Response& res, const Json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, Json{{"error", message}}, status);
}

int status_for(const std::string& message) {
  if (message == "session closed") return 409;
  if (message == "no matching status state") return 422;
  return 400;
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed JSON body: ") + e.what());
  }
}

std::string sse_frame(const TickEvent& ev) {
  return "id: " + std::to_string(ev.tick) + "\nevent: tick\ndata: " + Json(ev).dump() + "\n\n";
}

}  // namespace

struct ApiServer::Impl {
  std::shared_ptr<const CompiledModel> model;
  ServerOptions options;
  httplib::Server http;
  std::thread thread;
  std::atomic<bool> stopping{false};
  int port = -1;

  std::mutex sessions_mu;
  std::map<std::string, std::shared_ptr<Live>> sessions;
  std::int64_t next_id = 1;

  std::shared_ptr<Live> find(const std::string& id) {
    std::lock_guard lock(sessions_mu);
    auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : it->second;
  }

  std::string create(const Json& body) {
    SessionConfig config = body.get<SessionConfig>();
    config.check();
    std::shared_ptr<const CompiledModel> m = model;
    if (!config.bundle_path.empty()) m = std::make_shared<const CompiledModel>(load_bundle(config.bundle_path));
    std::vector<MachineSnapshot> replay;
    if (config.replay_source) replay = parse_snapshot_csv(read_file(*config.replay_source), m->bundle().manifest);

    auto live = std::make_shared<Live>();
    live->session = std::make_shared<Session>(config, m, std::move(replay));
    std::string id;
    {
      std::lock_guard lock(sessions_mu);
      id = "s" + std::to_string(next_id++);
      sessions[id] = live;
    }
    const auto period = std::chrono::duration<double, std::milli>(
        static_cast<double>(config.tick_interval_ms) / config.speed_factor);
    live->ticker = std::thread([live, period] {
      auto next = std::chrono::steady_clock::now();
      while (true) {
        auto ev = live->session->step();
        live->notify();
        if (!ev) break;
        next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
        std::unique_lock lock(live->mu);
        if (live->cv.wait_until(lock, next, [&] { return live->stop; })) break;
      }
    });
    return id;
  }

  Json close(const std::string& id, Live& live) {
    live.halt();
    live.session->close();
    live.notify();
    if (!options.log_dir.empty()) {
      std::filesystem::create_directories(options.log_dir);
      write_file((std::filesystem::path(options.log_dir) / (id + ".jsonl")).string(), live.session->log_jsonl());
    }
    auto label = live.session->final_label();
    return Json{{"sessionId", id},
                {"closed", true},
                {"ticks", live.session->tick_count()},
                {"finalLabel", label ? Json(*label) : Json(nullptr)}};
  }

  Json model_summary() const {
    const auto& b = model->bundle();
    return Json{{"formatVersion", b.format_version},
                {"minLeafSize", b.min_leaf_size},
                {"trainingWindow",
                 {{"start", format_rfc3339(b.training_window.start)}, {"end", format_rfc3339(b.training_window.end)}}},
                {"statusStates", b.status_states.size()},
                {"settingsStates", b.settings_states.size()},
                {"composites", b.composites.size()},
                {"supportedComposites", model->supported_composites()},
                {"manifest", b.manifest},
                {"qualityConfig", b.quality},
                {"datasetFingerprint", b.dataset_fingerprint}};
  }

  void routes();
};

void ApiServer::Impl::routes() {
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID");
    res.status = 204;
  });

  // Every handler maps Error to a JSON error body.
  auto guarded = [](auto fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.what()), e.what());
      } catch (const Json::exception& e) {
        send_error(res, 400, std::string("bad request: ") + e.what());
      }
    };
  };
  auto with_session = [this, guarded](auto fn) {
    return guarded([this, fn](const httplib::Request& req, httplib::Response& res) {
      const auto& id = req.path_params.at("id");
      auto live = find(id);
      if (!live) {
        send_error(res, 404, "unknown session: " + id);
        return;
      }
      fn(req, res, id, live);
    });
  };

  http.Get("/api/model", guarded([this](const httplib::Request&, httplib::Response& res) {
             send_json(res, model_summary());
           }));

  http.Post("/api/session", guarded([this](const httplib::Request& req, httplib::Response& res) {
              auto id = create(parse_body(req));
              send_json(res, Json{{"sessionId", id}}, 201);
            }));

  http.Get("/api/session/:id", with_session([](const httplib::Request&, httplib::Response& res,
                                               const std::string& id, const std::shared_ptr<Live>& live) {
             auto ev = live->session->latest();
             auto label = live->session->running_label();
             send_json(res, Json{{"sessionId", id},
                                 {"ticks", live->session->tick_count()},
                                 {"closed", live->session->closed()},
                                 {"finished", live->session->finished()},
                                 {"runningLabel", label ? Json(*label) : Json(nullptr)},
                                 {"latest", ev ? Json(*ev) : Json(nullptr)}});
           }));

  http.Get("/api/session/:id/events", with_session([this](const httplib::Request& req, httplib::Response& res,
                                                          const std::string&, const std::shared_ptr<Live>& live) {
             std::int64_t from = 0;
             if (req.has_header("Last-Event-ID")) from = std::stoll(req.get_header_value("Last-Event-ID")) + 1;
             if (req.has_param("from")) from = std::stoll(req.get_param_value("from"));
             auto cursor = std::make_shared<std::int64_t>(from);
             auto holder = live;
             res.set_header("Cache-Control", "no-cache");
             res.set_chunked_content_provider(
                 "text/event-stream", [this, holder, cursor](std::size_t, httplib::DataSink& sink) {
                   auto& l = *holder;
                   std::uint64_t seen;
                   {
                     std::lock_guard lock(l.mu);
                     seen = l.version;
                   }
                   auto events = l.session->events_since(*cursor);
                   for (const auto& ev : events) {
                     auto frame = sse_frame(ev);
                     if (!sink.write(frame.data(), frame.size())) return false;
                     *cursor = ev.tick + 1;
                   }
                   if (events.empty()) {
                     if (stopping || (l.session->finished() && *cursor >= l.session->tick_count())) {
                       std::string end = "event: end\ndata: {}\n\n";
                       sink.write(end.data(), end.size());
                       sink.done();
                       return true;
                     }
                     std::unique_lock lock(l.mu);
                     if (!l.cv.wait_for(lock, 500ms, [&] { return l.version != seen || stopping; })) {
                       lock.unlock();
                       std::string ping = ": keepalive\n\n";
                       if (!sink.write(ping.data(), ping.size())) return false;
                     }
                   }
                   return true;
                 });
           }));

  http.Post("/api/session/:id/settings", with_session([](const httplib::Request& req, httplib::Response& res,
                                                         const std::string&, const std::shared_ptr<Live>& live) {
              auto body = parse_body(req);
              const Json& values = body.contains("values") ? body["values"] : body;
              auto ack = live->session->apply_settings(values.get<ValueMap>());
              send_json(res, Json{{"effectiveTick", ack.effective_tick},
                                  {"values", ack.values},
                                  {"hypothetical", ack.hypothetical}});
            }));

  http.Post("/api/session/:id/quality", with_session([](const httplib::Request& req, httplib::Response& res,
                                                        const std::string&, const std::shared_ptr<Live>& live) {
              auto body = parse_body(req);
              auto label = live->session->record_quality_sample(body.at("measurement").get<double>());
              send_json(res, Json{{"runningLabel", label ? Json(*label) : Json(nullptr)}});
            }));

  http.Get("/api/session/:id/recommendation", with_session([](const httplib::Request&, httplib::Response& res,
                                                               const std::string&, const std::shared_ptr<Live>& live) {
             send_json(res, Json(live->session->recommend()));
           }));

  http.Post("/api/whatif", guarded([this](const httplib::Request& req, httplib::Response& res) {
              auto body = parse_body(req);
              auto candidate = body.at("candidateSettings").get<ValueMap>();
              if (body.contains("sessionId")) {
                auto id = body["sessionId"].get<std::string>();
                auto live = find(id);
                if (!live) {
                  send_error(res, 404, "unknown session: " + id);
                  return;
                }
                send_json(res, Json(live->session->whatif(candidate)));
                return;
              }
              auto status = body.at("status").get<MachineStatus>();
              double threshold = body.value("threshold", kDefaultDecisionThreshold);
              send_json(res, Json(whatif(*model, status, candidate, threshold)));
            }));

  http.Delete("/api/session/:id", with_session([this](const httplib::Request&, httplib::Response& res,
                                                      const std::string& id, const std::shared_ptr<Live>& live) {
                send_json(res, close(id, *live));
              }));

  if (!options.static_dir.empty()) http.set_mount_point("/", options.static_dir);
}

ApiServer::ApiServer(std::shared_ptr<const CompiledModel> model, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
  if (!model) throw Error("server requires a model");
  impl_->model = std::move(model);
  impl_->options = std::move(options);
  impl_->routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start() {
  auto& im = *impl_;
  if (im.options.port == 0) {
    im.port = im.http.bind_to_any_port(im.options.host);
  } else if (im.http.bind_to_port(im.options.host, im.options.port)) {
    im.port = im.options.port;
  }
  if (im.port <= 0) throw Error("cannot bind " + im.options.host + ":" + std::to_string(im.options.port));
  im.thread = std::thread([&im] { im.http.listen_after_bind(); });
  im.http.wait_until_ready();
  return im.port;
}

void ApiServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void ApiServer::stop() {
  auto& im = *impl_;
  if (im.stopping.exchange(true)) {
    if (im.thread.joinable()) im.thread.join();
    return;
  }
  std::vector<std::shared_ptr<Live>> live;
  {
    std::lock_guard lock(im.sessions_mu);
    for (auto& [id, l] : im.sessions) live.push_back(l);
  }
  for (auto& l : live) {
    l->halt();
    l->notify();
  }
  im.http.stop();
  if (im.thread.joinable()) im.thread.join();
}

int ApiServer::port() const { return impl_->port; }

}  // namespace machstate
