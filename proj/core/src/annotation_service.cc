#include "finegrain/annotation_service.h"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <thread>

#include <fcntl.h>
#include <unistd.h>

#include "httplib.h"
#include "json.hpp"

#include "finegrain/error.h"
#include "finegrain/io.h"

namespace finegrain {

using nlohmann::ordered_json;

namespace {

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void append_durably(const std::filesystem::path& path, const std::string& line) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error(ErrorKind::kIo, "cannot open log " + path.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < line.size()) {
    ssize_t n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      ::close(fd);
      throw Error(ErrorKind::kIo, "cannot append to log " + path.string() + ": " + std::strerror(err));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    int err = errno;
    ::close(fd);
    throw Error(ErrorKind::kIo, "cannot sync log " + path.string() + ": " + std::strerror(err));
  }
  ::close(fd);
}

}  // namespace

std::string assignment_to_json(const AssignmentView& view) {
  ordered_json j;
  j["pair_id"] = view.pair_id;
  j["task"] = view.task;
  j["question"] = view.question;
  j["left_image_ref"] = view.left_image_ref;
  j["right_image_ref"] = view.right_image_ref;
  j["prompt_text"] = view.prompt_text;
  j["left_model"] = std::string(model_side_name(view.left_model));
  return j.dump();
}

std::string progress_to_json(const AnnotationProgress& progress) {
  ordered_json j;
  j["total"] = progress.total;
  j["completed"] = progress.completed;
  j["leased"] = progress.leased;
  j["raters"] = progress.raters;
  return j.dump();
}

AnnotationService::AnnotationService(AnnotationPlan plan, std::filesystem::path log_path)
    : plan_(std::move(plan)),
      log_path_(std::move(log_path)),
      state_(plan_.assignments.size(), State::kOpen),
      holder_(plan_.assignments.size()) {
  if (plan_.assignments.empty()) throw Error(ErrorKind::kInvalidArgument, "annotation plan is empty");
  if (std::filesystem::exists(log_path_)) {
    std::vector<SxSRecord> stored = parse_sxs_log(read_file(log_path_));
    for (SxSRecord& r : stored) {
      auto pair = plan_.find_pair(r.pair_id);
      if (!pair) throw Error(ErrorKind::kUnknownName, "log references unknown pair '" + r.pair_id + "'");
      // Replay onto an open assignment of the same pair, task and side.
      bool placed = false;
      for (std::size_t i = 0; i < plan_.assignments.size() && !placed; ++i) {
        const Assignment& a = plan_.assignments[i];
        if (state_[i] == State::kOpen && a.pair_index == *pair && a.task == r.task && a.left_model == r.left_model) {
          state_[i] = State::kDone;
          holder_[i] = r.rater_id;
          placed = true;
        }
      }
      if (!placed) throw Error(ErrorKind::kConflict, "log record for " + r.pair_id + "/" + r.task + " fits no open assignment");
      if (!judged_.insert({r.pair_id, r.task, r.rater_id}).second) {
        throw Error(ErrorKind::kConflict, "log holds a duplicate submission for " + r.pair_id + "/" + r.task);
      }
      slot_for(r.rater_id);
      records_.push_back(std::move(r));
    }
  } else {
    append_durably(log_path_, sxs_log_header() + "\n");
  }
}

std::size_t AnnotationService::slot_for(const std::string& rater_id) {
  auto it = rater_slot_.find(rater_id);
  if (it != rater_slot_.end()) return it->second;
  std::size_t slot = rater_slot_.size() % plan_.raters_per_pair;
  rater_slot_.emplace(rater_id, slot);
  return slot;
}

AssignmentView AnnotationService::view_of(std::size_t index) const {
  const Assignment& a = plan_.assignments[index];
  const PlanPair& p = plan_.pair_of(a);
  AssignmentView v;
  v.pair_id = p.pair.pair_id;
  v.task = a.task;
  v.question = task_question(a.task);
  v.left_model = a.left_model;
  v.left_image_ref = a.left_model == ModelSide::kA ? p.image_ref_a : p.image_ref_b;
  v.right_image_ref = a.left_model == ModelSide::kA ? p.image_ref_b : p.image_ref_a;
  v.prompt_text = p.prompt_text;
  return v;
}

std::optional<AssignmentView> AnnotationService::next_assignment(const std::string& rater_id) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (rater_id.empty()) throw Error(ErrorKind::kInvalidArgument, "rater id must be nonempty");
  auto held = outstanding_.find(rater_id);
  if (held != outstanding_.end()) return view_of(held->second);

  const std::size_t own = slot_for(rater_id);
  auto eligible = [&](std::size_t i) {
    if (state_[i] != State::kOpen) return false;
    const Assignment& a = plan_.assignments[i];
    return !judged_.count({plan_.pair_of(a).pair.pair_id, a.task, rater_id});
  };
  std::optional<std::size_t> pick;
  for (std::size_t k = 0; k < plan_.raters_per_pair && !pick; ++k) {
    std::size_t slot = (own + k) % plan_.raters_per_pair;
    for (std::size_t i : plan_.slot_orders[slot]) {
      if (eligible(i)) {
        pick = i;
        break;
      }
    }
  }
  if (!pick) return std::nullopt;
  state_[*pick] = State::kLeased;
  holder_[*pick] = rater_id;
  outstanding_[rater_id] = *pick;
  return view_of(*pick);
}

SubmitResult AnnotationService::submit(SxSRecord record) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (record.rater_id.empty()) return {SubmitStatus::kRejected, "rater_id must be nonempty"};
  if (record.response_ms < 0) return {SubmitStatus::kRejected, "response_ms must be nonnegative"};
  auto pair = plan_.find_pair(record.pair_id);
  if (!pair) return {SubmitStatus::kRejected, "unknown pair '" + record.pair_id + "'"};
  if (!plan_.has_task(record.task)) return {SubmitStatus::kRejected, "unknown task '" + record.task + "'"};
  if (judged_.count({record.pair_id, record.task, record.rater_id})) {
    return {SubmitStatus::kConflict, "already submitted"};
  }

  // Prefer the rater's own lease for this (pair, task); otherwise claim any
  // open assignment of it.
  std::optional<std::size_t> target;
  auto held = outstanding_.find(record.rater_id);
  if (held != outstanding_.end()) {
    const Assignment& a = plan_.assignments[held->second];
    if (a.pair_index == *pair && a.task == record.task) target = held->second;
  }
  if (!target) {
    for (std::size_t i = 0; i < plan_.assignments.size(); ++i) {
      const Assignment& a = plan_.assignments[i];
      if (state_[i] == State::kOpen && a.pair_index == *pair && a.task == record.task) {
        target = i;
        break;
      }
    }
  }
  if (!target) return {SubmitStatus::kConflict, "no open assignment left for " + record.pair_id + "/" + record.task};

  record.left_model = plan_.assignments[*target].left_model;
  if (record.timestamp.empty()) record.timestamp = utc_timestamp();
  append_to_log(record);

  slot_for(record.rater_id);
  state_[*target] = State::kDone;
  holder_[*target] = record.rater_id;
  if (held != outstanding_.end() && held->second == *target) outstanding_.erase(held);
  judged_.insert({record.pair_id, record.task, record.rater_id});
  records_.push_back(std::move(record));
  return {SubmitStatus::kAccepted, "ok"};
}

void AnnotationService::append_to_log(const SxSRecord& record) {
  append_durably(log_path_, record_to_json(record) + "\n");
}

AnnotationProgress AnnotationService::progress() const {
  std::lock_guard<std::mutex> lock(mutex_);
  AnnotationProgress p;
  p.total = state_.size();
  for (State s : state_) {
    p.completed += s == State::kDone;
    p.leased += s == State::kLeased;
  }
  p.raters = rater_slot_.size();
  return p;
}

std::vector<SxSRecord> AnnotationService::records() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return records_;
}

SxSReport AnnotationService::report() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return ingest_sxs(records_, plan_);
}

class AnnotationServer::Impl {
 public:
  Impl(AnnotationService& service, std::filesystem::path static_dir)
      : service_(service), static_dir_(std::move(static_dir)) {
    install_routes();
  }

  int bind(const std::string& host, int port) {
    int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorKind::kIo, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  void listen() { server_.listen_after_bind(); }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::thread thread_;

 private:
  static void send_json(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, "application/json");
  }

  static std::string error_body(const std::string& message) {
    ordered_json j;
    j["error"] = message;
    return j.dump();
  }

  void install_routes() {
    server_.Get("/api/assignment", [this](const httplib::Request& req, httplib::Response& res) {
      std::string rater = req.get_param_value("rater");
      if (rater.empty()) return send_json(res, 400, error_body("missing rater parameter"));
      auto view = service_.next_assignment(rater);
      if (!view) return send_json(res, 200, R"({"done":true})");
      send_json(res, 200, assignment_to_json(*view));
    });
    server_.Post("/api/response", [this](const httplib::Request& req, httplib::Response& res) {
      SxSRecord record;
      try {
        // left_model is assigned by the server; accept records without it.
        auto j = nlohmann::json::parse(req.body);
        if (!j.contains("left_model")) j["left_model"] = "A";
        record = record_from_json(j.dump());
      } catch (const std::exception& e) {
        return send_json(res, 400, error_body(e.what()));
      }
      try {
        SubmitResult result = service_.submit(std::move(record));
        switch (result.status) {
          case SubmitStatus::kAccepted: return send_json(res, 200, R"({"status":"ok"})");
          case SubmitStatus::kConflict: return send_json(res, 409, error_body(result.message));
          case SubmitStatus::kRejected: return send_json(res, 400, error_body(result.message));
        }
      } catch (const Error& e) {
        send_json(res, 500, error_body(e.what()));
      }
    });
    server_.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, progress_to_json(service_.progress()));
    });
    server_.Get("/api/report", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, serialize_report(service_.report()));
    });
    if (!static_dir_.empty()) {
      server_.set_mount_point("/", static_dir_.string());
    } else {
      server_.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(
            "<!doctype html><title>annotation</title><p>No annotator UI bundle was configured. "
            "The JSON API is available under /api/.</p>",
            "text/html");
      });
    }
  }

  AnnotationService& service_;
  std::filesystem::path static_dir_;
  httplib::Server server_;
};

AnnotationServer::AnnotationServer(AnnotationService& service, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(service, std::move(static_dir))) {}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::start(const std::string& host, int port) {
  int bound = impl_->bind(host, port);
  impl_->thread_ = std::thread([this] { impl_->listen(); });
  return bound;
}

void AnnotationServer::run(const std::string& host, int port) {
  impl_->bind(host, port);
  impl_->listen();
}

void AnnotationServer::stop() {
  if (impl_) impl_->stop();
}

}  // namespace finegrain
