#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "finegrain/sxs.h"

namespace finegrain {

// What a rater is shown for one assignment.
struct AssignmentView {
  std::string pair_id;
  std::string task;
  std::string question;
  std::string left_image_ref;
  std::string right_image_ref;
  std::string prompt_text;
  ModelSide left_model = ModelSide::kA;
};

std::string assignment_to_json(const AssignmentView& view);

struct AnnotationProgress {
  std::size_t total = 0;
  std::size_t completed = 0;
  std::size_t leased = 0;
  std::size_t raters = 0;
};

std::string progress_to_json(const AnnotationProgress& progress);

enum class SubmitStatus { kAccepted, kConflict, kRejected };

struct SubmitResult {
  SubmitStatus status = SubmitStatus::kAccepted;
  std::string message;
};

// Hand-out and collection state for one annotation plan, backed by an
// append-only log. Every accepted response is written and fsynced before
// submit() returns. Thread-safe.
class AnnotationService {
 public:
  // Replays an existing log at `log_path`, or creates it with a header.
  AnnotationService(AnnotationPlan plan, std::filesystem::path log_path);

  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  // The rater's outstanding assignment, else the first open one in the
  // rater's slot order, else the first open one elsewhere that the rater has
  // not already judged. Empty when nothing is left for this rater.
  std::optional<AssignmentView> next_assignment(const std::string& rater_id);

  // `left_model` in the record is overwritten from the plan. Resubmitting a
  // (pair, task, rater) that is already stored yields kConflict and leaves
  // the log unchanged.
  SubmitResult submit(SxSRecord record);

  AnnotationProgress progress() const;
  std::vector<SxSRecord> records() const;
  SxSReport report() const;

  const AnnotationPlan& plan() const { return plan_; }

 private:
  enum class State { kOpen, kLeased, kDone };

  AssignmentView view_of(std::size_t assignment) const;
  std::size_t slot_for(const std::string& rater_id);
  void append_to_log(const SxSRecord& record);

  AnnotationPlan plan_;
  std::filesystem::path log_path_;
  mutable std::mutex mutex_;
  std::vector<State> state_;
  std::vector<std::string> holder_;  // rater holding or having completed the assignment
  std::map<std::string, std::size_t> rater_slot_;
  std::map<std::string, std::size_t> outstanding_;  // rater -> leased assignment
  std::set<std::tuple<std::string, std::string, std::string>> judged_;  // (pair, task, rater)
  std::vector<SxSRecord> records_;
};

// HTTP front end:
//   GET  /api/assignment?rater=<id>  -> assignment JSON, or {"done":true}
//   POST /api/response               -> SxSRecord JSON; 409 on duplicates
//   GET  /api/progress               -> progress JSON
//   GET  /api/report                 -> serialize_report(...) of the stored log
//   GET  /                           -> static assets from `static_dir`, or a
//                                       placeholder page when none is given
class AnnotationServer {
 public:
  AnnotationServer(AnnotationService& service, std::filesystem::path static_dir = {});
  ~AnnotationServer();

  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Binds and serves on a background thread; port 0 picks a free port.
  // Returns the bound port; throws on bind failure.
  int start(const std::string& host, int port);
  // Binds and serves on the calling thread until stop() is called.
  void run(const std::string& host, int port);
  void stop();

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace finegrain
