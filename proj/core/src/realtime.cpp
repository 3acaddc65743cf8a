#include "emo/realtime.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <istream>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "emo/dataset.hpp"
#include "emo/error.hpp"
#include "emo/rng.hpp"
#include "emo/training.hpp"

namespace emo {

namespace {

using json = nlohmann::ordered_json;

constexpr std::array<std::string_view, kNumEmotions> kTemplates = {
    "You seem angry. Would you like to take a deep breath and tell me what happened?",
    "Something seems to bother you. Do you want to talk about it?",
    "You look worried. I am here with you. Is everything all right?",
    "You look happy today! What made you smile?",
    "You seem sad. Would you like to talk about how you feel?",
    "You look surprised! Did something unexpected happen?",
    "You look calm. How is your day going?",
};
constexpr std::string_view kCheckIn =
    "I could not quite tell how you feel. How are you doing?";

double round_us(double seconds) {
  return std::max(0.0, std::round(seconds * 1e6) / 1e6);
}

std::optional<Emotion> label_from_token(const std::string& s) {
  if (s.size() == 1 && s[0] >= '0' && s[0] <= '9') {
    return emotion_from_code(s[0] - '0');
  }
  return emotion_from_name(s);
}

// Collects classified frames into windows.
class Assembler {
 public:
  Assembler(const PipelineConfig& cfg, SessionLog& log) : cfg_(cfg), log_(log) {}

  void drop(std::size_t n) {
    drops_ += n;
    log_.dropped_frames += n;
  }

  void add(Emotion pred, double latency, double arrival,
           std::optional<Emotion> truth) {
    preds_.push_back(pred);
    lats_.push_back(latency);
    stamps_.push_back(arrival);
    truths_.push_back(truth);
    if (preds_.size() == cfg_.window) emit();
  }

  void finish() {
    log_.discarded_frames = preds_.size();
    log_.dropped_after_last = drops_;
    preds_.clear();
  }

 private:
  void emit() {
    WindowRecord r;
    r.index = log_.windows.size();
    r.vote = majority_vote(preds_, cfg_.window);
    r.latencies = lats_;
    r.timestamps = stamps_;
    r.response = respond(r.vote);
    r.threshold_violated = r.max_latency() > cfg_.threshold;
    if (std::all_of(truths_.begin(), truths_.end(),
                    [](const auto& t) { return t.has_value(); })) {
      std::vector<Emotion> t;
      for (const auto& x : truths_) t.push_back(*x);
      r.truth = majority_vote(t, cfg_.window).winner;
    }
    r.dropped_before = drops_;
    drops_ = 0;
    log_.windows.push_back(std::move(r));
    preds_.clear();
    lats_.clear();
    stamps_.clear();
    truths_.clear();
  }

  const PipelineConfig& cfg_;
  SessionLog& log_;
  std::vector<Emotion> preds_;
  std::vector<double> lats_;
  std::vector<double> stamps_;
  std::vector<std::optional<Emotion>> truths_;
  std::size_t drops_ = 0;
};

double arrival_time(const PipelineConfig& cfg, std::size_t i) {
  return round_us(static_cast<double>(i / cfg.window) * cfg.window_period +
                  static_cast<double>(i % cfg.window) * cfg.frame_period);
}

struct Pending {
  Frame frame;
  double arrival = 0.0;
};

double timed_classify(Classifier& classifier, Clock& clock, const Frame& f,
                      Emotion& pred) {
  const double t0 = clock.now();
  pred = classifier.classify(f);
  return round_us(clock.now() - t0);
}

void run_simulated(FrameSource& source, Classifier& classifier, Clock& clock,
                   const PipelineConfig& cfg, Assembler& out) {
  std::deque<Pending> queue;
  double free_at = 0.0;
  auto process = [&] {
    Pending p = std::move(queue.front());
    queue.pop_front();
    const double start = std::max(free_at, p.arrival);
    Emotion pred{};
    const double lat = timed_classify(classifier, clock, p.frame, pred);
    free_at = start + lat;
    out.add(pred, lat, p.arrival, p.frame.truth);
  };

  std::size_t i = 0;
  while (auto f = source.next()) {
    const double arrival = arrival_time(cfg, i++);
    // The consumer keeps working through frames it can start before this one
    // arrives.
    while (!queue.empty() && free_at <= arrival) process();
    queue.push_back({std::move(*f), arrival});
    if (queue.size() > cfg.window) {
      queue.pop_front();
      out.drop(1);
    }
  }
  while (!queue.empty()) process();
}

void run_paced(FrameSource& source, Classifier& classifier, Clock& clock,
               const PipelineConfig& cfg, Assembler& out) {
  DropOldestQueue<Pending> queue(cfg.window);
  std::exception_ptr failure;
  std::thread producer([&] {
    try {
      const auto start = std::chrono::steady_clock::now();
      std::size_t i = 0;
      while (auto f = source.next()) {
        const double at = arrival_time(cfg, i++);
        std::this_thread::sleep_until(
            start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                        std::chrono::duration<double>(at)));
        queue.push({std::move(*f), at});
      }
    } catch (...) {
      failure = std::current_exception();
    }
    queue.close();
  });

  std::size_t dropped = 0;
  while (auto p = queue.pop(&dropped)) {
    out.drop(dropped);
    Emotion pred{};
    const double lat = timed_classify(classifier, clock, p->frame, pred);
    out.add(pred, lat, p->arrival, p->frame.truth);
  }
  out.drop(dropped);
  producer.join();
  if (failure) std::rethrow_exception(failure);
}

json counts_json(const VoteResult& v) {
  json c = json::object();
  for (Emotion e : kAllEmotions) c[std::string(name(e))] = v.counts[code(e)];
  return c;
}

}  // namespace

VoteResult majority_vote(std::span<const Emotion> predictions,
                         std::size_t window) {
  if (window == 0 || predictions.size() != window) {
    throw InvalidArgument("majority vote needs exactly " +
                          std::to_string(window) + " predictions, got " +
                          std::to_string(predictions.size()));
  }
  VoteResult r;
  for (Emotion e : predictions) ++r.counts[code(e)];
  std::size_t best = 0;
  for (std::size_t k = 1; k < kNumEmotions; ++k) {
    if (r.counts[k] > r.counts[best]) best = k;
  }
  r.winner = kAllEmotions[best];
  r.dominant = true;
  for (std::size_t k = 0; k < kNumEmotions; ++k) {
    if (k != best && r.counts[k] >= r.counts[best]) r.dominant = false;
  }
  return r;
}

std::string respond(const VoteResult& vote) {
  if (!vote.dominant) return std::string(kCheckIn);
  return std::string(kTemplates[code(vote.winner)]);
}

SyntheticFrameSource::SyntheticFrameSource(std::uint64_t seed,
                                           std::size_t total_frames,
                                           std::size_t hold)
    : seed_(seed), total_(total_frames), hold_(hold) {
  if (hold_ == 0) throw InvalidArgument("hold must be positive");
}

std::optional<Frame> SyntheticFrameSource::next() {
  if (produced_ >= total_) return std::nullopt;
  const std::size_t i = produced_++;
  if (i % hold_ == 0) {
    Rng rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (i / hold_ + 1)));
    current_ = kAllEmotions[rng.below(kNumEmotions)];
  }
  return Frame{synth_image(current_, seed_ * 1000003ULL + i), current_};
}

DirectoryFrameSource::DirectoryFrameSource(const std::string& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw IoError("frames directory '" + root + "' does not exist");
  }
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
    std::optional<Emotion> truth =
        label_from_token(entry.path().parent_path().filename().string());
    if (!truth) {
      const std::string stem = entry.path().stem().string();
      const auto us = stem.find('_');
      if (us != std::string::npos) truth = label_from_token(stem.substr(0, us));
    }
    files_.emplace_back(entry.path().string(), truth);
  }
  std::sort(files_.begin(), files_.end());
}

std::optional<Frame> DirectoryFrameSource::next() {
  if (pos_ >= files_.size()) return std::nullopt;
  const auto& [path, truth] = files_[pos_++];
  return Frame{read_pgm(path), truth};
}

double SteadyClock::now() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Emotion ModelClassifier::classify(const Frame& frame) {
  return argmax_label(graph_.infer(frame.image), 0);
}

StubClassifier::StubClassifier(VirtualClock& clock, std::uint64_t seed,
                               double accuracy, double min_latency,
                               double max_latency)
    : clock_(clock),
      state_(seed),
      accuracy_(accuracy),
      min_latency_(min_latency),
      max_latency_(max_latency) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
    throw InvalidArgument("stub accuracy must lie in [0, 1]");
  }
  if (!(min_latency >= 0.0 && max_latency >= min_latency)) {
    throw InvalidArgument("stub latency range must satisfy 0 <= min <= max");
  }
}

Emotion StubClassifier::classify(const Frame& frame) {
  Rng rng(state_);
  state_ = rng.below(~0ULL);
  clock_.advance(rng.uniform(min_latency_, max_latency_));
  if (frame.truth && rng.uniform() < accuracy_) return *frame.truth;
  return kAllEmotions[rng.below(kNumEmotions)];
}

double measure_latency(const ModelGraph& graph, const Tensor& frame) {
  if (frame.shape().n != 1) {
    throw ShapeError("latency is measured on a single frame, got " +
                     frame.shape().str());
  }
  const auto t0 = std::chrono::steady_clock::now();
  const Tensor out = graph.infer(frame);
  const auto t1 = std::chrono::steady_clock::now();
  (void)out;
  return std::chrono::duration<double>(t1 - t0).count();
}

void PipelineConfig::validate() const {
  if (window == 0) throw InvalidArgument("window must be positive");
  if (!(frame_period >= 0.0) || !std::isfinite(frame_period)) {
    throw InvalidArgument("frame period must be finite and >= 0");
  }
  if (!(window_period >= 0.0) || !std::isfinite(window_period)) {
    throw InvalidArgument("window period must be finite and >= 0");
  }
  if (!(threshold > 0.0) || !std::isfinite(threshold)) {
    throw InvalidArgument("threshold must be finite and > 0");
  }
}

double WindowRecord::max_latency() const {
  return latencies.empty() ? 0.0
                           : *std::max_element(latencies.begin(), latencies.end());
}

double WindowRecord::response_time() const {
  double s = 0.0;
  for (double l : latencies) s += l;
  return s;
}

SessionLog run_pipeline(FrameSource& source, Classifier& classifier,
                        Clock& clock, const PipelineConfig& cfg) {
  cfg.validate();
  SessionLog log;
  Assembler out(cfg, log);
  if (cfg.paced) {
    run_paced(source, classifier, clock, cfg, out);
  } else {
    run_simulated(source, classifier, clock, cfg, out);
  }
  out.finish();
  return log;
}

void write_session_log(std::ostream& out, const SessionLog& log) {
  auto ms = [](double s) { return std::round(s * 1e6) / 1e3; };
  for (const auto& w : log.windows) {
    if (w.dropped_before > 0) {
      json e;
      e["event"] = "frames_dropped";
      e["before_window"] = w.index;
      e["count"] = w.dropped_before;
      out << e.dump() << '\n';
    }
    json j;
    j["window_index"] = w.index;
    j["vote"] = name(w.vote.winner);
    j["counts"] = counts_json(w.vote);
    j["dominant"] = w.vote.dominant;
    j["max_latency_ms"] = ms(w.max_latency());
    j["violated"] = w.threshold_violated;
    j["response"] = w.response;
    j["truth"] = w.truth ? json(name(*w.truth)) : json(nullptr);
    json lats = json::array();
    for (double l : w.latencies) lats.push_back(ms(l));
    j["latencies_ms"] = std::move(lats);
    json stamps = json::array();
    for (double t : w.timestamps) stamps.push_back(t);
    j["timestamps_s"] = std::move(stamps);
    out << j.dump() << '\n';
  }
  if (log.dropped_after_last > 0) {
    json e;
    e["event"] = "frames_dropped";
    e["before_window"] = log.windows.size();
    e["count"] = log.dropped_after_last;
    out << e.dump() << '\n';
  }
  if (log.discarded_frames > 0) {
    json e;
    e["event"] = "partial_window_discarded";
    e["frames"] = log.discarded_frames;
    out << e.dump() << '\n';
  }
}

SessionLog read_session_log(std::istream& in) {
  SessionLog log;
  std::string line;
  std::size_t lineno = 0;
  std::size_t pending_drops = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.contains("event")) {
        const std::string ev = j.at("event").get<std::string>();
        if (ev == "frames_dropped") {
          const auto n = j.at("count").get<std::size_t>();
          pending_drops += n;
          log.dropped_frames += n;
        } else if (ev == "partial_window_discarded") {
          log.discarded_frames = j.at("frames").get<std::size_t>();
        } else {
          throw ParseError("unknown event '" + ev + "'", lineno);
        }
        continue;
      }
      WindowRecord w;
      w.index = j.at("window_index").get<std::size_t>();
      const auto winner = emotion_from_name(j.at("vote").get<std::string>());
      if (!winner) throw ParseError("unknown vote label", lineno);
      w.vote.winner = *winner;
      for (Emotion e : kAllEmotions) {
        w.vote.counts[code(e)] = j.at("counts").at(std::string(name(e))).get<std::size_t>();
      }
      w.vote.dominant = j.at("dominant").get<bool>();
      w.threshold_violated = j.at("violated").get<bool>();
      w.response = j.at("response").get<std::string>();
      if (!j.at("truth").is_null()) {
        w.truth = emotion_from_name(j.at("truth").get<std::string>());
      }
      for (double l : j.at("latencies_ms")) w.latencies.push_back(l / 1e3);
      for (double t : j.at("timestamps_s")) w.timestamps.push_back(t);
      w.dropped_before = pending_drops;
      pending_drops = 0;
      log.windows.push_back(std::move(w));
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed session record: ") + e.what(), lineno);
    }
  }
  log.dropped_after_last = pending_drops;
  return log;
}

std::array<PredictionRateRow, kNumEmotions> prediction_rates(
    const SessionLog& log) {
  std::array<PredictionRateRow, kNumEmotions> rows{};
  std::array<double, kNumEmotions> time_sum{};
  for (Emotion e : kAllEmotions) rows[code(e)].emotion = e;
  for (const auto& w : log.windows) {
    if (!w.truth) continue;
    auto& row = rows[code(*w.truth)];
    ++row.attempts;
    time_sum[code(*w.truth)] += w.response_time();
    if (w.vote.winner == *w.truth && !w.threshold_violated) ++row.successes;
  }
  for (std::size_t k = 0; k < kNumEmotions; ++k) {
    if (rows[k].attempts > 0) {
      rows[k].mean_response_time = time_sum[k] / static_cast<double>(rows[k].attempts);
    }
  }
  return rows;
}

void print_prediction_table(std::ostream& out,
                            std::span<const NamedSession> sessions) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-10s", "emotion");
  out << buf;
  for (const auto& s : sessions) {
    std::snprintf(buf, sizeof buf, " | %-28s", s.name.c_str());
    out << buf;
  }
  out << '\n';
  std::snprintf(buf, sizeof buf, "%-10s", "");
  out << buf;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    std::snprintf(buf, sizeof buf, " | %-14s%-14s", "response (s)", "rate");
    out << buf;
  }
  out << '\n';
  std::vector<std::array<PredictionRateRow, kNumEmotions>> tables;
  for (const auto& s : sessions) tables.push_back(prediction_rates(*s.log));
  for (Emotion e : kAllEmotions) {
    std::snprintf(buf, sizeof buf, "%-10s", std::string(name(e)).c_str());
    out << buf;
    for (const auto& t : tables) {
      const auto& row = t[code(e)];
      char rate[32];
      std::snprintf(rate, sizeof rate, "%zu/%zu", row.successes, row.attempts);
      if (row.attempts == 0) {
        std::snprintf(buf, sizeof buf, " | %-14s%-14s", "-", rate);
      } else {
        std::snprintf(buf, sizeof buf, " | %-14.3f%-14s", row.mean_response_time, rate);
      }
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace emo
