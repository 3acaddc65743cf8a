#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emo/emotion.hpp"
#include "emo/model.hpp"
#include "emo/tensor.hpp"

namespace emo {

inline constexpr std::size_t kDefaultWindow = 10;
inline constexpr double kDefaultThresholdSeconds = 1.30;

struct VoteResult {
  Emotion winner = Emotion::Angry;
  std::array<std::size_t, kNumEmotions> counts{};
  /// Winner's tally strictly exceeds every other label's.
  bool dominant = false;
};

/// Tallies a window of per-frame predictions. The label with the highest
/// count wins; ties go to the lower label code. Throws InvalidArgument when
/// the window does not hold exactly `window` predictions.
VoteResult majority_vote(std::span<const Emotion> predictions,
                         std::size_t window = kDefaultWindow);

/// Fixed utterance per winning emotion, or a neutral check-in when no
/// emotion is dominant.
std::string respond(const VoteResult& vote);

/// One captured face crop, with the held emotion when it is known.
struct Frame {
  Tensor image;
  std::optional<Emotion> truth;
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  /// nullopt once the source is exhausted.
  virtual std::optional<Frame> next() = 0;
};

/// Subject holding one seeded-random emotion per `hold` frames, rendered
/// with synth_image().
class SyntheticFrameSource : public FrameSource {
 public:
  SyntheticFrameSource(std::uint64_t seed, std::size_t total_frames,
                       std::size_t hold = kDefaultWindow);
  std::optional<Frame> next() override;

 private:
  std::uint64_t seed_;
  std::size_t total_;
  std::size_t hold_;
  std::size_t produced_ = 0;
  Emotion current_ = Emotion::Neutral;
};

/// Replays `*.pgm` frames in sorted path order. A frame's truth comes from
/// its parent directory name (0-6 or an emotion name) or, failing that, a
/// filename prefix before '_' ("happy_0001.pgm").
class DirectoryFrameSource : public FrameSource {
 public:
  explicit DirectoryFrameSource(const std::string& root);
  std::optional<Frame> next() override;
  std::size_t size() const { return files_.size(); }

 private:
  std::vector<std::pair<std::string, std::optional<Emotion>>> files_;
  std::size_t pos_ = 0;
};

class Clock {
 public:
  virtual ~Clock() = default;
  /// Seconds on a monotone timeline.
  virtual double now() = 0;
};

class SteadyClock : public Clock {
 public:
  double now() override;
};

/// Clock that only moves when advanced; used with stub classifiers.
class VirtualClock : public Clock {
 public:
  double now() override { return t_; }
  void advance(double seconds) { t_ += seconds; }

 private:
  double t_ = 0.0;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Emotion classify(const Frame& frame) = 0;
};

/// argmax of an infer-mode forward pass.
class ModelClassifier : public Classifier {
 public:
  explicit ModelClassifier(const ModelGraph& graph) : graph_(graph) {}
  Emotion classify(const Frame& frame) override;

 private:
  const ModelGraph& graph_;
};

/// Deterministic stand-in for a model: returns the frame's truth with
/// probability `accuracy` (otherwise a seeded random label) and advances
/// `clock` by a seeded latency drawn uniformly from [min, max] seconds.
class StubClassifier : public Classifier {
 public:
  StubClassifier(VirtualClock& clock, std::uint64_t seed,
                 double accuracy = 1.0, double min_latency = 0.05,
                 double max_latency = 0.5);
  Emotion classify(const Frame& frame) override;

 private:
  VirtualClock& clock_;
  std::uint64_t state_;
  double accuracy_;
  double min_latency_;
  double max_latency_;
};

/// Wall-clock seconds of one infer-mode forward pass on a (1, c, h, w)
/// frame, measured with a monotone clock.
double measure_latency(const ModelGraph& graph, const Tensor& frame);

/// Bounded FIFO whose producer never blocks: pushing into a full queue
/// discards the oldest element and counts it.
template <typename T>
class DropOldestQueue {
 public:
  explicit DropOldestQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T value) {
    {
      std::lock_guard lock(mu_);
      items_.push_back(std::move(value));
      if (items_.size() > capacity_) {
        items_.pop_front();
        ++dropped_;
        ++dropped_since_pop_;
      }
    }
    cv_.notify_one();
  }

  /// Blocks until an item is available or the queue is closed and drained.
  /// `dropped` receives the drops since the previous pop.
  std::optional<T> pop(std::size_t* dropped = nullptr) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (dropped) *dropped = dropped_since_pop_;
    dropped_since_pop_ = 0;
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  std::size_t dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  std::size_t dropped_ = 0;
  std::size_t dropped_since_pop_ = 0;
  bool closed_ = false;
};

struct PipelineConfig {
  std::size_t window = kDefaultWindow;
  double frame_period = 0.1;    // seconds between frames inside a window
  double window_period = 120.0; // seconds between window starts
  double threshold = kDefaultThresholdSeconds;
  /// Run a real producer thread that sleeps between frames. Otherwise
  /// arrivals follow the same schedule on a simulated timeline.
  bool paced = false;

  void validate() const;
};

struct WindowRecord {
  std::size_t index = 0;
  VoteResult vote;
  std::vector<double> latencies;  // seconds, microsecond resolution
  std::vector<double> timestamps; // frame arrival times, nondecreasing
  std::string response;
  bool threshold_violated = false;
  std::optional<Emotion> truth;   // majority of frame truths, when all known
  std::size_t dropped_before = 0; // frames dropped since the previous window

  double max_latency() const;
  /// Time to produce the vote: summed classify latency of the window.
  double response_time() const;
};

struct SessionLog {
  std::vector<WindowRecord> windows;
  std::size_t dropped_frames = 0;
  /// Frames of an incomplete final window that were discarded.
  std::size_t discarded_frames = 0;
  std::size_t dropped_after_last = 0;
};

/// Groups consecutive classified frames into windows of `cfg.window`, votes
/// on each and selects a response. Frames that arrive while more than one
/// full window is already waiting displace the oldest waiting frame.
SessionLog run_pipeline(FrameSource& source, Classifier& classifier,
                        Clock& clock, const PipelineConfig& cfg);

/// One JSON object per line: window records in order, preceded by a
/// `frames_dropped` event when frames were dropped before that window, and
/// a final `partial_window_discarded` event when applicable.
void write_session_log(std::ostream& out, const SessionLog& log);
SessionLog read_session_log(std::istream& in);

struct PredictionRateRow {
  Emotion emotion = Emotion::Neutral;
  std::size_t attempts = 0;
  std::size_t successes = 0;  // correct vote within the threshold
  double mean_response_time = 0.0;

  double rate() const {
    return attempts == 0 ? 0.0
                         : static_cast<double>(successes) /
                               static_cast<double>(attempts);
  }
};

/// Per held emotion: response time and prediction rate over the windows
/// whose truth is known.
std::array<PredictionRateRow, kNumEmotions> prediction_rates(
    const SessionLog& log);

struct NamedSession {
  std::string name;
  const SessionLog* log = nullptr;
};

/// Seven rows, one column group {response time, successes/attempts} per
/// session.
void print_prediction_table(std::ostream& out,
                            std::span<const NamedSession> sessions);

}  // namespace emo
