#include "emo_cli/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "emo/complexity.hpp"
#include "emo/dataset.hpp"
#include "emo/error.hpp"
#include "emo/model.hpp"
#include "emo/realtime.hpp"
#include "emo/training.hpp"

namespace emo::cli {

namespace {

// A flag value that parsed but makes no sense.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_config(std::ostream& out, const CLI::App& sub) {
  std::istringstream cfg(sub.config_to_str(true, false));
  out << "# " << sub.get_name() << " configuration\n";
  for (std::string line; std::getline(cfg, line);) {
    if (!line.empty()) out << "#   " << line << '\n';
  }
}

std::ofstream open_out(const std::string& path, const char* flag) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(std::string(flag) + ": cannot write '" + path + "'");
  return f;
}

struct DataFlags {
  std::string data;
  std::size_t synthetic = 0;
  std::string split;
  std::size_t max_rows = 0;
};

void add_data_flags(CLI::App& sub, DataFlags& f, const char* default_split) {
  f.split = default_split;
  auto* data = sub.add_option("--data", f.data,
                              "FER-2013 CSV file or directory of label folders of 48x48 PGMs");
  auto* syn = sub.add_option("--synthetic", f.synthetic,
                             "use a synthetic set with this many images per class");
  data->excludes(syn);
  sub.add_option("--split", f.split, "Training, PublicTest or PrivateTest")
      ->check(CLI::IsMember({"Training", "PublicTest", "PrivateTest"}))
      ->capture_default_str();
  sub.add_option("--max-rows", f.max_rows, "keep at most this many rows per split (0 = all)")
      ->capture_default_str();
}

Dataset load_data(const DataFlags& f, std::uint64_t seed) {
  if (f.data.empty() && f.synthetic == 0) {
    throw UsageError("--data or --synthetic is required");
  }
  if (f.data.empty()) return synth_dataset(f.synthetic, seed);
  const Split split = parse_split(f.split);
  if (std::filesystem::is_directory(f.data)) {
    Dataset d = load_image_directory(f.data, split);
    if (f.max_rows > 0 && d.samples.size() > f.max_rows) d.samples.resize(f.max_rows);
    return d;
  }
  FerLoadOptions opts;
  opts.max_per_split = f.max_rows;
  FerData fer = load_fer_csv(f.data, opts);
  return std::move(fer.get(split));
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeFlags {
  std::string model = "proposed";
  std::string source = "paper";
  std::string mode = "paper";
  bool compare = false;
  bool literal = false;
  std::size_t input_size = kImageSide;
  std::string format = "table";
  std::string out;
};

void add_analyze(CLI::App& app, AnalyzeFlags& f) {
  auto* sub = app.add_subcommand("analyze", "parameter and multiply-accumulate accounting");
  sub->add_option("--model", f.model, "proposed or vanilla")
      ->check(CLI::IsMember({"proposed", "vanilla"}))->capture_default_str();
  sub->add_option("--source", f.source,
                  "paper: published term lists; graph: the executable models")
      ->check(CLI::IsMember({"paper", "graph"}))->capture_default_str();
  sub->add_option("--mode", f.mode,
                  "paper: every term as a standard convolution; separable: separable-aware")
      ->check(CLI::IsMember({"paper", "separable"}))->capture_default_str();
  sub->add_flag("--compare", f.compare, "report proposed against vanilla");
  sub->add_flag("--literal", f.literal,
                "compare the stated totals instead of the summed terms (implies --compare)");
  sub->add_option("--input-size", f.input_size, "square input side for --source graph")
      ->capture_default_str();
  sub->add_option("--format", f.format, "table, machine or both")
      ->check(CLI::IsMember({"table", "machine", "both"}))->capture_default_str();
  sub->add_option("--out", f.out, "also write the machine format to this file");
}

ComplexityReport report_for(const AnalyzeFlags& f, ModelId id) {
  if (f.source == "paper") return analyze_reference(id);
  const ModelGraph g = build_model(id, 0);
  return analyze_graph(g, {1, 1, f.input_size, f.input_size});
}

void emit_report(std::ostream& out, const AnalyzeFlags& f,
                 const ComplexityReport& r) {
  const ParamMode pm = f.mode == "separable" ? ParamMode::Separable : ParamMode::Standard;
  if (f.format != "machine") print_report(out, r, pm);
  if (f.format != "table") print_machine(out, r);
}

int run_analyze(const AnalyzeFlags& f, std::ostream& out) {
  if (f.input_size < 8) throw UsageError("--input-size must be at least 8");
  const bool compare_mode = f.compare || f.literal;
  if (f.literal && f.source != "paper") {
    throw UsageError("--literal needs --source paper (only published lists carry stated totals)");
  }
  std::vector<ComplexityReport> reports;
  if (compare_mode) {
    reports.push_back(report_for(f, ModelId::Proposed));
    reports.push_back(report_for(f, ModelId::Vanilla));
  } else {
    reports.push_back(report_for(f, parse_model_id(f.model)));
  }
  for (const auto& r : reports) {
    emit_report(out, f, r);
    out << '\n';
  }
  if (f.source == "graph" && !compare_mode) {
    const ModelGraph g = build_model(parse_model_id(f.model), 0);
    const Shape4 in{1, 1, f.input_size, f.input_size};
    const HeadSavings h = gap_head_savings(g, in);
    out << "model params: " << g.num_parameters() << '\n';
    out << "gap head params: " << h.gap_head_params << '\n';
    out << "dense head params: " << h.fc_head_params << " (" << h.fc_in_features
        << " features)\n";
    out << "head reduction: " << h.reduction << '\n';
    out << "dense-head variant params: " << fc_variant_params(g, in) << '\n';
  }
  if (compare_mode) {
    const RatioBasis basis = f.literal            ? RatioBasis::Literal
                             : f.mode == "separable" ? RatioBasis::SeparableAware
                                                     : RatioBasis::Theoretical;
    print_comparison(out, compare(reports[0], reports[1], basis));
  }
  if (!f.out.empty()) {
    auto file = open_out(f.out, "--out");
    for (const auto& r : reports) print_machine(file, r);
  }
  return kOk;
}

// ---- train -----------------------------------------------------------------

struct TrainFlags {
  std::string model = "proposed";
  DataFlags data;
  std::uint64_t seed = 1;
  int epochs = 50;
  std::size_t batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  std::string optimizer = "momentum";
  std::optional<double> stop_at;
  std::string weights;
  std::string out;
  std::string history;
};

void add_train(CLI::App& app, TrainFlags& f) {
  auto* sub = app.add_subcommand("train", "train a model and write its weights");
  sub->add_option("--model", f.model, "proposed or vanilla (ignored with --weights)")
      ->check(CLI::IsMember({"proposed", "vanilla"}))->capture_default_str();
  add_data_flags(*sub, f.data, "Training");
  sub->add_option("--seed", f.seed, "initialization, shuffling and synthetic data seed")
      ->capture_default_str();
  sub->add_option("--epochs", f.epochs)->capture_default_str();
  sub->add_option("--batch-size", f.batch_size)->capture_default_str();
  sub->add_option("--lr", f.lr, "learning rate, > 0")->capture_default_str();
  sub->add_option("--momentum", f.momentum, "in [0, 1)")->capture_default_str();
  sub->add_option("--optimizer", f.optimizer, "sgd or momentum")
      ->check(CLI::IsMember({"sgd", "momentum"}))->capture_default_str();
  sub->add_option("--stop-at", f.stop_at,
                  "stop once an epoch's training accuracy reaches this fraction");
  sub->add_option("--weights", f.weights, "start from these weights");
  sub->add_option("--out", f.out, "write trained weights here");
  sub->add_option("--history", f.history, "write epoch,loss,train_acc CSV here");
}

int run_train(const TrainFlags& f, std::ostream& out) {
  if (!(f.lr > 0.0) || !std::isfinite(f.lr)) throw UsageError("--lr must be a finite value > 0");
  if (f.epochs < 1) throw UsageError("--epochs must be >= 1");
  if (f.batch_size < 2) throw UsageError("--batch-size must be >= 2");
  if (!(f.momentum >= 0.0 && f.momentum < 1.0)) throw UsageError("--momentum must lie in [0, 1)");
  if (f.stop_at && !(*f.stop_at > 0.0 && *f.stop_at <= 1.0)) {
    throw UsageError("--stop-at must lie in (0, 1]");
  }

  TrainConfig cfg;
  cfg.seed = f.seed;
  cfg.epochs = f.epochs;
  cfg.batch_size = f.batch_size;
  cfg.learning_rate = f.lr;
  cfg.momentum = f.momentum;
  cfg.optimizer = parse_optimizer(f.optimizer);
  cfg.stop_at_accuracy = f.stop_at;

  const Dataset data = load_data(f.data, f.seed);
  if (data.samples.empty()) throw UsageError("--data: no samples in split " + f.data.split);
  ModelGraph graph = f.weights.empty() ? build_model(parse_model_id(f.model), f.seed)
                                       : load_weights(f.weights);
  out << "samples: " << data.samples.size() << ", parameters: " << graph.num_parameters()
      << '\n';
  const TrainHistory history = train(graph, data, cfg, [&](const EpochRecord& e) {
    out << "epoch " << e.epoch << " loss " << e.loss << " train_acc " << e.train_acc
        << std::endl;
  });
  if (!f.history.empty()) {
    auto file = open_out(f.history, "--history");
    history.write_csv(file);
  }
  if (!f.out.empty()) {
    save_weights(graph, f.out);
    out << "weights: " << f.out << '\n';
  }
  return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalFlags {
  std::string weights;
  DataFlags data;
  std::uint64_t seed = 2;
  std::string out;
};

void add_eval(CLI::App& app, EvalFlags& f) {
  auto* sub = app.add_subcommand("eval", "accuracy and confusion matrix of trained weights");
  sub->add_option("--weights", f.weights, "weights file")->required();
  add_data_flags(*sub, f.data, "PublicTest");
  sub->add_option("--seed", f.seed, "synthetic data seed")->capture_default_str();
  sub->add_option("--out", f.out, "also write the report here");
}

int run_eval(const EvalFlags& f, std::ostream& out) {
  const ModelGraph graph = load_weights(f.weights);
  const Dataset data = load_data(f.data, f.seed);
  if (data.samples.empty()) throw UsageError("--data: no samples in split " + f.data.split);
  const EvalResult r = evaluate(graph, data);
  print_eval(out, r);
  if (!f.out.empty()) {
    auto file = open_out(f.out, "--out");
    print_eval(file, r);
  }
  return kOk;
}

// ---- simulate --------------------------------------------------------------

struct SimulateFlags {
  std::string weights;
  std::string baseline_weights;
  bool stub = false;
  double stub_accuracy = 0.9;
  double stub_min_latency = 0.05;
  double stub_max_latency = 0.5;
  std::string frames_dir;
  std::size_t synthetic = 0;
  std::size_t window = kDefaultWindow;
  double frame_period = 0.1;
  double window_period = 120.0;
  double threshold = kDefaultThresholdSeconds;
  std::uint64_t seed = 42;
  bool paced = false;
  std::string log_out;
};

void add_simulate(CLI::App& app, SimulateFlags& f) {
  auto* sub = app.add_subcommand("simulate", "windowed majority-vote session over a frame stream");
  auto* w = sub->add_option("--weights", f.weights, "classify with this model");
  auto* stub = sub->add_flag("--stub", f.stub,
                             "classify with a seeded stub on a virtual clock instead of a model");
  w->excludes(stub);
  sub->add_option("--baseline-weights", f.baseline_weights,
                  "second model run on the same frames for a side-by-side table")
      ->needs(w);
  sub->add_option("--stub-accuracy", f.stub_accuracy)->capture_default_str();
  sub->add_option("--stub-min-latency", f.stub_min_latency, "seconds")->capture_default_str();
  sub->add_option("--stub-max-latency", f.stub_max_latency, "seconds")->capture_default_str();
  auto* dir = sub->add_option("--frames-dir", f.frames_dir, "replay *.pgm frames from here");
  auto* syn = sub->add_option("--synthetic", f.synthetic, "number of synthetic frames");
  dir->excludes(syn);
  sub->add_option("--window", f.window, "frames per vote")->capture_default_str();
  sub->add_option("--frame-period", f.frame_period, "seconds between frames")
      ->capture_default_str();
  sub->add_option("--window-period", f.window_period, "seconds between window starts")
      ->capture_default_str();
  sub->add_option("--threshold", f.threshold, "per-frame latency budget in seconds")
      ->capture_default_str();
  sub->add_option("--seed", f.seed, "frame and stub seed")->capture_default_str();
  sub->add_flag("--paced", f.paced, "sleep between frames on a real producer thread");
  sub->add_option("--log-out", f.log_out, "write the session log (JSON lines) here");
}

std::unique_ptr<FrameSource> make_source(const SimulateFlags& f) {
  if (!f.frames_dir.empty()) return std::make_unique<DirectoryFrameSource>(f.frames_dir);
  return std::make_unique<SyntheticFrameSource>(f.seed, f.synthetic, f.window);
}

int run_simulate(const SimulateFlags& f, std::ostream& out) {
  if (f.weights.empty() && !f.stub) throw UsageError("--weights or --stub is required");
  if (f.frames_dir.empty() && f.synthetic == 0) {
    throw UsageError("--frames-dir or --synthetic is required");
  }
  if (f.window == 0) throw UsageError("--window must be >= 1");
  if (!(f.frame_period >= 0.0)) throw UsageError("--frame-period must be >= 0");
  if (!(f.window_period >= 0.0)) throw UsageError("--window-period must be >= 0");
  if (!(f.threshold > 0.0)) throw UsageError("--threshold must be > 0");
  if (!(f.stub_accuracy >= 0.0 && f.stub_accuracy <= 1.0)) {
    throw UsageError("--stub-accuracy must lie in [0, 1]");
  }
  if (!(f.stub_min_latency >= 0.0 && f.stub_max_latency >= f.stub_min_latency)) {
    throw UsageError("--stub-min-latency/--stub-max-latency must satisfy 0 <= min <= max");
  }

  PipelineConfig cfg;
  cfg.window = f.window;
  cfg.frame_period = f.frame_period;
  cfg.window_period = f.window_period;
  cfg.threshold = f.threshold;
  cfg.paced = f.paced;

  std::vector<std::pair<std::string, SessionLog>> sessions;
  if (f.stub) {
    VirtualClock clock;
    StubClassifier stub(clock, f.seed + 1, f.stub_accuracy, f.stub_min_latency,
                        f.stub_max_latency);
    auto source = make_source(f);
    sessions.emplace_back("stub", run_pipeline(*source, stub, clock, cfg));
  } else {
    std::vector<std::string> paths{f.weights};
    if (!f.baseline_weights.empty()) paths.push_back(f.baseline_weights);
    for (const auto& p : paths) {
      const ModelGraph graph = load_weights(p);
      ModelClassifier classifier(graph);
      SteadyClock clock;
      auto source = make_source(f);
      sessions.emplace_back(graph.name(), run_pipeline(*source, classifier, clock, cfg));
    }
  }

  const SessionLog& main_log = sessions.front().second;
  out << "windows: " << main_log.windows.size() << ", dropped frames: "
      << main_log.dropped_frames << ", discarded frames: " << main_log.discarded_frames
      << '\n';
  for (const auto& w : main_log.windows) {
    out << "window " << w.index << ": " << name(w.vote.winner)
        << (w.vote.dominant ? "" : " (no dominant emotion)")
        << (w.threshold_violated ? " [over threshold]" : "") << " -> " << w.response
        << '\n';
  }
  std::vector<NamedSession> named;
  for (const auto& [n, log] : sessions) named.push_back({n, &log});
  print_prediction_table(out, named);
  if (!f.log_out.empty()) {
    auto file = open_out(f.log_out, "--log-out");
    write_session_log(file, main_log);
  }
  return kOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"Compact emotion-recognition CNNs: accounting, training, evaluation and "
               "a windowed real-time harness",
               "emocnn"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  AnalyzeFlags analyze_flags;
  TrainFlags train_flags;
  EvalFlags eval_flags;
  SimulateFlags simulate_flags;
  add_analyze(app, analyze_flags);
  add_train(app, train_flags);
  add_eval(app, eval_flags);
  add_simulate(app, simulate_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    print_config(out, *sub);
    const std::string cmd = sub->get_name();
    if (cmd == "analyze") return run_analyze(analyze_flags, out);
    if (cmd == "train") return run_train(train_flags, out);
    if (cmd == "eval") return run_eval(eval_flags, out);
    return run_simulate(simulate_flags, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace emo::cli
