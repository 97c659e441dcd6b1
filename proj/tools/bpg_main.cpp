// Command-line front end. Exit codes: 0 success, 1 runtime or data failure,
// 2 usage error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpg/bpg.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int report(bpg_status st, const std::string& context) {
  if (st == BPG_OK) return kExitOk;
  std::cerr << "bpg " << context << ": " << bpg_status_name(st) << ": " << bpg_last_error() << '\n';
  return st == BPG_ERR_CONFIG || st == BPG_ERR_INVALID_ARGUMENT ? kExitUsage : kExitRuntime;
}

struct ModelDeleter {
  void operator()(bpg_model* m) const { bpg_model_free(m); }
};
struct ConfigDeleter {
  void operator()(bpg_config* c) const { bpg_config_free(c); }
};
struct StreamDeleter {
  void operator()(bpg_stream* s) const { bpg_stream_free(s); }
};
using ModelPtr = std::unique_ptr<bpg_model, ModelDeleter>;
using ConfigPtr = std::unique_ptr<bpg_config, ConfigDeleter>;
using StreamPtr = std::unique_ptr<bpg_stream, StreamDeleter>;

// Output to a file, or stdout for "-".
class LineSink {
 public:
  explicit LineSink(const std::string& path) {
    if (path != "-") {
      file_.open(path, std::ios::binary);
      ok_ = static_cast<bool>(file_);
    }
  }
  bool ok() const { return ok_; }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
  static void write(const char* line, void* self) {
    static_cast<LineSink*>(self)->stream() << line << '\n';
  }

 private:
  std::ofstream file_;
  bool ok_ = true;
};

bool split_assignment(const std::string& s, std::string& key, std::string& value) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) return false;
  key = s.substr(0, eq);
  value = s.substr(eq + 1);
  return true;
}

ModelPtr load_model(const std::string& path, int& exit_code) {
  bpg_model* m = nullptr;
  exit_code = report(bpg_model_load(path.c_str(), &m), "load " + path);
  return ModelPtr(m);
}

// ---------------------------------------------------------------- commands

struct SynthArgs {
  std::string kind;
  int frames = 0;
  double fps = 60.0;
  std::uint64_t seed = 7;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  return report(bpg_synth(a.kind.c_str(), a.frames, a.fps, a.seed, a.out.c_str()), "synth");
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string resume;
  std::vector<std::string> overrides;
  int log_every = 100;
};

int run_train(const TrainArgs& a) {
  ModelPtr model;
  if (!a.resume.empty()) {
    int code = 0;
    model = load_model(a.resume, code);
    if (code != kExitOk) return code;
    for (const auto& s : a.overrides) {
      std::string k, v;
      if (!split_assignment(s, k, v)) {
        std::cerr << "bpg train: --set expects key=value, got '" << s << "'\n";
        return kExitUsage;
      }
      if (int c = report(bpg_model_set(model.get(), k.c_str(), v.c_str()), "train"); c) return c;
    }
  } else {
    if (a.config.empty()) {
      std::cerr << "bpg train: --config is required unless --resume is given\n";
      return kExitUsage;
    }
    bpg_config* raw = nullptr;
    if (int c = report(bpg_config_create(&raw), "train"); c) return c;
    ConfigPtr cfg(raw);
    if (int c = report(bpg_config_merge_file(cfg.get(), a.config.c_str()), "train"); c) return c;
    for (const auto& s : a.overrides) {
      std::string k, v;
      if (!split_assignment(s, k, v)) {
        std::cerr << "bpg train: --set expects key=value, got '" << s << "'\n";
        return kExitUsage;
      }
      if (int c = report(bpg_config_set(cfg.get(), k.c_str(), v.c_str()), "train"); c) return c;
    }
    if (int c = report(bpg_config_validate(cfg.get()), "train"); c) return c;
    bpg_model* m = nullptr;
    if (int c = report(bpg_model_create(cfg.get(), &m), "train"); c) return c;
    model.reset(m);
  }

  char* echo = nullptr;
  if (bpg_model_config_echo(model.get(), 1, &echo) == BPG_OK) {
    std::cout << echo;
    bpg_string_free(echo);
  }

  struct Progress {
    int every;
  } progress{a.log_every};
  auto on_step = [](const bpg_loss* l, void* user) {
    const int every = static_cast<Progress*>(user)->every;
    if (every > 0 && (l->step % every == 0)) {
      std::printf("step %lld l_rot %.6g l_pos %.6g l_bone %.6g l_total %.6g\n",
                  static_cast<long long>(l->step), l->l_rot, l->l_pos, l->l_bone, l->l_total);
      std::fflush(stdout);
    }
  };
  if (int c = report(bpg_train(model.get(), a.data.c_str(), a.out.c_str(), on_step, &progress),
                     "train");
      c) {
    return c;
  }
  std::printf("trained to step %lld, outputs in %s\n",
              static_cast<long long>(bpg_model_step(model.get())), a.out.c_str());
  return kExitOk;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string out = "metrics.json";
};

int run_eval(const EvalArgs& a) {
  int code = 0;
  ModelPtr model = load_model(a.model, code);
  if (code != kExitOk) return code;
  bpg_metrics m{};
  if (int c = report(bpg_evaluate(model.get(), a.data.c_str(), &m), "eval"); c) return c;
  if (int c = report(bpg_metrics_write_json(&m, a.out.c_str()), "eval"); c) return c;
  std::printf("frames %llu\nmpjre_deg %.6f\nmpjpe_cm %.6f\nmpjve_cm_s %.6f\n",
              static_cast<unsigned long long>(m.frames), m.mpjre_deg, m.mpjpe_cm, m.mpjve_cm_s);
  return kExitOk;
}

struct InferArgs {
  std::string model;
  std::string motion;
  std::string stream;
  std::string out = "-";
  double fps = 60.0;
};

int run_infer(const InferArgs& a) {
  int code = 0;
  ModelPtr model = load_model(a.model, code);
  if (code != kExitOk) return code;
  LineSink sink(a.out);
  if (!sink.ok()) {
    std::cerr << "bpg infer: cannot write " << a.out << '\n';
    return kExitRuntime;
  }
  if (!a.motion.empty()) {
    return report(bpg_infer_motion(model.get(), a.motion.c_str(), &LineSink::write, &sink),
                  "infer");
  }

  std::ifstream file;
  if (a.stream != "-") {
    file.open(a.stream, std::ios::binary);
    if (!file) {
      std::cerr << "bpg infer: cannot open " << a.stream << '\n';
      return kExitRuntime;
    }
  }
  std::istream& in = file.is_open() ? static_cast<std::istream&>(file) : std::cin;
  bpg_stream* raw = nullptr;
  if (int c = report(bpg_stream_create(model.get(), a.fps, &raw), "infer"); c) return c;
  StreamPtr stream(raw);
  std::string line;
  long long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    int ready = 0;
    const bpg_status st = bpg_stream_push_line(stream.get(), line.c_str(), &ready);
    if (st == BPG_ERR_PARSE) {
      std::cerr << "bpg infer: warning: skipping line " << lineno << ": " << bpg_last_error()
                << '\n';
      continue;
    }
    if (st != BPG_OK) return report(st, "infer");
    if (ready) {
      sink.stream() << bpg_stream_output(stream.get()) << '\n';
      sink.stream().flush();
    }
  }
  return kExitOk;
}

struct SensorArgs {
  std::string motion;
  std::string model;
  std::string out = "-";
};

int run_sensors(const SensorArgs& a) {
  ModelPtr model;
  if (!a.model.empty()) {
    int code = 0;
    model = load_model(a.model, code);
    if (code != kExitOk) return code;
  }
  LineSink sink(a.out);
  if (!sink.ok()) {
    std::cerr << "bpg sensors: cannot write " << a.out << '\n';
    return kExitRuntime;
  }
  return report(bpg_motion_sensor_lines(model.get(), a.motion.c_str(), &LineSink::write, &sink),
                "sensors");
}

struct GradcheckArgs {
  std::string block;
  double tol = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a) {
  auto print = [](const char* line, void*) {
    std::printf("%s\n", line);
    std::fflush(stdout);
  };
  const bpg_status st = bpg_gradcheck(a.block.c_str(), a.tol, print, nullptr);
  if (st == BPG_OK) {
    std::printf("gradcheck %s: all blocks passed\n", a.block.c_str());
    return kExitOk;
  }
  return report(st, "gradcheck");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Full-body pose estimation from three tracked points with a body pose graph"};
  app.require_subcommand(1);
  app.set_version_flag("--version", bpg_version());

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic motion file");
  c_synth->add_option("--kind", synth.kind, "Motion kind")
      ->required()
      ->check(CLI::IsMember({"walk", "kick", "idle"}));
  c_synth->add_option("--frames", synth.frames, "Number of frames")
      ->required()
      ->check(CLI::Range(2, 10000000));
  c_synth->add_option("--fps", synth.fps, "Frame rate")->check(CLI::PositiveNumber);
  c_synth->add_option("--seed", synth.seed, "Random seed");
  c_synth->add_option("--out", synth.out, "Output motion file")->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a model on a directory of motion files");
  c_train->add_option("--data", train.data, "Directory of .mot files")->required();
  c_train->add_option("--config", train.config, "Config file (key = value)");
  c_train->add_option("--out", train.out, "Output directory")->required();
  c_train->add_option("--resume", train.resume, "Checkpoint to continue from");
  c_train->add_option("--set", train.overrides, "Config override key=value (repeatable)");
  c_train->add_option("--log-every", train.log_every, "Print the loss every N steps (0: never)")
      ->check(CLI::NonNegativeNumber);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a directory of motion files");
  c_eval->add_option("--model", eval.model, "Checkpoint")->required();
  c_eval->add_option("--data", eval.data, "Directory of .mot files")->required();
  c_eval->add_option("--out", eval.out, "Metrics JSON output");

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Estimate poses from sensor data");
  c_infer->add_option("--model", infer.model, "Checkpoint")->required();
  auto* o_motion = c_infer->add_option("--motion", infer.motion, "Motion file (batch mode)");
  auto* o_stream =
      c_infer->add_option("--stream", infer.stream, "Sensor line file, or - for stdin");
  o_motion->excludes(o_stream);
  c_infer->add_option("--out", infer.out, "Pose line output, - for stdout");
  c_infer->add_option("--fps", infer.fps, "Stream frame rate")->check(CLI::PositiveNumber);

  SensorArgs sensors;
  auto* c_sensors = app.add_subcommand("sensors", "Convert a motion file to sensor stream lines");
  c_sensors->add_option("--motion", sensors.motion, "Motion file")->required();
  c_sensors->add_option("--model", sensors.model, "Checkpoint whose skeleton to use");
  c_sensors->add_option("--out", sensors.out, "Output, - for stdout");

  GradcheckArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  c_grad->add_option("block", grad.block, "Block name or 'all'")->required();
  c_grad->add_option("--tol", grad.tol, "Relative error tolerance")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (c_synth->parsed()) return run_synth(synth);
  if (c_train->parsed()) return run_train(train);
  if (c_eval->parsed()) return run_eval(eval);
  if (c_infer->parsed()) {
    if (infer.motion.empty() && infer.stream.empty()) {
      std::cerr << "bpg infer: one of --motion or --stream is required\n";
      return kExitUsage;
    }
    return run_infer(infer);
  }
  if (c_sensors->parsed()) return run_sensors(sensors);
  if (c_grad->parsed()) return run_gradcheck(grad);
  return kExitUsage;
}
