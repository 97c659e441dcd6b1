#include "bpg/bpg.h"

#include <cstdlib>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <new>
#include <optional>
#include <string>

#include "config.hpp"
#include "errors.hpp"
#include "gradcheck.hpp"
#include "learning.hpp"
#include "model.hpp"
#include "sensorio.hpp"

struct bpg_config {
  bpg::RunConfig config = bpg::RunConfig::defaults();
};

struct bpg_model {
  bpg::BpgModel model;
  bpg::learning::AdamState adam;
  std::int64_t step = 0;
};

struct bpg_stream {
  const bpg_model* model = nullptr;
  double fps = bpg::kDefaultFps;
  std::deque<bpg::SensorFrame> frames;
  std::size_t accepted = 0;
  std::string output;
};

namespace {

thread_local std::string tl_error;

bpg_status fail(bpg_status status, const std::string& what) {
  tl_error = what;
  return status;
}

// Maps the exception in flight to a status code.
bpg_status translate() {
  try {
    throw;
  } catch (const bpg::ConfigError& e) {
    return fail(BPG_ERR_CONFIG, e.what());
  } catch (const bpg::ParseError& e) {
    return fail(BPG_ERR_PARSE, e.what());
  } catch (const bpg::VersionError& e) {
    return fail(BPG_ERR_VERSION, e.what());
  } catch (const bpg::IoError& e) {
    return fail(BPG_ERR_IO, e.what());
  } catch (const bpg::learning::NonFiniteLoss& e) {
    return fail(BPG_ERR_NUMERIC, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(BPG_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(BPG_ERR_INTERNAL, "out of memory");
  } catch (const std::logic_error& e) {
    return fail(BPG_ERR_INTERNAL, e.what());
  } catch (const std::exception& e) {
    return fail(BPG_ERR_DATA, e.what());
  } catch (...) {
    return fail(BPG_ERR_INTERNAL, "unknown error");
  }
}

template <typename Fn>
bpg_status guarded(Fn&& fn) {
  try {
    fn();
    return BPG_OK;
  } catch (...) {
    return translate();
  }
}

#define BPG_REQUIRE(ptr)                                                   \
  do {                                                                     \
    if (!(ptr)) return fail(BPG_ERR_INVALID_ARGUMENT, "null pointer: " #ptr); \
  } while (0)

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string pose_line(std::size_t frame, const bpg::PoseEstimate& pose) {
  std::string line = std::to_string(frame);
  for (int k = 0; k < 3; ++k) line += ' ' + bpg::format_double(pose.root_translation[k]);
  for (const auto& r : pose.local_rot) {
    for (int k = 0; k < 3; ++k) line += ' ' + bpg::format_double(r[k]);
  }
  return line;
}

bpg::learning::Dataset load_dataset(const bpg::BpgModel& model, const std::string& dir) {
  const auto files = bpg::list_motion_files(dir);
  if (files.empty()) throw std::runtime_error("no .mot files in " + dir);
  std::vector<bpg::MotionSequence> seqs;
  for (const auto& f : files) {
    seqs.push_back(bpg::load_motion(f));
    if (seqs.back().fps != model.config().fps) {
      throw std::runtime_error(f + ": fps " + bpg::format_double(seqs.back().fps) +
                               " differs from the configured fps " +
                               bpg::format_double(model.config().fps));
    }
  }
  return bpg::learning::build_dataset(seqs, model.skeleton(), model.config().k_window);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw bpg::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw bpg::IoError("write failed: " + path.string());
}

void save_model(const bpg_model& m, const std::string& path) {
  bpg::write_checkpoint(m.model.to_checkpoint(m.step, m.adam.to_tensors(m.model.params())), path);
}

}  // namespace

extern "C" {

const char* bpg_version(void) { return "1.0.0"; }

const char* bpg_last_error(void) { return tl_error.c_str(); }

const char* bpg_status_name(bpg_status status) {
  switch (status) {
    case BPG_OK: return "ok";
    case BPG_ERR_INVALID_ARGUMENT: return "invalid argument";
    case BPG_ERR_CONFIG: return "config error";
    case BPG_ERR_IO: return "i/o error";
    case BPG_ERR_PARSE: return "parse error";
    case BPG_ERR_VERSION: return "version mismatch";
    case BPG_ERR_DATA: return "data error";
    case BPG_ERR_NUMERIC: return "numeric error";
    case BPG_ERR_GRADCHECK: return "gradient check failed";
    case BPG_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void bpg_string_free(char* s) { std::free(s); }

bpg_status bpg_config_create(bpg_config** out) {
  BPG_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new bpg_config(); });
}

void bpg_config_free(bpg_config* cfg) { delete cfg; }

bpg_status bpg_config_merge_file(bpg_config* cfg, const char* path) {
  BPG_REQUIRE(cfg);
  BPG_REQUIRE(path);
  return guarded([&] { cfg->config.merge_file(path); });
}

bpg_status bpg_config_set(bpg_config* cfg, const char* key, const char* value) {
  BPG_REQUIRE(cfg);
  BPG_REQUIRE(key);
  BPG_REQUIRE(value);
  return guarded([&] { cfg->config.set(key, value, bpg::RunConfig::Source::kFlag); });
}

bpg_status bpg_config_validate(const bpg_config* cfg) {
  BPG_REQUIRE(cfg);
  return guarded([&] {
    cfg->config.model();
    cfg->config.train();
  });
}

bpg_status bpg_config_echo(const bpg_config* cfg, int with_source, char** out) {
  BPG_REQUIRE(cfg);
  BPG_REQUIRE(out);
  return guarded([&] { *out = copy_string(cfg->config.echo(with_source != 0)); });
}

bpg_status bpg_synth(const char* kind, int frames, double fps, uint64_t seed, const char* out_path) {
  BPG_REQUIRE(kind);
  BPG_REQUIRE(out_path);
  return guarded([&] {
    const auto k = bpg::parse_motion_kind(kind);
    bpg::save_motion(bpg::synth_generate(k, frames, fps, seed), out_path);
  });
}

bpg_status bpg_motion_sensor_lines(const bpg_model* model, const char* motion_path, bpg_line_fn fn,
                                   void* user) {
  BPG_REQUIRE(motion_path);
  BPG_REQUIRE(fn);
  return guarded([&] {
    const auto seq = bpg::load_motion(motion_path);
    const auto skel = model ? model->model.skeleton() : bpg::default_skeleton();
    for (const auto& f : bpg::extract_sensors(seq, skel)) {
      fn(bpg::format_sensor_line(f).c_str(), user);
    }
  });
}

bpg_status bpg_model_create(const bpg_config* cfg, bpg_model** out) {
  BPG_REQUIRE(cfg);
  BPG_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    cfg->config.train();
    auto m = std::make_unique<bpg_model>();
    m->model = bpg::BpgModel::create(cfg->config);
    m->adam = bpg::learning::AdamState::zeros(m->model.params());
    *out = m.release();
  });
}

bpg_status bpg_model_load(const char* path, bpg_model** out) {
  BPG_REQUIRE(path);
  BPG_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    const auto ck = bpg::read_checkpoint(path);
    auto m = std::make_unique<bpg_model>();
    m->model = bpg::BpgModel::from_checkpoint(ck);
    m->adam = bpg::learning::AdamState::from_checkpoint(ck, m->model.params());
    m->step = ck.step;
    *out = m.release();
  });
}

bpg_status bpg_model_save(const bpg_model* model, const char* path) {
  BPG_REQUIRE(model);
  BPG_REQUIRE(path);
  return guarded([&] { save_model(*model, path); });
}

void bpg_model_free(bpg_model* model) { delete model; }

int64_t bpg_model_step(const bpg_model* model) { return model ? model->step : -1; }

int bpg_model_window(const bpg_model* model) { return model ? model->model.config().k_window : -1; }

bpg_status bpg_model_set(bpg_model* model, const char* key, const char* value) {
  BPG_REQUIRE(model);
  BPG_REQUIRE(key);
  BPG_REQUIRE(value);
  return guarded([&] { model->model.set_train_key(key, value, bpg::RunConfig::Source::kFlag); });
}

bpg_status bpg_model_config_echo(const bpg_model* model, int with_source, char** out) {
  BPG_REQUIRE(model);
  BPG_REQUIRE(out);
  return guarded([&] { *out = copy_string(model->model.run_config().echo(with_source != 0)); });
}

bpg_status bpg_train(bpg_model* model, const char* data_dir, const char* out_dir,
                     bpg_step_fn on_step, void* user) {
  BPG_REQUIRE(model);
  BPG_REQUIRE(data_dir);
  BPG_REQUIRE(out_dir);
  return guarded([&] {
    namespace fs = std::filesystem;
    const bpg::TrainConfig cfg = model->model.run_config().train();
    const auto data = load_dataset(model->model, data_dir);
    const fs::path out(out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw bpg::IoError("cannot create output directory " + out.string());

    write_text(out / "config_echo.txt", model->model.run_config().echo(true));

    const fs::path curve_path = out / "loss_curve.csv";
    const bool append = model->step > 0 && fs::exists(curve_path);
    std::ofstream curve(curve_path, append ? std::ios::binary | std::ios::app : std::ios::binary);
    if (!curve) throw bpg::IoError("cannot write " + curve_path.string());
    if (!append) curve << bpg::learning::loss_curve_csv_header();

    bpg::learning::TrainHooks hooks;
    hooks.on_step = [&](const bpg::learning::StepRecord& r) {
      curve << bpg::learning::loss_curve_csv_row(r);
      curve.flush();
      model->step = r.step + 1;
      if (on_step) {
        const bpg_loss l{r.step, r.loss.l_rot, r.loss.l_pos, r.loss.l_bone, r.loss.l_total};
        on_step(&l, user);
      }
    };
    hooks.on_checkpoint = [&](std::int64_t completed) {
      save_model(*model, (out / ("ckpt_" + std::to_string(completed) + ".bpg")).string());
    };
    bpg::learning::train(model->model, data, cfg, model->adam, model->step, hooks);
    if (!curve) throw bpg::IoError("write failed: " + curve_path.string());

    save_model(*model, (out / "model.bpg").string());
    const auto report = bpg::learning::evaluate_model(model->model, data);
    bpg::learning::write_metrics_json(report, (out / "train_metrics.json").string());
  });
}

bpg_status bpg_evaluate(const bpg_model* model, const char* data_dir, bpg_metrics* out) {
  BPG_REQUIRE(model);
  BPG_REQUIRE(data_dir);
  BPG_REQUIRE(out);
  return guarded([&] {
    const auto data = load_dataset(model->model, data_dir);
    const auto r = bpg::learning::evaluate_model(model->model, data);
    out->mpjre_deg = r.mpjre_deg;
    out->mpjpe_cm = r.mpjpe_cm;
    out->mpjve_cm_s = r.mpjve_cm_s;
    for (int j = 0; j < BPG_NUM_JOINTS; ++j) out->per_joint_mpjpe_cm[j] = r.per_joint_mpjpe_cm[j];
    out->frames = r.frames;
  });
}

bpg_status bpg_metrics_write_json(const bpg_metrics* metrics, const char* path) {
  BPG_REQUIRE(metrics);
  BPG_REQUIRE(path);
  return guarded([&] {
    bpg::learning::MetricReport r;
    r.mpjre_deg = metrics->mpjre_deg;
    r.mpjpe_cm = metrics->mpjpe_cm;
    r.mpjve_cm_s = metrics->mpjve_cm_s;
    for (int j = 0; j < BPG_NUM_JOINTS; ++j) r.per_joint_mpjpe_cm[j] = metrics->per_joint_mpjpe_cm[j];
    r.frames = metrics->frames;
    bpg::learning::write_metrics_json(r, path);
  });
}

bpg_status bpg_infer_motion(const bpg_model* model, const char* motion_path, bpg_line_fn fn,
                            void* user) {
  BPG_REQUIRE(model);
  BPG_REQUIRE(motion_path);
  BPG_REQUIRE(fn);
  return guarded([&] {
    const auto seq = bpg::load_motion(motion_path);
    const auto sensors = bpg::extract_sensors(seq, model->model.skeleton());
    for (const auto& w : bpg::make_windows(sensors, model->model.config().k_window, seq.fps)) {
      fn(pose_line(w.target, model->model.predict(w)).c_str(), user);
    }
  });
}

bpg_status bpg_stream_create(const bpg_model* model, double fps, bpg_stream** out) {
  BPG_REQUIRE(model);
  BPG_REQUIRE(out);
  *out = nullptr;
  if (!(fps > 0.0)) return fail(BPG_ERR_INVALID_ARGUMENT, "fps must be positive");
  return guarded([&] {
    auto s = std::make_unique<bpg_stream>();
    s->model = model;
    s->fps = fps;
    *out = s.release();
  });
}

void bpg_stream_free(bpg_stream* stream) { delete stream; }

namespace {

void stream_accept(bpg_stream* stream, const bpg::SensorFrame& frame, int* has_output) {
  const int k = stream->model->model.config().k_window;
  stream->frames.push_back(frame);
  if (static_cast<int>(stream->frames.size()) > k) stream->frames.pop_front();
  const std::size_t index = stream->accepted++;
  *has_output = 0;
  if (static_cast<int>(stream->frames.size()) < k) return;
  bpg::SensorWindow w;
  w.frames.assign(stream->frames.begin(), stream->frames.end());
  w.fps = stream->fps;
  w.target = index;
  stream->output = pose_line(index, stream->model->model.predict(w));
  *has_output = 1;
}

}  // namespace

bpg_status bpg_stream_push_line(bpg_stream* stream, const char* line, int* has_output) {
  BPG_REQUIRE(stream);
  BPG_REQUIRE(line);
  BPG_REQUIRE(has_output);
  *has_output = 0;
  bpg::SensorFrame frame;
  const bpg_status parsed = guarded([&] { frame = bpg::parse_sensor_line(line); });
  if (parsed != BPG_OK) return parsed;
  return guarded([&] { stream_accept(stream, frame, has_output); });
}

bpg_status bpg_stream_push(bpg_stream* stream, const double values[BPG_SENSOR_LINE_VALUES],
                           int* has_output) {
  BPG_REQUIRE(stream);
  BPG_REQUIRE(values);
  BPG_REQUIRE(has_output);
  *has_output = 0;
  std::string line;
  for (int i = 0; i < BPG_SENSOR_LINE_VALUES; ++i) {
    if (i) line += ' ';
    line += bpg::format_double(values[i]);
  }
  return bpg_stream_push_line(stream, line.c_str(), has_output);
}

const char* bpg_stream_output(const bpg_stream* stream) {
  return stream ? stream->output.c_str() : "";
}

bpg_status bpg_gradcheck(const char* block, double tol, bpg_line_fn fn, void* user) {
  BPG_REQUIRE(block);
  const std::string name(block);
  if (name != "all" && !bpg::gradcheck::is_block(name)) {
    return fail(BPG_ERR_INVALID_ARGUMENT, "unknown gradcheck block '" + name + "'");
  }
  if (!(tol > 0.0)) return fail(BPG_ERR_INVALID_ARGUMENT, "tolerance must be positive");
  bool pass = true;
  std::string failed;
  const bpg_status st = guarded([&] {
    bpg::gradcheck::Options opt;
    opt.tol = tol;
    const std::vector<std::string> names =
        name == "all" ? bpg::gradcheck::block_names() : std::vector<std::string>{name};
    for (const auto& b : names) {
      const auto report = bpg::gradcheck::check_block(b, opt);
      if (fn) {
        std::string text = report.to_text();
        std::size_t start = 0;
        while (start < text.size()) {
          const std::size_t end = text.find('\n', start);
          fn(text.substr(start, end - start).c_str(), user);
          start = end + 1;
        }
      }
      if (!report.pass) {
        pass = false;
        failed += (failed.empty() ? "" : ", ") + b + " (" + report.worst + ")";
      }
    }
  });
  if (st != BPG_OK) return st;
  if (!pass) return fail(BPG_ERR_GRADCHECK, "failing blocks: " + failed);
  return BPG_OK;
}

}  // extern "C"
