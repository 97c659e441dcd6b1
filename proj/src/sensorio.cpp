#include "sensorio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "errors.hpp"

namespace bpg {

using rotmath::Vec3;

namespace {

constexpr int kMotionColumns = 3 + 3 * kNumJoints;

// Splits on spaces/tabs and parses every token as a finite double.
bool parse_doubles(std::string_view line, std::vector<double>& out, std::string& err) {
  out.clear();
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    const std::string_view tok = line.substr(i, j - i);
    double v = 0.0;
    const char* first = tok.data();
    if (!tok.empty() && tok.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      err = "cannot parse number '" + std::string(tok) + "'";
      return false;
    }
    if (!std::isfinite(v)) {
      err = "non-finite value '" + std::string(tok) + "'";
      return false;
    }
    out.push_back(v);
    i = j;
  }
  return true;
}

}  // namespace

ParseError::ParseError(const std::string& source, int line, const std::string& what)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + what
                                  : source + ": " + what),
      line_(line) {}

std::string format_double(double v) {
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

MotionSequence parse_motion(std::istream& in, const std::string& source) {
  MotionSequence seq;
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++lineno;
  {
    std::istringstream hs(line);
    std::string kw_fps, fps_tok, kw_joints;
    int joints = 0;
    std::string extra;
    if (!(hs >> kw_fps >> fps_tok >> kw_joints >> joints) || kw_fps != "fps" ||
        kw_joints != "joints" || (hs >> extra)) {
      throw ParseError(source, lineno, "header must be 'fps <float> joints 22'");
    }
    std::vector<double> v;
    std::string err;
    if (!parse_doubles(fps_tok, v, err) || v.size() != 1 || v[0] <= 0.0) {
      throw ParseError(source, lineno, "fps must be a positive number");
    }
    if (joints != kNumJoints) throw ParseError(source, lineno, "joint count must be 22");
    seq.fps = v[0];
  }
  std::vector<double> vals;
  std::string err;
  while (std::getline(in, line)) {
    ++lineno;
    if (!parse_doubles(line, vals, err)) throw ParseError(source, lineno, err);
    if (vals.empty()) throw ParseError(source, lineno, "empty frame line");
    if (vals.size() != kMotionColumns) {
      throw ParseError(source, lineno,
                       "expected " + std::to_string(kMotionColumns) + " columns, got " +
                           std::to_string(vals.size()));
    }
    MotionFrame f;
    f.root_translation = Vec3(vals[0], vals[1], vals[2]);
    for (int j = 0; j < kNumJoints; ++j) {
      f.local_rot[j] = Vec3(vals[3 + 3 * j], vals[4 + 3 * j], vals[5 + 3 * j]);
    }
    seq.frames.push_back(f);
  }
  if (seq.frames.size() < 2) {
    throw ParseError(source, lineno, "a motion needs at least 2 frames");
  }
  return seq;
}

MotionSequence load_motion(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open motion file: " + path);
  return parse_motion(in, path);
}

void write_motion(const MotionSequence& seq, std::ostream& out) {
  out << "fps " << format_double(seq.fps) << " joints " << kNumJoints << '\n';
  for (const auto& f : seq.frames) {
    std::string line;
    for (int k = 0; k < 3; ++k) {
      if (k) line += ' ';
      line += format_double(f.root_translation[k]);
    }
    for (const auto& r : f.local_rot) {
      for (int k = 0; k < 3; ++k) {
        line += ' ';
        line += format_double(r[k]);
      }
    }
    out << line << '\n';
  }
}

void save_motion(const MotionSequence& seq, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write motion file: " + path);
  write_motion(seq, out);
  if (!out) throw IoError("write failed: " + path);
}

std::vector<std::string> list_motion_files(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && e.path().extension() == ".mot") out.push_back(e.path().string());
  }
  if (ec) throw IoError("cannot list directory: " + dir);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<SensorFrame> extract_sensors(const MotionSequence& seq, const SkeletonModel& skel) {
  std::vector<SensorFrame> out;
  out.reserve(seq.frames.size());
  for (const auto& f : seq.frames) {
    const auto fk = forward_kinematics(f.local_rot, f.root_translation, skel);
    SensorFrame s;
    for (int k = 0; k < kNumSensors; ++k) {
      s.position[k] = fk.positions[kSensorJoints[k]];
      s.rotation[k] = fk.global_rot[kSensorJoints[k]];
    }
    out.push_back(s);
  }
  return out;
}

std::vector<SensorWindow> make_windows(const std::vector<SensorFrame>& sensors, int K,
                                       double fps) {
  std::vector<SensorWindow> out;
  if (K <= 0 || sensors.size() < static_cast<std::size_t>(K)) return out;
  out.reserve(sensors.size() - K + 1);
  for (std::size_t n = K - 1; n < sensors.size(); ++n) {
    SensorWindow w;
    w.fps = fps;
    w.target = n;
    w.frames.assign(sensors.begin() + (n + 1 - K), sensors.begin() + n + 1);
    out.push_back(std::move(w));
  }
  return out;
}

Vec3 finite_diff_velocity(const Vec3& p_prev, const Vec3& p_cur, double fps) {
  return (p_cur - p_prev) * fps;
}

MotionKind parse_motion_kind(std::string_view name) {
  if (name == "walk") return MotionKind::kWalk;
  if (name == "kick") return MotionKind::kKick;
  if (name == "idle") return MotionKind::kIdle;
  throw std::invalid_argument("unknown motion kind '" + std::string(name) +
                              "' (expected walk, kick or idle)");
}

MotionSequence synth_generate(MotionKind kind, int n_frames, double fps, std::uint64_t seed) {
  if (n_frames < 2) throw std::invalid_argument("synth_generate: n_frames must be >= 2");
  if (!(fps > 0.0)) throw std::invalid_argument("synth_generate: fps must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto jitter = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  constexpr double pi = std::numbers::pi;

  MotionSequence seq;
  seq.fps = fps;
  seq.frames.resize(n_frames);

  switch (kind) {
    case MotionKind::kWalk: {
      const double omega = 2.0 * pi * jitter(0.85, 1.05);
      const double phase = jitter(0.0, 2.0 * pi);
      const double speed = jitter(1.0, 1.3);
      const double hip_amp = jitter(0.35, 0.5);
      const double knee_amp = jitter(0.5, 0.8);
      const double arm_amp = jitter(0.2, 0.35);
      const double heading = jitter(-0.3, 0.3);
      for (int i = 0; i < n_frames; ++i) {
        const double t = i / fps;
        const double a = omega * t + phase;
        auto& f = seq.frames[i];
        f.local_rot.fill(Vec3::Zero());
        const double fwd = speed * t;
        f.root_translation = Vec3(fwd * std::sin(heading), 0.92 + 0.015 * std::cos(2.0 * a),
                                  fwd * std::cos(heading));
        f.local_rot[0] = Vec3(0.03 * std::sin(2.0 * a), heading + 0.08 * std::sin(a), 0.0);
        // Hip flexion, left and right legs in antiphase.
        f.local_rot[1] = Vec3(hip_amp * std::sin(a), 0.0, 0.03 * std::sin(a));
        f.local_rot[2] = Vec3(hip_amp * std::sin(a + pi), 0.0, -0.03 * std::sin(a + pi));
        f.local_rot[4] = Vec3(knee_amp * 0.5 * (1.0 - std::cos(a + 0.6)), 0.0, 0.0);
        f.local_rot[5] = Vec3(knee_amp * 0.5 * (1.0 - std::cos(a + pi + 0.6)), 0.0, 0.0);
        f.local_rot[7] = Vec3(-0.15 * std::sin(a + 0.3), 0.0, 0.0);
        f.local_rot[8] = Vec3(-0.15 * std::sin(a + pi + 0.3), 0.0, 0.0);
        f.local_rot[3] = Vec3(0.02, -0.03 * std::sin(a), 0.0);
        f.local_rot[6] = Vec3(0.0, -0.03 * std::sin(a), 0.0);
        f.local_rot[9] = Vec3(0.0, -0.02 * std::sin(a), 0.0);
        f.local_rot[12] = Vec3(0.05 * std::sin(2.0 * a), 0.0, 0.0);
        f.local_rot[15] = Vec3(-0.03 * std::sin(2.0 * a), 0.02 * std::sin(a), 0.0);
        // Arms hang down and swing opposite to the same-side leg.
        f.local_rot[16] = Vec3(arm_amp * std::sin(a + pi), 0.0, -1.2);
        f.local_rot[17] = Vec3(arm_amp * std::sin(a), 0.0, 1.2);
        f.local_rot[18] = Vec3(0.0, -0.3 - 0.15 * std::sin(a), 0.0);
        f.local_rot[19] = Vec3(0.0, 0.3 + 0.15 * std::sin(a + pi), 0.0);
      }
      break;
    }
    case MotionKind::kKick: {
      const double omega = 2.0 * pi * jitter(0.5, 0.8);
      const double phase = jitter(0.0, 2.0 * pi);
      const bool left = unit(rng) < 0.5;
      const double amp = jitter(0.9, 1.3);
      const int hip = left ? 1 : 2;
      const int knee = left ? 4 : 5;
      for (int i = 0; i < n_frames; ++i) {
        const double t = i / fps;
        const double s = std::sin(omega * t + phase);
        const double pulse = s > 0.0 ? s * s : 0.0;
        auto& f = seq.frames[i];
        f.local_rot.fill(Vec3::Zero());
        f.root_translation = Vec3(0.0, 0.92 - 0.02 * pulse, 0.0);
        f.local_rot[0] = Vec3(0.1 * pulse, 0.0, 0.0);
        f.local_rot[hip] = Vec3(-amp * pulse, 0.0, 0.0);
        f.local_rot[knee] = Vec3(0.6 * std::sqrt(pulse) * (1.0 - pulse), 0.0, 0.0);
        f.local_rot[3] = Vec3(0.15 * pulse, 0.0, 0.0);
        f.local_rot[16] = Vec3(0.0, 0.0, -0.9 + 0.3 * pulse);
        f.local_rot[17] = Vec3(0.0, 0.0, 0.9 - 0.3 * pulse);
        f.local_rot[18] = Vec3(0.0, -0.6, 0.0);
        f.local_rot[19] = Vec3(0.0, 0.6, 0.0);
      }
      break;
    }
    case MotionKind::kIdle: {
      const double omega = 2.0 * pi * jitter(0.15, 0.3);
      std::array<double, kNumJoints> ph{};
      for (auto& p : ph) p = jitter(0.0, 2.0 * pi);
      for (int i = 0; i < n_frames; ++i) {
        const double t = i / fps;
        auto& f = seq.frames[i];
        f.root_translation = Vec3(0.01 * std::sin(omega * t + ph[0]), 0.92, 0.0);
        for (int j = 0; j < kNumJoints; ++j) {
          // Two components of at most 0.025 each keep |angle| below 0.05 rad.
          f.local_rot[j] = Vec3(0.025 * std::sin(omega * t + ph[j]), 0.0,
                                0.02 * std::cos(omega * t + ph[j]));
        }
      }
      break;
    }
  }
  return seq;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_test(std::size_t n,
                                                                               std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  const auto n_test = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  std::vector<std::size_t> test(idx.begin(), idx.begin() + n_test);
  std::vector<std::size_t> train(idx.begin() + n_test, idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

std::string format_sensor_line(const SensorFrame& frame) {
  std::string line;
  auto put = [&](double v) {
    if (!line.empty()) line += ' ';
    line += format_double(v);
  };
  for (const auto& p : frame.position) {
    for (int k = 0; k < 3; ++k) put(p[k]);
  }
  for (const auto& R : frame.rotation) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) put(R(r, c));
    }
  }
  return line;
}

SensorFrame parse_sensor_line(std::string_view line) {
  std::vector<double> v;
  std::string err;
  if (!parse_doubles(line, v, err)) throw ParseError("sensor line", 0, err);
  if (v.size() != kSensorLineValues) {
    throw ParseError("sensor line", 0,
                     "expected 36 values, got " + std::to_string(v.size()));
  }
  SensorFrame f;
  for (int s = 0; s < kNumSensors; ++s) {
    f.position[s] = Vec3(v[3 * s], v[3 * s + 1], v[3 * s + 2]);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) f.rotation[s](r, c) = v[9 + 9 * s + 3 * r + c];
    }
    if (!rotmath::is_rotation(f.rotation[s], 1e-4)) {
      throw ParseError("sensor line", 0, "sensor " + std::to_string(s) + " rotation is not orthonormal");
    }
  }
  return f;
}

}  // namespace bpg
