#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "skeleton.hpp"

namespace bpg {

inline constexpr double kDefaultFps = 60.0;

struct MotionFrame {
  rotmath::Vec3 root_translation = rotmath::Vec3::Zero();
  LocalRotations local_rot{};
};

/// Ground-truth full-body motion at a fixed frame rate.
struct MotionSequence {
  double fps = kDefaultFps;
  std::vector<MotionFrame> frames;
};

/// Malformed motion or sensor data. `line()` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

MotionSequence load_motion(const std::string& path);
MotionSequence parse_motion(std::istream& in, const std::string& source);
void save_motion(const MotionSequence& seq, const std::string& path);
void write_motion(const MotionSequence& seq, std::ostream& out);

/// Sorted list of `*.mot` files in a directory. Throws if the directory is unreadable.
std::vector<std::string> list_motion_files(const std::string& dir);

/// One frame of headset + controller measurements in world coordinates.
struct SensorFrame {
  std::array<rotmath::Vec3, kNumSensors> position{};
  std::array<rotmath::RotMatrix, kNumSensors> rotation{};
};

/// K consecutive sensor frames ending at `target` (an index into the source stream).
struct SensorWindow {
  std::vector<SensorFrame> frames;
  double fps = kDefaultFps;
  std::size_t target = 0;
};

std::vector<SensorFrame> extract_sensors(const MotionSequence& seq, const SkeletonModel& skel);

/// One window per target frame N in [K-1, len), stride 1. Too-short input
/// yields an empty list.
std::vector<SensorWindow> make_windows(const std::vector<SensorFrame>& sensors, int K, double fps);

rotmath::Vec3 finite_diff_velocity(const rotmath::Vec3& p_prev, const rotmath::Vec3& p_cur,
                                   double fps);

enum class MotionKind { kWalk, kKick, kIdle };

/// Throws std::invalid_argument for an unknown name.
MotionKind parse_motion_kind(std::string_view name);

/// Deterministic smooth synthetic motion for desk-scale experiments.
MotionSequence synth_generate(MotionKind kind, int n_frames, double fps, std::uint64_t seed);

/// Seeded 90/10 split of sequence indices: {train, test}.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_test(std::size_t n,
                                                                               std::uint64_t seed);

/// Streaming sensor line: 9 position floats (head, left, right) followed by
/// 27 row-major rotation floats in the same sensor order.
inline constexpr int kSensorLineValues = 36;
std::string format_sensor_line(const SensorFrame& frame);
/// Throws ParseError (line 0) on a malformed line.
SensorFrame parse_sensor_line(std::string_view line);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace bpg
