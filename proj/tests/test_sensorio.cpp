#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "errors.hpp"
#include "sensorio.hpp"
#include "test_util.hpp"

using namespace bpg;
using rotmath::Vec3;

namespace {

std::string header() { return "fps 60 joints 22\n"; }

std::string frame_line(double v) {
  std::string s;
  for (int i = 0; i < 69; ++i) s += (i ? " " : "") + format_double(v * (i % 5) * 0.01);
  return s + "\n";
}

int error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_motion(in, "m.mot");
  } catch (const ParseError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST(SensorIo, MotionRoundTripIsExact) {
  const auto seq = synth_generate(MotionKind::kWalk, 50, 60.0, 3);
  std::ostringstream out;
  write_motion(seq, out);
  std::istringstream in(out.str());
  const auto back = parse_motion(in, "rt");
  ASSERT_EQ(back.frames.size(), seq.frames.size());
  EXPECT_EQ(back.fps, seq.fps);
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    EXPECT_EQ(back.frames[f].root_translation, seq.frames[f].root_translation);
    for (int j = 0; j < kNumJoints; ++j) {
      EXPECT_EQ(back.frames[f].local_rot[j], seq.frames[f].local_rot[j]);
    }
  }
}

TEST(SensorIo, FileRoundTrip) {
  testutil::TempDir dir("sio");
  const auto seq = synth_generate(MotionKind::kIdle, 10, 30.0, 1);
  save_motion(seq, dir.str("a.mot"));
  const auto back = load_motion(dir.str("a.mot"));
  EXPECT_EQ(back.fps, 30.0);
  EXPECT_EQ(back.frames.size(), 10u);
  EXPECT_THROW(load_motion(dir.str("missing.mot")), IoError);
}

TEST(SensorIo, ParseErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line(""), 1);
  EXPECT_EQ(error_line("fps 60 joints 21\n" + frame_line(1) + frame_line(2)), 1);
  EXPECT_EQ(error_line("fps -1 joints 22\n" + frame_line(1) + frame_line(2)), 1);
  EXPECT_EQ(error_line("frames 60 joints 22\n"), 1);
  EXPECT_EQ(error_line(header() + frame_line(1) + "1 2 3\n"), 3);
  EXPECT_EQ(error_line(header() + frame_line(1) + frame_line(2) + "\n"), 4);
  std::string bad = frame_line(1);
  bad.replace(0, 1, "x");
  EXPECT_EQ(error_line(header() + frame_line(1) + bad), 3);
  EXPECT_EQ(error_line(header() + frame_line(1)), 2);
  EXPECT_EQ(error_line(header() + frame_line(1) + frame_line(2)), -1);
}

TEST(SensorIo, ParseErrorMessageNamesSource) {
  std::istringstream in(header() + "1 2\n");
  try {
    parse_motion(in, "walk_01.mot");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("walk_01.mot:2"), std::string::npos) << e.what();
  }
}

TEST(SensorIo, ListMotionFilesIsSortedAndFiltered) {
  testutil::TempDir dir("list");
  for (const char* name : {"b.mot", "a.mot", "c.txt"}) testutil::write_file(dir.str(name), "");
  const auto files = list_motion_files(dir.str());
  ASSERT_EQ(files.size(), 2u);
  EXPECT_NE(files[0].find("a.mot"), std::string::npos);
  EXPECT_NE(files[1].find("b.mot"), std::string::npos);
  EXPECT_THROW(list_motion_files(dir.str("nope")), IoError);
}

TEST(SensorIo, SynthIsDeterministicPerSeed) {
  for (auto kind : {MotionKind::kWalk, MotionKind::kKick, MotionKind::kIdle}) {
    std::ostringstream a, b, c;
    write_motion(synth_generate(kind, 40, 60.0, 5), a);
    write_motion(synth_generate(kind, 40, 60.0, 5), b);
    write_motion(synth_generate(kind, 40, 60.0, 6), c);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_NE(a.str(), c.str());
  }
  EXPECT_THROW(parse_motion_kind("run"), std::invalid_argument);
  EXPECT_THROW(synth_generate(MotionKind::kWalk, 1, 60.0, 1), std::invalid_argument);
}

TEST(SensorIo, SynthMotionIsSmooth) {
  const auto seq = synth_generate(MotionKind::kKick, 120, 60.0, 2);
  for (std::size_t f = 1; f < seq.frames.size(); ++f) {
    EXPECT_LT((seq.frames[f].root_translation - seq.frames[f - 1].root_translation).norm(), 0.1);
    for (int j = 0; j < kNumJoints; ++j) {
      EXPECT_LT((seq.frames[f].local_rot[j] - seq.frames[f - 1].local_rot[j]).norm(), 0.3);
    }
  }
}

TEST(SensorIo, SensorsComeFromForwardKinematics) {
  const auto skel = default_skeleton();
  const auto seq = synth_generate(MotionKind::kWalk, 5, 60.0, 1);
  const auto sensors = extract_sensors(seq, skel);
  ASSERT_EQ(sensors.size(), 5u);
  for (std::size_t f = 0; f < 5; ++f) {
    const auto fk = forward_kinematics(seq.frames[f].local_rot, seq.frames[f].root_translation, skel);
    for (int k = 0; k < kNumSensors; ++k) {
      EXPECT_EQ(sensors[f].position[k], fk.positions[kSensorJoints[k]]);
      EXPECT_EQ(sensors[f].rotation[k], fk.global_rot[kSensorJoints[k]]);
    }
  }
}

TEST(SensorIo, WindowCountAndAlignment) {
  const auto skel = default_skeleton();
  const auto sensors = extract_sensors(synth_generate(MotionKind::kWalk, 30, 60.0, 1), skel);
  for (int K : {1, 2, 7, 30}) {
    const auto w = make_windows(sensors, K, 60.0);
    ASSERT_EQ(w.size(), sensors.size() - K + 1) << K;
    for (std::size_t i = 0; i < w.size(); ++i) {
      EXPECT_EQ(w[i].target, K - 1 + i);
      ASSERT_EQ(w[i].frames.size(), static_cast<std::size_t>(K));
      EXPECT_EQ(w[i].frames.back().position[0], sensors[w[i].target].position[0]);
    }
  }
  EXPECT_TRUE(make_windows(sensors, 31, 60.0).empty());
}

TEST(SensorIo, FiniteDifferenceVelocity) {
  EXPECT_EQ(finite_diff_velocity(Vec3(0, 0, 0), Vec3(1, 2, 3), 60.0), Vec3(60, 120, 180));
}

TEST(SensorIo, SplitIsSeededPartition) {
  const auto [train, test] = split_train_test(50, 9);
  EXPECT_EQ(test.size(), 5u);
  EXPECT_EQ(train.size(), 45u);
  std::set<std::size_t> all(train.begin(), train.end());
  all.insert(test.begin(), test.end());
  EXPECT_EQ(all.size(), 50u);
  EXPECT_EQ(split_train_test(50, 9).second, test);
  EXPECT_NE(split_train_test(50, 10).second, test);
}

TEST(SensorIo, SensorLineRoundTrip) {
  const auto skel = default_skeleton();
  const auto sensors = extract_sensors(synth_generate(MotionKind::kKick, 4, 60.0, 8), skel);
  for (const auto& s : sensors) {
    const std::string line = format_sensor_line(s);
    std::istringstream count(line);
    double v;
    int n = 0;
    while (count >> v) ++n;
    EXPECT_EQ(n, kSensorLineValues);
    const auto back = parse_sensor_line(line);
    for (int k = 0; k < kNumSensors; ++k) {
      EXPECT_EQ(back.position[k], s.position[k]);
      EXPECT_EQ(back.rotation[k], s.rotation[k]);
    }
  }
}

TEST(SensorIo, SensorLineRejectsMalformedInput) {
  EXPECT_THROW(parse_sensor_line("1 2 3"), ParseError);
  EXPECT_THROW(parse_sensor_line(""), ParseError);
  std::string zeros;
  for (int i = 0; i < kSensorLineValues; ++i) zeros += "0 ";
  EXPECT_THROW(parse_sensor_line(zeros), ParseError);
}

TEST(SensorIo, FormatDoubleRoundTrips) {
  for (double v : {0.0, -1.5, 1.0 / 3.0, 1e-300, 6.02e23, std::nextafter(1.0, 2.0)}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}
