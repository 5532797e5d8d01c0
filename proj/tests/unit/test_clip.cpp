#include <doctest.h>

#include <filesystem>
#include <set>

#include "sparsepose/clip.hpp"
#include "sparsepose/errors.hpp"
#include "sparsepose/synth.hpp"
#include "support.hpp"

using namespace sparsepose;

namespace {

MotionClip random_clip(std::mt19937_64& rng, std::size_t n) {
  MotionClip c;
  c.skeleton_hash = 0x1234abcdULL;
  std::uniform_real_distribution<double> u(-2, 2);
  for (std::size_t i = 0; i < n; ++i) {
    ClipFrame f;
    f.root_pos = Vec3(u(rng), u(rng), u(rng));
    f.global_orient = sptest::random_axis_angle(rng, 0, 3);
    for (auto& l : f.local_rot) l = sptest::random_axis_angle(rng, 0, 3);
    c.frames.push_back(f);
  }
  return c;
}

void check_same(const MotionClip& a, const MotionClip& b) {
  CHECK(a.fps == b.fps);
  CHECK(a.skeleton_hash == b.skeleton_hash);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.frames[i].root_pos == b.frames[i].root_pos);
    CHECK(a.frames[i].global_orient.v == b.frames[i].global_orient.v);
    for (std::size_t j = 0; j < kNumLocal; ++j) CHECK(a.frames[i].local_rot[j].v == b.frames[i].local_rot[j].v);
  }
}

std::filesystem::path temp_dir() {
  const auto d = std::filesystem::temp_directory_path() / "sparsepose_test_clip";
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("record sizes") {
  CHECK(kPoseRecordSize == 69);
  CHECK(kDeviceRecordSize == 6);
}

TEST_CASE("binary and text clip round trips are exact") {
  std::mt19937_64 rng(1);
  MotionClip c = random_clip(rng, 17);
  c.fps = 59.94;
  check_same(decode_clip(encode_clip(c)), c);
  check_same(decode_clip_text(encode_clip_text(c)), c);
  const std::string bin = encode_clip(c);
  CHECK(bin.size() == 8 + 4 + 4 + 8 + 4 + 8 + 8 + 17 * 69 * 8);
  CHECK(bin.substr(0, 8) == std::string("SPCLIP\0\1", 8));

  const auto dir = temp_dir();
  write_clip(dir / "a.clip", c);
  write_clip(dir / "a.txt", c);
  check_same(read_clip(dir / "a.clip"), c);
  check_same(read_clip(dir / "a.txt"), c);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt clips are rejected") {
  std::mt19937_64 rng(2);
  const std::string bin = encode_clip(random_clip(rng, 3));
  CHECK_THROWS_AS(decode_clip(bin.substr(0, bin.size() - 1)), IoError);
  std::string bad = bin;
  bad[2] = 'X';
  CHECK_THROWS_AS(decode_clip(bad), IoError);
  CHECK_THROWS_AS(decode_clip_text("kind pose\nfps 60\njoints 22\nframes 2\n1 2 3\n"), IoError);
  CHECK_THROWS_AS(read_clip("/nonexistent/sparsepose.clip"), IoError);
}

TEST_CASE("tracker streams round trip") {
  std::mt19937_64 rng(3);
  const MotionClip c = synth_motion(MotionKind::kComposite, 0.3, 7);
  const TrackerStream s = extract_trackers(c, Skeleton::standard());
  for (const bool text : {false, true}) {
    const TrackerStream back = text ? decode_stream_text(encode_stream_text(s, 99)) : decode_stream(encode_stream(s, 99));
    REQUIRE(back.size() == s.size());
    CHECK(back.fps == s.fps);
    for (std::size_t t = 0; t < s.size(); ++t)
      for (std::size_t d = 0; d < kNumDevices; ++d) {
        CHECK(back.frames[t][d].pos == s.frames[t][d].pos);
        // Orientation is stored as axis-angle.
        CHECK(sptest::max_abs(back.frames[t][d].orient.m, s.frames[t][d].orient.m) < 1e-13);
      }
  }
}

TEST_CASE("extracted trackers are the FK head and wrists") {
  const Skeleton& s = Skeleton::standard();
  const MotionClip c = synth_motion(MotionKind::kArmWave, 0.2, 4);
  const TrackerStream t = extract_trackers(c, s);
  REQUIRE(t.size() == c.size());
  CHECK(t.devices() == 3);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const JointState st = forward_kinematics(s, to_pose(c.frames[i]));
    const int joints[] = {15, 20, 21};
    for (std::size_t d = 0; d < 3; ++d) {
      CHECK(t.frames[i][d].pos == st.pos[static_cast<std::size_t>(joints[d])]);
      CHECK(t.frames[i][d].orient.m == st.orient[static_cast<std::size_t>(joints[d])].m);
    }
  }
}

TEST_CASE("leg motion does not change the trackers") {
  const Skeleton& s = Skeleton::standard();
  std::mt19937_64 rng(5);
  MotionClip c = random_clip(rng, 6);
  const TrackerStream before = extract_trackers(c, s);
  for (auto& f : c.frames)
    for (const int leg : {1, 2, 4, 5, 7, 8, 10, 11}) f.local_rot[static_cast<std::size_t>(leg - 1)] = sptest::random_axis_angle(rng, 0, 3);
  const TrackerStream after = extract_trackers(c, s);
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t d = 0; d < 3; ++d) {
      CHECK(after.frames[i][d].pos == before.frames[i][d].pos);
      CHECK(after.frames[i][d].orient.m == before.frames[i][d].orient.m);
    }
}

TEST_CASE("resample at the same rate is the identity") {
  const MotionClip c = synth_motion(MotionKind::kComposite, 0.5, 2);
  const MotionClip r = resample(c, c.fps);
  REQUIRE(r.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(r.frames[i].root_pos == c.frames[i].root_pos);
    CHECK(r.frames[i].global_orient.v == c.frames[i].global_orient.v);
  }
}

TEST_CASE("resample 120 to 60 fps halves the frame count") {
  MotionClip c = synth_motion(MotionKind::kWalkCycle, 1.0, 3, 120.0);
  CHECK(c.size() == 120);
  const MotionClip r = resample(c, 60.0);
  CHECK(r.fps == 60.0);
  CHECK(r.size() == 60);
  // Even output frames sit exactly on even source frames.
  for (std::size_t i = 0; i < r.size(); ++i) CHECK((r.frames[i].root_pos - c.frames[2 * i].root_pos).norm() < 1e-12);
}

TEST_CASE("resampled constant angular velocity follows the analytic path") {
  // Rotation about a fixed axis at 1 rad/s, root on a straight line.
  MotionClip c;
  c.fps = 50;
  const Vec3 axis = Vec3(1, 2, 2).normalized();
  for (int i = 0; i < 50; ++i) {
    const double t = i / 50.0;
    ClipFrame f;
    f.root_pos = Vec3(t, 0, 2 * t);
    f.global_orient.v = axis * t;
    f.local_rot[4].v = Vec3(0, 0, 0.5 * t);
    c.frames.push_back(f);
  }
  const MotionClip r = resample(c, 60);
  CHECK(r.size() == 60);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double t = static_cast<double>(i) / 60.0;
    if (t > 49.0 / 50.0) break;
    CAPTURE(i);
    CHECK((r.frames[i].root_pos - Vec3(t, 0, 2 * t)).norm() < 1e-6);
    CHECK((r.frames[i].global_orient.v - axis * t).norm() < 1e-6);
    CHECK((r.frames[i].local_rot[4].v - Vec3(0, 0, 0.5 * t)).norm() < 1e-6);
  }
}

TEST_CASE("resample input checks") {
  MotionClip one;
  one.frames.resize(1);
  CHECK_THROWS_AS(resample(one, 60), InvalidArgument);
  CHECK_THROWS_AS(resample(synth_motion(MotionKind::kSquat, 0.1, 1), 0), InvalidArgument);
}

TEST_CASE("dataset split is a disjoint partition") {
  std::vector<MotionClip> clips;
  for (std::size_t i = 0; i < 20; ++i) {
    MotionClip c;
    c.skeleton_hash = i;
    clips.push_back(c);
  }
  const DatasetSplit s = split_dataset(clips, 0.9, 11);
  CHECK(s.train.size() == 18);
  CHECK(s.test.size() == 2);
  std::set<std::uint64_t> seen;
  for (const auto& c : s.train) seen.insert(c.skeleton_hash);
  for (const auto& c : s.test) seen.insert(c.skeleton_hash);
  CHECK(seen.size() == 20);
  const DatasetSplit again = split_dataset(clips, 0.9, 11);
  CHECK(again.test[0].skeleton_hash == s.test[0].skeleton_hash);
  CHECK(again.test[1].skeleton_hash == s.test[1].skeleton_hash);
}

TEST_CASE("clip directories load in name order") {
  const auto dir = temp_dir();
  std::mt19937_64 rng(6);
  const MotionClip a = random_clip(rng, 2), b = random_clip(rng, 3);
  write_clip(dir / "b.txt", b);
  write_clip(dir / "a.clip", a);
  write_file(dir / "notes.md", "ignored");
  const auto clips = load_clip_dir(dir);
  REQUIRE(clips.size() == 2);
  check_same(clips[0], a);
  check_same(clips[1], b);
  std::filesystem::remove_all(dir);
}
