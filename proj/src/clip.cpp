#include "sparsepose/clip.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "sparsepose/errors.hpp"

namespace sparsepose {

namespace {

constexpr char kClipMagic[8] = {'S', 'P', 'C', 'L', 'I', 'P', 0, 1};
constexpr std::uint32_t kClipVersion = 1;
enum class RecordKind : std::uint32_t { kPose = 0, kTracker = 1 };

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  void put_vec(const Vec3& v) {
    for (int i = 0; i < 3; ++i) put<double>(v[i]);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  template <class T>
  T get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T) || pos_ > bytes_.size())
      throw IoError(std::string("clip: truncated while reading ") + what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  Vec3 get_vec() {
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = get<double>("record");
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

struct Header {
  RecordKind kind = RecordKind::kPose;
  double fps = 60.0;
  std::uint32_t width = 0;  // joints or devices
  std::uint64_t skeleton_hash = 0;
  std::uint64_t frames = 0;
};

void put_header(Writer& w, const Header& h) {
  for (const char c : kClipMagic) w.put<char>(c);
  w.put<std::uint32_t>(kClipVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(h.kind));
  w.put<double>(h.fps);
  w.put<std::uint32_t>(h.width);
  w.put<std::uint64_t>(h.skeleton_hash);
  w.put<std::uint64_t>(h.frames);
}

Header get_header(Reader& r, RecordKind expected) {
  char magic[8];
  for (char& c : magic) c = r.get<char>("magic");
  if (std::memcmp(magic, kClipMagic, sizeof(magic)) != 0) throw IoError("clip: bad magic");
  if (r.get<std::uint32_t>("version") != kClipVersion) throw IoError("clip: unsupported version");
  Header h;
  h.kind = static_cast<RecordKind>(r.get<std::uint32_t>("kind"));
  if (h.kind != expected)
    throw IoError(expected == RecordKind::kPose ? "clip: file holds a tracker stream, not poses"
                                                : "clip: file holds poses, not a tracker stream");
  h.fps = r.get<double>("fps");
  if (!(h.fps > 0) || !std::isfinite(h.fps)) throw IoError("clip: non-positive frame rate");
  h.width = r.get<std::uint32_t>("width");
  h.skeleton_hash = r.get<std::uint64_t>("skeleton hash");
  h.frames = r.get<std::uint64_t>("frame count");
  return h;
}

bool has_magic(std::string_view bytes) {
  return bytes.size() >= sizeof(kClipMagic) &&
         std::memcmp(bytes.data(), kClipMagic, sizeof(kClipMagic)) == 0;
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view tok, std::size_t line_no) {
  double v = 0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw IoError("clip text line " + std::to_string(line_no) + ": bad number '" +
                  std::string(tok) + "'");
  return v;
}

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

// Shared text layout: header keys followed by numeric rows of `row_width`.
struct TextTable {
  Header header;
  std::vector<std::vector<double>> rows;
};

std::string encode_text(const Header& h, const std::vector<std::vector<double>>& rows,
                        const char* width_key) {
  std::string out = "# sparsepose clip v1\n";
  out += "kind " + std::string(h.kind == RecordKind::kPose ? "pose" : "tracker") + "\n";
  out += "fps " + fmt(h.fps) + "\n";
  out += std::string(width_key) + " " + std::to_string(h.width) + "\n";
  out += "skeleton_hash " + std::to_string(h.skeleton_hash) + "\n";
  out += "frames " + std::to_string(h.frames) + "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ' ';
      out += fmt(row[i]);
    }
    out += '\n';
  }
  return out;
}

TextTable decode_text(std::string_view text, RecordKind expected, const char* width_key,
                      std::size_t per_unit) {
  TextTable t;
  bool have_kind = false, have_width = false, have_frames = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto toks = tokens(line);
    if (toks.empty()) continue;
    const bool numeric = toks[0].front() == '-' || toks[0].front() == '+' ||
                         toks[0].front() == '.' || (toks[0].front() >= '0' && toks[0].front() <= '9');
    if (!numeric) {
      if (toks.size() != 2)
        throw IoError("clip text line " + std::to_string(line_no) + ": expected 'key value'");
      const std::string_view key = toks[0], val = toks[1];
      if (key == "kind") {
        const RecordKind k = val == "pose" ? RecordKind::kPose
                             : val == "tracker"
                                 ? RecordKind::kTracker
                                 : throw IoError("clip text: unknown kind '" + std::string(val) + "'");
        if (k != expected) throw IoError("clip text: unexpected record kind");
        have_kind = true;
      } else if (key == "fps") {
        t.header.fps = parse_double(val, line_no);
        if (!(t.header.fps > 0)) throw IoError("clip text: non-positive frame rate");
      } else if (key == width_key) {
        t.header.width = static_cast<std::uint32_t>(parse_double(val, line_no));
        have_width = true;
      } else if (key == "skeleton_hash") {
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
        if (ec != std::errc() || p != val.data() + val.size())
          throw IoError("clip text: bad skeleton_hash");
        t.header.skeleton_hash = v;
      } else if (key == "frames") {
        t.header.frames = static_cast<std::uint64_t>(parse_double(val, line_no));
        have_frames = true;
      } else {
        throw IoError("clip text: unknown header key '" + std::string(key) + "'");
      }
      continue;
    }
    if (!have_kind || !have_width || !have_frames)
      throw IoError("clip text: frame data before complete header");
    std::vector<double> row;
    row.reserve(toks.size());
    for (const auto tok : toks) row.push_back(parse_double(tok, line_no));
    const std::size_t expected_width =
        expected == RecordKind::kPose ? kPoseRecordSize : per_unit * t.header.width;
    if (row.size() != expected_width)
      throw IoError("clip text line " + std::to_string(line_no) + ": expected " +
                    std::to_string(expected_width) + " values, got " + std::to_string(row.size()));
    t.rows.push_back(std::move(row));
  }
  if (!have_kind || !have_width || !have_frames) throw IoError("clip text: incomplete header");
  if (t.rows.size() != t.header.frames)
    throw IoError("clip text: header says " + std::to_string(t.header.frames) + " frames, found " +
                  std::to_string(t.rows.size()));
  return t;
}

std::vector<double> pose_row(const ClipFrame& f) {
  std::vector<double> row;
  row.reserve(kPoseRecordSize);
  row.insert(row.end(), f.root_pos.data(), f.root_pos.data() + 3);
  row.insert(row.end(), f.global_orient.v.data(), f.global_orient.v.data() + 3);
  for (const auto& l : f.local_rot) row.insert(row.end(), l.v.data(), l.v.data() + 3);
  return row;
}

ClipFrame pose_from_row(const std::vector<double>& row) {
  ClipFrame f;
  f.root_pos = Vec3(row[0], row[1], row[2]);
  f.global_orient.v = Vec3(row[3], row[4], row[5]);
  for (std::size_t j = 0; j < kNumLocal; ++j)
    f.local_rot[j].v = Vec3(row[6 + 3 * j], row[7 + 3 * j], row[8 + 3 * j]);
  return f;
}

std::vector<double> tracker_row(const std::vector<TrackerFrame>& devices) {
  std::vector<double> row;
  for (const auto& d : devices) {
    row.insert(row.end(), d.pos.data(), d.pos.data() + 3);
    const AxisAngle aa = matrix_to_axis_angle(d.orient);
    row.insert(row.end(), aa.v.data(), aa.v.data() + 3);
  }
  return row;
}

std::vector<TrackerFrame> tracker_from_row(const std::vector<double>& row) {
  std::vector<TrackerFrame> devices(row.size() / kDeviceRecordSize);
  for (std::size_t d = 0; d < devices.size(); ++d) {
    const double* p = row.data() + d * kDeviceRecordSize;
    devices[d].pos = Vec3(p[0], p[1], p[2]);
    devices[d].orient = axis_angle_to_matrix({Vec3(p[3], p[4], p[5])});
  }
  return devices;
}

}  // namespace

PoseOutput to_pose(const ClipFrame& f) {
  PoseOutput p;
  p.root_pos = f.root_pos;
  p.global_orient = axis_angle_to_matrix(f.global_orient);
  for (std::size_t j = 0; j < kNumLocal; ++j) p.local_rot[j] = axis_angle_to_matrix(f.local_rot[j]);
  return p;
}

ClipFrame from_pose(const PoseOutput& p) {
  ClipFrame f;
  f.root_pos = p.root_pos;
  f.global_orient = matrix_to_axis_angle(p.global_orient);
  for (std::size_t j = 0; j < kNumLocal; ++j) f.local_rot[j] = matrix_to_axis_angle(p.local_rot[j]);
  return f;
}

std::vector<PoseOutput> to_poses(const MotionClip& clip) {
  std::vector<PoseOutput> out;
  out.reserve(clip.size());
  for (const auto& f : clip.frames) out.push_back(to_pose(f));
  return out;
}

std::string encode_clip(const MotionClip& clip) {
  Writer w;
  put_header(w, {RecordKind::kPose, clip.fps, static_cast<std::uint32_t>(kNumJoints),
                 clip.skeleton_hash, clip.frames.size()});
  for (const auto& f : clip.frames)
    for (const double v : pose_row(f)) w.put<double>(v);
  return w.take();
}

MotionClip decode_clip(std::string_view bytes) {
  Reader r(bytes);
  const Header h = get_header(r, RecordKind::kPose);
  if (h.width != kNumJoints)
    throw IoError("clip: expected " + std::to_string(kNumJoints) + " joints, file has " +
                  std::to_string(h.width));
  if (r.remaining() != h.frames * kPoseRecordSize * sizeof(double))
    throw IoError("clip: payload size does not match frame count");
  MotionClip clip;
  clip.fps = h.fps;
  clip.skeleton_hash = h.skeleton_hash;
  clip.frames.reserve(h.frames);
  std::vector<double> row(kPoseRecordSize);
  for (std::uint64_t i = 0; i < h.frames; ++i) {
    for (auto& v : row) v = r.get<double>("record");
    clip.frames.push_back(pose_from_row(row));
  }
  return clip;
}

std::string encode_clip_text(const MotionClip& clip) {
  std::vector<std::vector<double>> rows;
  rows.reserve(clip.size());
  for (const auto& f : clip.frames) rows.push_back(pose_row(f));
  return encode_text({RecordKind::kPose, clip.fps, static_cast<std::uint32_t>(kNumJoints),
                      clip.skeleton_hash, clip.frames.size()},
                     rows, "joints");
}

MotionClip decode_clip_text(std::string_view text) {
  const TextTable t = decode_text(text, RecordKind::kPose, "joints", 0);
  if (t.header.width != kNumJoints) throw IoError("clip text: joint count must be 22");
  MotionClip clip;
  clip.fps = t.header.fps;
  clip.skeleton_hash = t.header.skeleton_hash;
  for (const auto& row : t.rows) clip.frames.push_back(pose_from_row(row));
  return clip;
}

std::string encode_stream(const TrackerStream& stream, std::uint64_t skeleton_hash) {
  Writer w;
  put_header(w, {RecordKind::kTracker, stream.fps, static_cast<std::uint32_t>(stream.devices()),
                 skeleton_hash, stream.size()});
  for (const auto& frame : stream.frames) {
    if (frame.size() != stream.devices())
      throw InvalidArgument("encode_stream: inconsistent device count");
    for (const double v : tracker_row(frame)) w.put<double>(v);
  }
  return w.take();
}

TrackerStream decode_stream(std::string_view bytes) {
  Reader r(bytes);
  const Header h = get_header(r, RecordKind::kTracker);
  if (h.width == 0) throw IoError("tracker stream: zero devices");
  if (r.remaining() != h.frames * h.width * kDeviceRecordSize * sizeof(double))
    throw IoError("tracker stream: payload size does not match frame count");
  TrackerStream s;
  s.fps = h.fps;
  std::vector<double> row(h.width * kDeviceRecordSize);
  for (std::uint64_t i = 0; i < h.frames; ++i) {
    for (auto& v : row) v = r.get<double>("record");
    s.frames.push_back(tracker_from_row(row));
  }
  return s;
}

std::string encode_stream_text(const TrackerStream& stream, std::uint64_t skeleton_hash) {
  std::vector<std::vector<double>> rows;
  for (const auto& frame : stream.frames) rows.push_back(tracker_row(frame));
  return encode_text({RecordKind::kTracker, stream.fps, static_cast<std::uint32_t>(stream.devices()),
                      skeleton_hash, stream.size()},
                     rows, "devices");
}

TrackerStream decode_stream_text(std::string_view text) {
  const TextTable t = decode_text(text, RecordKind::kTracker, "devices", kDeviceRecordSize);
  TrackerStream s;
  s.fps = t.header.fps;
  for (const auto& row : t.rows) s.frames.push_back(tracker_from_row(row));
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_clip(const std::filesystem::path& path, const MotionClip& clip) {
  write_file(path, path.extension() == ".txt" ? encode_clip_text(clip) : encode_clip(clip));
}

MotionClip read_clip(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return has_magic(bytes) ? decode_clip(bytes) : decode_clip_text(bytes);
}

void write_stream(const std::filesystem::path& path, const TrackerStream& stream,
                  std::uint64_t skeleton_hash) {
  write_file(path, path.extension() == ".txt" ? encode_stream_text(stream, skeleton_hash)
                                              : encode_stream(stream, skeleton_hash));
}

TrackerStream read_stream(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return has_magic(bytes) ? decode_stream(bytes) : decode_stream_text(bytes);
}

TrackerStream extract_trackers(const MotionClip& clip, const Skeleton& s) {
  TrackerStream out;
  out.fps = clip.fps;
  out.frames.reserve(clip.size());
  const std::array<int, kNumDevices> joints{s.head_index, s.left_hand_index, s.right_hand_index};
  for (const auto& f : clip.frames) {
    const JointState st = forward_kinematics(s, to_pose(f));
    std::vector<TrackerFrame> devices;
    for (const int j : joints)
      devices.push_back({st.pos[static_cast<std::size_t>(j)], st.orient[static_cast<std::size_t>(j)]});
    out.frames.push_back(std::move(devices));
  }
  return out;
}

namespace {

RotMatrix slerp(const RotMatrix& a, const RotMatrix& b, double alpha) {
  const AxisAngle rel = matrix_to_axis_angle(angular_velocity(a, b));
  return a * axis_angle_to_matrix({rel.v * alpha});
}

}  // namespace

MotionClip resample(const MotionClip& clip, double target_fps) {
  if (!(target_fps > 0) || !std::isfinite(target_fps))
    throw InvalidArgument("resample: target rate must be positive");
  if (clip.size() < 2) throw InvalidArgument("resample: need at least two frames");
  MotionClip out;
  out.fps = target_fps;
  out.skeleton_hash = clip.skeleton_hash;
  const auto count = static_cast<std::size_t>(std::llround(clip.duration() * target_fps));
  const std::size_t last = clip.size() - 1;
  for (std::size_t i = 0; i < count; ++i) {
    const double src = static_cast<double>(i) * clip.fps / target_fps;
    const auto lo = std::min(static_cast<std::size_t>(std::floor(src)), last);
    const auto hi = std::min(lo + 1, last);
    const double alpha = std::clamp(src - static_cast<double>(lo), 0.0, 1.0);
    const ClipFrame& a = clip.frames[lo];
    if (alpha == 0.0 || lo == hi) {
      out.frames.push_back(a);
      continue;
    }
    const ClipFrame& b = clip.frames[hi];
    ClipFrame f;
    f.root_pos = (1.0 - alpha) * a.root_pos + alpha * b.root_pos;
    f.global_orient = matrix_to_axis_angle(
        slerp(axis_angle_to_matrix(a.global_orient), axis_angle_to_matrix(b.global_orient), alpha));
    for (std::size_t j = 0; j < kNumLocal; ++j)
      f.local_rot[j] = matrix_to_axis_angle(
          slerp(axis_angle_to_matrix(a.local_rot[j]), axis_angle_to_matrix(b.local_rot[j]), alpha));
    out.frames.push_back(f);
  }
  return out;
}

DatasetSplit split_dataset(std::vector<MotionClip> clips, double train_ratio, std::uint64_t seed) {
  if (!(train_ratio >= 0.0 && train_ratio <= 1.0))
    throw InvalidArgument("split_dataset: ratio must lie in [0, 1]");
  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with explicit draws keeps the split independent of the
  // standard library's shuffle implementation.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(clips.size())));
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? split.train : split.test).push_back(std::move(clips[order[i]]));
  return split;
}

std::vector<MotionClip> load_clip_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".clip" || ext == ".txt")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<MotionClip> clips;
  for (const auto& f : files) clips.push_back(read_clip(f));
  return clips;
}

}  // namespace sparsepose
