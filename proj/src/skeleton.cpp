#include "sparsepose/skeleton.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sparsepose/errors.hpp"

namespace sparsepose {

namespace {

constexpr std::string_view kStandardSkeleton = R"(pelvis -1 0 0 0
left_hip 0 0.06 -0.09 0
right_hip 0 -0.06 -0.09 0
spine1 0 0 0.11 -0.01
left_knee 1 0.04 -0.38 0
right_knee 2 -0.04 -0.38 0
spine2 3 0 0.13 0
left_ankle 4 -0.01 -0.4 -0.04
right_ankle 5 0.01 -0.4 -0.04
spine3 6 0 0.05 0.02
left_foot 7 0.04 -0.06 0.12
right_foot 8 -0.04 -0.06 0.12
neck 9 0 0.21 -0.03
left_collar 9 0.07 0.12 -0.01
right_collar 9 -0.07 0.12 -0.01
head 12 0 0.09 0.05
left_shoulder 13 0.12 0.04 -0.02
right_shoulder 14 -0.12 0.04 -0.02
left_elbow 16 0.26 -0.01 -0.02
right_elbow 17 -0.26 -0.01 -0.02
left_wrist 18 0.25 0.01 0
right_wrist 19 -0.25 0.01 0
)";

std::vector<std::string_view> split_ws(std::string_view line) {
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

template <class T>
T parse_number(std::string_view tok, std::size_t line_no) {
  T value{};
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  if (!tok.empty() && tok.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("skeleton line " + std::to_string(line_no) + ": bad number '" +
                      std::string(tok) + "'");
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

const Skeleton& Skeleton::standard() {
  static const Skeleton s = parse(kStandardSkeleton);
  return s;
}

Skeleton Skeleton::parse(std::string_view text) {
  Skeleton s;
  std::size_t count = 0;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 5)
      throw ConfigError("skeleton line " + std::to_string(line_no) +
                        ": expected 'name parent x y z'");
    if (count == kNumJoints)
      throw ConfigError("skeleton: more than " + std::to_string(kNumJoints) + " joints");
    const int parent = parse_number<int>(toks[1], line_no);
    const bool is_root = count == 0;
    if (is_root ? parent != kNoParent : (parent < 0 || parent >= static_cast<int>(count)))
      throw ConfigError("skeleton line " + std::to_string(line_no) +
                        ": parent must be -1 for the first joint and an earlier joint otherwise");
    s.names[count] = std::string(toks[0]);
    s.parent[count] = parent;
    s.offset[count] = Vec3(parse_number<double>(toks[2], line_no),
                           parse_number<double>(toks[3], line_no),
                           parse_number<double>(toks[4], line_no));
    ++count;
  }
  if (count != kNumJoints)
    throw ConfigError("skeleton: expected " + std::to_string(kNumJoints) + " joints, got " +
                      std::to_string(count));
  s.head_index = s.index_of("head");
  s.left_hand_index = s.index_of("left_wrist");
  s.right_hand_index = s.index_of("right_wrist");
  s.left_shoulder_index = s.index_of("left_shoulder");
  s.right_shoulder_index = s.index_of("right_shoulder");
  s.left_elbow_index = s.index_of("left_elbow");
  s.right_elbow_index = s.index_of("right_elbow");
  if (s.parent[static_cast<std::size_t>(s.left_hand_index)] != s.left_elbow_index ||
      s.parent[static_cast<std::size_t>(s.right_hand_index)] != s.right_elbow_index ||
      s.parent[static_cast<std::size_t>(s.left_elbow_index)] != s.left_shoulder_index ||
      s.parent[static_cast<std::size_t>(s.right_elbow_index)] != s.right_shoulder_index)
    throw ConfigError("skeleton: arms must be shoulder -> elbow -> wrist chains");
  return s;
}

Skeleton Skeleton::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open skeleton file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Skeleton::to_text() const {
  std::string out;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    out += names[j];
    out += ' ';
    out += std::to_string(parent[j]);
    for (int c = 0; c < 3; ++c) {
      out += ' ';
      out += format_double(offset[j][c]);
    }
    out += '\n';
  }
  return out;
}

std::uint64_t Skeleton::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : to_text()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

int Skeleton::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < kNumJoints; ++j)
    if (names[j] == name) return static_cast<int>(j);
  throw ConfigError("skeleton: no joint named '" + std::string(name) + "'");
}

std::vector<int> Skeleton::chain_to(int joint) const {
  std::vector<int> chain;
  for (int j = joint; j != kNoParent; j = parent[static_cast<std::size_t>(j)]) chain.push_back(j);
  return {chain.rbegin(), chain.rend()};
}

bool Skeleton::is_ancestor(int ancestor, int joint) const {
  for (int j = parent[static_cast<std::size_t>(joint)]; j != kNoParent;
       j = parent[static_cast<std::size_t>(j)])
    if (j == ancestor) return true;
  return false;
}

JointState forward_kinematics(const Skeleton& s, const PoseOutput& p) {
  JointState st;
  st.orient[0] = p.global_orient;
  st.pos[0] = p.root_pos;
  for (std::size_t j = 1; j < kNumJoints; ++j) {
    const auto par = static_cast<std::size_t>(s.parent[j]);
    st.orient[j] = st.orient[par] * p.local_rot[j - 1];
    st.pos[j] = st.pos[par] + st.orient[par].m * s.offset[j];
  }
  return st;
}

Vec3 root_from_head(const Skeleton& s, const RotMatrix& global_orient,
                    std::span<const RotMatrix, kNumLocal> local_rot, const Vec3& head_pos_world) {
  PoseOutput p;
  p.global_orient = global_orient;
  std::copy(local_rot.begin(), local_rot.end(), p.local_rot.begin());
  const JointState st = forward_kinematics(s, p);
  return head_pos_world - st.pos[static_cast<std::size_t>(s.head_index)];
}

RotMatrix global_from_head(const Skeleton& s, const RotMatrix& head_orient_world,
                           std::span<const RotMatrix, kNumLocal> local_rot) {
  // head = G * L_a * L_b * ... * L_head  =>  G = head * (L_a ... L_head)^T
  RotMatrix chain;
  for (const int j : s.chain_to(s.head_index))
    if (j != s.root_index) chain = chain * local_rot[static_cast<std::size_t>(j - 1)];
  return head_orient_world * chain.transpose();
}

}  // namespace sparsepose
