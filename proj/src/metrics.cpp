#include "sparsepose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <thread>
#include <vector>

#include "sparsepose/errors.hpp"

namespace sparsepose {

namespace {

struct FrameTerms {
  std::array<double, kNumJoints> re{}, pe{}, ve{};
  std::array<Vec3, kNumJoints> pred_pos{}, gt_pos{};
};

void frame_terms(const PoseOutput& p, const PoseOutput& g, const Skeleton& s, FrameTerms& out) {
  const JointState jp = forward_kinematics(s, p);
  const JointState jg = forward_kinematics(s, g);
  out.re[0] = geodesic_angle(p.global_orient, g.global_orient);
  for (int j = 1; j < static_cast<int>(kNumJoints); ++j)
    out.re[static_cast<std::size_t>(j)] = geodesic_angle(p.local(j), g.local(j));
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    out.pe[j] = (jp.pos[j] - jg.pos[j]).norm();
    out.pred_pos[j] = jp.pos[j];
    out.gt_pos[j] = jg.pos[j];
  }
}

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
}

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

std::string fmt_fixed(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

}  // namespace

EvalReport evaluate(std::span<const PoseOutput> pred, std::span<const PoseOutput> gt,
                    const Skeleton& s, double fps, unsigned threads) {
  if (pred.size() != gt.size())
    throw InvalidArgument("evaluate: " + std::to_string(pred.size()) + " predicted frames vs " +
                          std::to_string(gt.size()) + " ground-truth frames");
  if (!(fps > 0)) throw InvalidArgument("evaluate: fps must be positive");
  EvalReport r;
  r.frames = pred.size();
  if (pred.empty()) return r;

  std::vector<FrameTerms> terms(pred.size());
  parallel_for(pred.size(), threads, [&](std::size_t i) { frame_terms(pred[i], gt[i], s, terms[i]); });
  for (std::size_t i = 1; i < terms.size(); ++i)
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const Vec3 dp = terms[i].pred_pos[j] - terms[i - 1].pred_pos[j];
      const Vec3 dg = terms[i].gt_pos[j] - terms[i - 1].gt_pos[j];
      terms[i].ve[j] = ((dp - dg) * fps).norm();
    }

  // Fixed frame order keeps the sums independent of the thread split.
  for (const auto& t : terms)
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      r.joint_re[j] += t.re[j];
      r.joint_pe[j] += t.pe[j];
      r.joint_ve[j] += t.ve[j];
    }
  const double n = static_cast<double>(terms.size());
  const double nv = static_cast<double>(terms.size() - 1);
  double re = 0, pe = 0, ve = 0;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    r.joint_re[j] = r.joint_re[j] / n * kRadToDeg;
    r.joint_pe[j] = r.joint_pe[j] / n * 100.0;
    r.joint_ve[j] = nv > 0 ? r.joint_ve[j] / nv * 100.0 : 0.0;
    re += r.joint_re[j];
    pe += r.joint_pe[j];
    ve += r.joint_ve[j];
  }
  r.mpjre = re / kNumJoints;
  r.mpjpe = pe / kNumJoints;
  r.mpjve = ve / kNumJoints;
  r.mpjpe_hand = 0.5 * (r.joint_pe[static_cast<std::size_t>(s.left_hand_index)] +
                        r.joint_pe[static_cast<std::size_t>(s.right_hand_index)]);
  return r;
}

std::string EvalReport::to_table(const Skeleton& s) const {
  std::string out;
  out += "frames       " + std::to_string(frames) + "\n";
  out += "MPJRE [deg]  " + fmt_fixed(mpjre) + "\n";
  out += "MPJPE [cm]   " + fmt_fixed(mpjpe) + "\n";
  out += "MPJPE-Hand   " + fmt_fixed(mpjpe_hand) + "\n";
  out += "MPJVE [cm/s] " + fmt_fixed(mpjve) + "\n\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-3s %-16s %12s %12s %14s\n", "#", "joint", "rot [deg]",
                "pos [cm]", "vel [cm/s]");
  out += line;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    std::snprintf(line, sizeof(line), "%-3zu %-16s %12.4f %12.4f %14.4f\n", j, s.names[j].c_str(),
                  joint_re[j], joint_pe[j], joint_ve[j]);
    out += line;
  }
  return out;
}

KeyValues EvalReport::to_kv(const Skeleton& s) const {
  KeyValues kv;
  const auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  kv.set("frames", std::to_string(frames));
  kv.set("mpjre_deg", num(mpjre));
  kv.set("mpjpe_cm", num(mpjpe));
  kv.set("mpjpe_hand_cm", num(mpjpe_hand));
  kv.set("mpjve_cm_s", num(mpjve));
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    kv.set("joint." + s.names[j] + ".re_deg", num(joint_re[j]));
    kv.set("joint." + s.names[j] + ".pe_cm", num(joint_pe[j]));
    kv.set("joint." + s.names[j] + ".ve_cm_s", num(joint_ve[j]));
  }
  return kv;
}

}  // namespace sparsepose
