#include "sparsepose/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <thread>

#include "sparsepose/errors.hpp"
#include "sparsepose/synth.hpp"

namespace sparsepose {

InferenceOptions PipelineConfig::inference() const {
  InferenceOptions o;
  o.no_stabilizer = flags.no_stabilizer;
  o.use_ik = use_ik;
  o.ik = ik;
  return o;
}

Skeleton PipelineConfig::skeleton() const {
  return skeleton_path ? Skeleton::load(*skeleton_path) : Skeleton::standard();
}

void PipelineConfig::check_files() const {
  if (skeleton_path && !std::filesystem::exists(*skeleton_path))
    throw IoError("skeleton file not found: " + skeleton_path->string());
  if (!std::filesystem::exists(checkpoint_path))
    throw IoError("checkpoint not found: " + checkpoint_path.string());
}

PoseOutput assemble_pose(const NetworkPrediction& pred, const std::vector<TrackerFrame>& devices,
                         const Skeleton& s, bool no_stabilizer) {
  const TrackerFrame& head = devices.at(0);
  PoseOutput out = decode(pred.global, pred.local, head, s);
  if (no_stabilizer) {
    out.global_orient = global_from_head(s, head.orient, out.local_rot);
    out.root_pos = root_from_head(s, out.global_orient, out.local_rot, head.pos);
  }
  if (pred.root) out.root_pos = head.pos + *pred.root;
  return out;
}

std::vector<PoseOutput> infer_stream(const PoseModel& model, const TrackerStream& stream,
                                     const Skeleton& s, const InferenceOptions& opt) {
  const std::size_t window = model.config().window;
  if (stream.devices() * kFeaturesPerDevice != model.config().input_dim)
    throw InvalidArgument("infer: stream has " + std::to_string(stream.devices()) +
                          " devices, model expects " +
                          std::to_string(model.config().input_dim / kFeaturesPerDevice));
  const WindowSet ws = make_windows(stream, window, 1);
  if (ws.too_short)
    throw InvalidArgument("infer: stream has " + std::to_string(stream.size()) +
                          " frames, need at least " + std::to_string(window + 1));

  const std::size_t n = ws.windows.size();
  const std::size_t batch = std::max<std::size_t>(1, opt.batch);
  const std::size_t batches = (n + batch - 1) / batch;
  std::vector<PoseOutput> poses(n);
  // Fixed batch boundaries; threads only decide who computes which batch.
  auto run = [&](std::size_t bi) {
    const std::size_t lo = bi * batch, hi = std::min(n, lo + batch);
    std::vector<const Window*> ptrs;
    for (std::size_t i = lo; i < hi; ++i) ptrs.push_back(&ws.windows[i]);
    const auto preds = model.predict(ptrs);
    std::vector<HandTargets> targets;
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& devices = stream.frames[ws.windows[i].target_frame];
      poses[i] = assemble_pose(preds[i - lo], devices, s, opt.no_stabilizer);
      targets.push_back({devices.at(1).pos, devices.at(2).pos});
    }
    if (opt.use_ik && opt.ik.iters > 0) {
      const auto refined = refine_arms_batch(std::span(poses).subspan(lo, hi - lo), s, targets, opt.ik);
      for (std::size_t i = lo; i < hi; ++i) poses[i] = refined[i - lo].pose;
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(batches)));
  if (threads == 1) {
    for (std::size_t bi = 0; bi < batches; ++bi) run(bi);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t bi = t; bi < batches; bi += threads) run(bi);
      });
  }
  return poses;
}

EvalReport combine_reports(const std::vector<EvalReport>& parts, const Skeleton& s) {
  EvalReport r;
  std::size_t vel_frames = 0;
  for (const auto& p : parts) {
    r.frames += p.frames;
    if (p.frames > 1) vel_frames += p.frames - 1;
  }
  if (r.frames == 0) return r;
  for (const auto& p : parts) {
    const double w = static_cast<double>(p.frames) / static_cast<double>(r.frames);
    const double wv = vel_frames && p.frames > 1
                          ? static_cast<double>(p.frames - 1) / static_cast<double>(vel_frames)
                          : 0.0;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      r.joint_re[j] += w * p.joint_re[j];
      r.joint_pe[j] += w * p.joint_pe[j];
      r.joint_ve[j] += wv * p.joint_ve[j];
    }
  }
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    r.mpjre += r.joint_re[j] / kNumJoints;
    r.mpjpe += r.joint_pe[j] / kNumJoints;
    r.mpjve += r.joint_ve[j] / kNumJoints;
  }
  r.mpjpe_hand = 0.5 * (r.joint_pe[static_cast<std::size_t>(s.left_hand_index)] +
                        r.joint_pe[static_cast<std::size_t>(s.right_hand_index)]);
  return r;
}

EvalReport evaluate_clips(const PoseModel& model, const std::vector<MotionClip>& clips,
                          const Skeleton& s, const InferenceOptions& opt) {
  const std::size_t window = model.config().window;
  std::vector<EvalReport> parts;
  for (const auto& clip : clips) {
    if (clip.size() < window + 1) continue;
    const TrackerStream stream = extract_trackers(clip, s);
    const auto pred = infer_stream(model, stream, s, opt);
    std::vector<PoseOutput> gt;
    for (std::size_t t = window; t < clip.size(); ++t) gt.push_back(to_pose(clip.frames[t]));
    parts.push_back(evaluate(pred, gt, s, clip.fps, opt.threads));
  }
  return combine_reports(parts, s);
}

namespace {

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1) + 0.5);
  return v[std::min(idx, v.size() - 1)];
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (const double x : v) s += x;
  return v.empty() ? 0 : s / static_cast<double>(v.size());
}

}  // namespace

BenchReport bench(const PoseModel& model, const Skeleton& s, std::size_t frames,
                  const IkConfig& ik, std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  const std::size_t window = model.config().window;
  const MotionClip clip = synth_motion(MotionKind::kComposite,
                                       static_cast<double>(frames + window + 1) / 60.0, seed);
  const TrackerStream stream = extract_trackers(clip, s);
  const WindowSet ws = make_windows(stream, window, 1);

  BenchReport r;
  r.ik_iters = ik.iters;
  std::vector<double> net_ms, ik_ms;
  for (std::size_t i = 0; i < ws.windows.size() && i < frames; ++i) {
    const Window& w = ws.windows[i];
    const auto t0 = clock::now();
    const NetworkPrediction pred = model.predict(w);
    const auto t1 = clock::now();
    const auto& devices = stream.frames[w.target_frame];
    const PoseOutput pose = assemble_pose(pred, devices, s, false);
    net_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    if (ik.iters > 0) {
      const auto t2 = clock::now();
      const IkResult res = refine_arms(pose, s, {devices[1].pos, devices[2].pos}, ik);
      const auto t3 = clock::now();
      (void)res;
      ik_ms.push_back(std::chrono::duration<double, std::milli>(t3 - t2).count() /
                      static_cast<double>(ik.iters));
    }
    ++r.frames;
  }
  r.net_mean_ms = mean(net_ms);
  r.net_p95_ms = percentile(net_ms, 0.95);
  r.ik_iter_mean_ms = mean(ik_ms);
  r.ik_iter_p95_ms = percentile(ik_ms, 0.95);
  return r;
}

std::string BenchReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "frames              %zu\n"
                "%-19s %12s %12s\n"
                "%-19s %12.4f %12.4f\n"
                "%-19s %12.4f %12.4f\n"
                "network throughput  %.1f frames/s\n"
                "ik iterations/frame %zu\n",
                frames, "", "mean [ms]", "p95 [ms]", "network per frame", net_mean_ms, net_p95_ms,
                "ik per iteration", ik_iter_mean_ms, ik_iter_p95_ms, net_fps(), ik_iters);
  return buf;
}

}  // namespace sparsepose
