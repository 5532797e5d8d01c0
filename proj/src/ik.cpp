#include "sparsepose/ik.hpp"

#include "sparsepose/autodiff.hpp"
#include "sparsepose/diff_geometry.hpp"
#include "sparsepose/errors.hpp"
#include "sparsepose/optim.hpp"

namespace sparsepose {

namespace {

// Per frame and side: [shoulder, elbow] codes. Parents of the shoulders
// are frozen, so only the shoulder -> elbow -> wrist segment is rebuilt.
struct ArmProblem {
  std::size_t frames = 0;
  std::vector<Real> codes;      // [B, 2 sides, 2 joints, 6]
  std::vector<Real> collar;     // [B*2, 3, 3]
  std::vector<Real> shoulder;   // [B*2, 3]
  std::vector<Real> target;     // [B*2, 3]
};

double wrist_error(const Skeleton& s, const PoseOutput& p, const HandTargets& t) {
  const JointState st = forward_kinematics(s, p);
  return (st.pos[static_cast<std::size_t>(s.left_hand_index)] - t.left).squaredNorm() +
         (st.pos[static_cast<std::size_t>(s.right_hand_index)] - t.right).squaredNorm();
}

ad::Tensor arm_objective(const ArmProblem& pb, const ad::Tensor& codes, const Skeleton& s) {
  using namespace ad;
  const std::size_t n = pb.frames * 2;
  const Tensor rot = reshape(recover_6d(codes), {n, 2, 3, 3});
  const Tensor ls = reshape(slice(rot, 1, 0, 1), {n, 3, 3});
  const Tensor le = reshape(slice(rot, 1, 1, 2), {n, 3, 3});
  std::vector<Real> off_e(n * 3), off_w(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    const bool left = i % 2 == 0;
    const Vec3& e = s.offset[static_cast<std::size_t>(left ? s.left_elbow_index : s.right_elbow_index)];
    const Vec3& w = s.offset[static_cast<std::size_t>(left ? s.left_hand_index : s.right_hand_index)];
    for (int k = 0; k < 3; ++k) {
      off_e[3 * i + static_cast<std::size_t>(k)] = static_cast<Real>(e[k]);
      off_w[3 * i + static_cast<std::size_t>(k)] = static_cast<Real>(w[k]);
    }
  }
  const Tensor collar = Tensor::from({n, 3, 3}, pb.collar);
  const Tensor shoulder = Tensor::from({n, 3}, pb.shoulder);
  const Tensor os = matmul(collar, ls);
  const Tensor elbow = shoulder + reshape(matmul(os, Tensor::from({n, 3, 1}, std::move(off_e))), {n, 3});
  const Tensor oe = matmul(os, le);
  const Tensor wrist = elbow + reshape(matmul(oe, Tensor::from({n, 3, 1}, std::move(off_w))), {n, 3});
  return l2_loss(wrist, Tensor::from({n, 3}, pb.target));
}

void put_matrix(std::vector<Real>& dst, const Mat3& m) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) dst.push_back(static_cast<Real>(m(r, c)));
}

}  // namespace

std::vector<IkResult> refine_arms_batch(std::span<const PoseOutput> poses, const Skeleton& s,
                                        std::span<const HandTargets> targets, const IkConfig& cfg) {
  if (poses.size() != targets.size())
    throw InvalidArgument("refine_arms: one target pair per pose required");
  if (!(cfg.lr >= 0)) throw InvalidArgument("refine_arms: negative learning rate");
  std::vector<IkResult> out(poses.size());
  for (std::size_t b = 0; b < poses.size(); ++b) {
    out[b].pose = poses[b];
    out[b].initial_error = out[b].final_error = wrist_error(s, poses[b], targets[b]);
  }
  if (cfg.iters == 0 || poses.empty()) return out;

  const int sides[2][3] = {{s.left_shoulder_index, s.left_elbow_index, s.left_hand_index},
                           {s.right_shoulder_index, s.right_elbow_index, s.right_hand_index}};
  ArmProblem pb;
  pb.frames = poses.size();
  for (std::size_t b = 0; b < poses.size(); ++b) {
    const JointState st = forward_kinematics(s, poses[b]);
    for (int side = 0; side < 2; ++side) {
      const int sh = sides[side][0], el = sides[side][1];
      for (const int j : {sh, el}) {
        const Rotation6D c = matrix_to_6d(poses[b].local(j));
        for (const double v : c.r) pb.codes.push_back(static_cast<Real>(v));
      }
      put_matrix(pb.collar, st.orient[static_cast<std::size_t>(s.parent[static_cast<std::size_t>(sh)])].m);
      const Vec3& p = st.pos[static_cast<std::size_t>(sh)];
      const Vec3& t = side == 0 ? targets[b].left : targets[b].right;
      for (int k = 0; k < 3; ++k) {
        pb.shoulder.push_back(static_cast<Real>(p[k]));
        pb.target.push_back(static_cast<Real>(t[k]));
      }
    }
  }

  ad::Tensor codes = ad::Tensor::from({pb.frames, 2, 2, 6}, pb.codes, true);
  AdamState adam;
  AdamConfig ac;
  ac.lr = cfg.lr;
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    codes.zero_grad();
    ad::Tape tape;
    {
      ad::TapeScope scope(tape);
      tape.backward(arm_objective(pb, codes, s));
    }
    if (cfg.optimizer == IkOptimizer::kAdam)
      adam_step(codes.data(), codes.grad(), adam, ac);
    else
      sgd_step(codes.data(), codes.grad(), cfg.lr);
  }

  const auto c = codes.data();
  for (std::size_t b = 0; b < pb.frames; ++b) {
    PoseOutput refined = poses[b];
    for (int side = 0; side < 2; ++side)
      for (int k = 0; k < 2; ++k) {
        Rotation6D r;
        const std::size_t base = ((b * 2 + static_cast<std::size_t>(side)) * 2 + static_cast<std::size_t>(k)) * 6;
        for (std::size_t q = 0; q < 6; ++q) r.r[q] = static_cast<double>(c[base + q]);
        refined.local(sides[side][k]) = recover_6d(r);
      }
    const double e = wrist_error(s, refined, targets[b]);
    if (e <= out[b].initial_error) {
      out[b].pose = refined;
      out[b].final_error = e;
    } else {
      out[b].fell_back = true;
    }
  }
  return out;
}

IkResult refine_arms(const PoseOutput& pose, const Skeleton& s, const HandTargets& targets,
                     const IkConfig& cfg) {
  return refine_arms_batch(std::span(&pose, 1), s, std::span(&targets, 1), cfg).front();
}

}  // namespace sparsepose
