#include "sparsepose/diff_geometry.hpp"

#include "sparsepose/errors.hpp"

namespace sparsepose::ad {

namespace {

Shape with_tail(Shape lead, std::initializer_list<std::size_t> tail) {
  lead.insert(lead.end(), tail);
  return lead;
}

// [B, 3, 3] block `j` of a [B, J, 3, 3] tensor.
Tensor joint_rot(const Tensor& stack, std::size_t j) {
  const std::size_t b = stack.dim(0);
  return reshape(slice(stack, 1, j, j + 1), {b, 3, 3});
}

}  // namespace

Tensor recover_6d(const Tensor& codes) {
  if (codes.ndim() == 0 || codes.dim(-1) != 6)
    throw ShapeError("recover_6d: expected [..., 6], got " + shape_str(codes.shape()));
  const Shape lead(codes.shape().begin(), codes.shape().end() - 1);
  const Tensor a1 = slice(codes, -1, 0, 3);
  const Tensor a2 = slice(codes, -1, 3, 6);
  const Tensor b1 = normalize(a1);
  const Tensor proj = sum_last(mul(b1, a2));
  const Tensor b2 = normalize(sub(a2, mul(proj, b1)));
  const Tensor b3 = cross(b1, b2);
  return reshape(concat({b1, b2, b3}, -1), with_tail(lead, {3, 3}));
}

Tensor matrix_to_6d(const Tensor& rot) {
  if (rot.ndim() < 2 || rot.dim(-1) != 3 || rot.dim(-2) != 3)
    throw ShapeError("matrix_to_6d: expected [..., 3, 3], got " + shape_str(rot.shape()));
  const Shape lead(rot.shape().begin(), rot.shape().end() - 2);
  return reshape(slice(rot, -2, 0, 2), with_tail(lead, {6}));
}

FkResult forward_kinematics(const Skeleton& s, const Tensor& global, const Tensor& local) {
  if (global.ndim() != 3 || global.dim(1) != 3 || global.dim(2) != 3)
    throw ShapeError("forward_kinematics: global must be [B, 3, 3], got " +
                     shape_str(global.shape()));
  const std::size_t b = global.dim(0);
  if (local.shape() != Shape{b, kNumLocal, 3, 3})
    throw ShapeError("forward_kinematics: local must be [B, 21, 3, 3], got " +
                     shape_str(local.shape()));
  std::vector<Tensor> orient(kNumJoints);
  std::vector<Tensor> pos(kNumJoints);
  orient[0] = global;
  pos[0] = Tensor::zeros({b, 3});
  for (std::size_t j = 1; j < kNumJoints; ++j) {
    const auto par = static_cast<std::size_t>(s.parent[j]);
    orient[j] = matmul(orient[par], joint_rot(local, j - 1));
    const Tensor offset = Tensor::from({3, 1}, {static_cast<Real>(s.offset[j].x()),
                                                static_cast<Real>(s.offset[j].y()),
                                                static_cast<Real>(s.offset[j].z())});
    pos[j] = add(pos[par], reshape(matmul(orient[par], offset), {b, 3}));
  }
  std::vector<Tensor> pos_rows, orient_rows;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    pos_rows.push_back(reshape(pos[j], {b, 1, 3}));
    orient_rows.push_back(reshape(orient[j], {b, 1, 3, 3}));
  }
  return {concat(pos_rows, 1), concat(orient_rows, 1)};
}

Tensor global_from_head(const Skeleton& s, const Tensor& head_orient, const Tensor& local) {
  Tensor chain;
  for (const int j : s.chain_to(s.head_index)) {
    if (j == s.root_index) continue;
    const Tensor l = joint_rot(local, static_cast<std::size_t>(j - 1));
    chain = chain.defined() ? matmul(chain, l) : l;
  }
  if (!chain.defined()) return head_orient;
  return matmul(head_orient, transpose(chain, 1, 2));
}

Tensor from_matrix(const RotMatrix& r) {
  std::vector<Real> v(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v[static_cast<std::size_t>(3 * i + j)] = static_cast<Real>(r.m(i, j));
  return Tensor::from({3, 3}, std::move(v));
}

Tensor from_vec3(const Vec3& v) {
  return Tensor::from({3}, {static_cast<Real>(v.x()), static_cast<Real>(v.y()),
                            static_cast<Real>(v.z())});
}

}  // namespace sparsepose::ad
