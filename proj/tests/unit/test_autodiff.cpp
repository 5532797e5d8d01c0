#include <doctest.h>

#include <cstring>

#include "sparsepose/autodiff.hpp"
#include "sparsepose/diff_geometry.hpp"
#include "sparsepose/errors.hpp"
#include "support.hpp"

using namespace sparsepose;
using namespace sparsepose::ad;
using sptest::check_gradients;
using sptest::random_tensor;

namespace {

using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

// Projects a tensor onto a fixed random direction so every output element
// contributes to the checked scalar.
Fn project(std::function<Tensor(const std::vector<Tensor>&)> op, std::uint64_t seed) {
  return [op, seed](const std::vector<Tensor>& in) {
    const Tensor out = op(in);
    std::mt19937_64 rng(seed);
    const Tensor w = random_tensor(rng, out.shape(), -1, 1, false);
    return sum(mul(out, w));
  };
}

void expect_grad_ok(const Fn& f, std::vector<Tensor> in, double tol = 1e-4) {
  const auto r = check_gradients(f, std::move(in));
  CHECK(r.max_rel < tol);
}

Tensor away_from_zero(std::mt19937_64& rng, Shape shape) {
  Tensor t = random_tensor(rng, std::move(shape), 0.2, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (auto& x : t.data())
    if (flip(rng)) x = -x;
  return t;
}

}  // namespace

TEST_CASE("backward of sum is all ones") {
  Tensor x = Tensor::from({5}, {1, 2, 3, 4, 5}, true);
  Tape tape;
  {
    TapeScope s(tape);
    tape.backward(sum(x));
  }
  for (const Real g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("l2_loss gradient is 2x") {
  Tensor x = Tensor::from({2}, {3, 4}, true);
  Tape tape;
  {
    TapeScope s(tape);
    const Tensor l = l2_loss(x, Tensor::zeros({2}));
    CHECK(l.item() == 25.0);
    tape.backward(l);
  }
  CHECK(x.grad()[0] == 6.0);
  CHECK(x.grad()[1] == 8.0);
}

TEST_CASE("backward errors") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  {
    Tape tape;
    TapeScope s(tape);
    const Tensor y = scale(x, 2);
    CHECK_THROWS_AS(tape.backward(y), InvalidArgument);
  }
  {
    Tape tape;
    TapeScope s(tape);
    CHECK_THROWS_AS(tape.backward(sum(Tensor::from({2}, {1, 2}))), InvalidArgument);
  }
  {
    Tape tape;
    TapeScope s(tape);
    const Tensor l = sum(x);
    tape.backward(l);
    CHECK(tape.consumed());
    CHECK_THROWS_AS(tape.backward(l), InvalidArgument);
  }
}

TEST_CASE("shape errors report both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({4, 5});
  try {
    (void)matmul(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 5]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(reshape(Tensor::zeros({2, 3}), {4}), ShapeError);
  CHECK_THROWS_AS(concat({Tensor::zeros({2, 3}), Tensor::zeros({3, 3})}, 1), ShapeError);
  CHECK_THROWS_AS(slice(Tensor::zeros({2, 3}), 1, 2, 4), ShapeError);
  CHECK_THROWS_AS(cross(Tensor::zeros({2, 2}), Tensor::zeros({2, 2})), ShapeError);
}

TEST_CASE("forward values of primitives") {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::from({2}, {10, 20});
  const Tensor ab = a + b;
  CHECK(std::vector<Real>(ab.data().begin(), ab.data().end()) == std::vector<Real>{11, 22, 13, 24});
  const Tensor t = transpose(a, 0, 1);
  CHECK(std::vector<Real>(t.data().begin(), t.data().end()) == std::vector<Real>{1, 3, 2, 4});
  const Tensor m = matmul(a, a);
  CHECK(std::vector<Real>(m.data().begin(), m.data().end()) == std::vector<Real>{7, 10, 15, 22});
  const Tensor c = concat({a, reshape(b, {1, 2})}, 0);
  CHECK(c.shape() == Shape{3, 2});
  const Tensor sl = slice(c, 0, 1, 3);
  CHECK(std::vector<Real>(sl.data().begin(), sl.data().end()) == std::vector<Real>{3, 4, 10, 20});
  const Tensor sm = softmax(Tensor::from({2}, {0, std::log(3.0)}));
  CHECK(sm.data()[0] == doctest::Approx(0.25));
  CHECK(sm.data()[1] == doctest::Approx(0.75));
  const Tensor cr = cross(Tensor::from({3}, {1, 0, 0}), Tensor::from({3}, {0, 1, 0}));
  CHECK(std::vector<Real>(cr.data().begin(), cr.data().end()) == std::vector<Real>{0, 0, 1});
  const Tensor n = normalize(Tensor::from({2}, {3, 4}));
  CHECK(n.data()[0] == doctest::Approx(0.6));
  CHECK(mean(a).item() == 2.5);
  CHECK(l1_loss(a, Tensor::zeros({2, 2})).item() == 2.5);
  const Tensor r = relu(Tensor::from({2}, {-1, 2}));
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 2.0);
  const Tensor g = gelu(Tensor::from({1}, {1.0}));
  CHECK(g.data()[0] == doctest::Approx(0.8411919906).epsilon(1e-3));
  const Tensor ln = layer_norm(Tensor::from({1, 4}, {1, 2, 3, 4}), Tensor::from({4}, {1, 1, 1, 1}),
                               Tensor::zeros({4}));
  double mu = 0;
  for (const Real x : ln.data()) mu += x;
  CHECK(std::abs(mu) < 1e-12);
}

TEST_CASE("finite-difference checks of every primitive") {
  std::mt19937_64 rng(42);
  auto t = [&](Shape s) { return random_tensor(rng, std::move(s)); };

  SUBCASE("add / sub / mul with broadcasting") {
    expect_grad_ok(project([](auto& in) { return add(in[0], in[1]); }, 1), {t({2, 3}), t({2, 3})});
    expect_grad_ok(project([](auto& in) { return add(in[0], in[1]); }, 2), {t({2, 3, 4}), t({4})});
    expect_grad_ok(project([](auto& in) { return sub(in[0], in[1]); }, 3), {t({2, 1, 4}), t({3, 1})});
    expect_grad_ok(project([](auto& in) { return mul(in[0], in[1]); }, 4), {t({2, 3, 4}), t({2, 1, 4})});
    expect_grad_ok(project([](auto& in) { return mul(in[0], in[1]); }, 5), {t({3}), t({2, 3})});
    expect_grad_ok(project([](auto& in) { return scale(in[0], 0.7); }, 6), {t({5})});
  }
  SUBCASE("matmul") {
    expect_grad_ok(project([](auto& in) { return matmul(in[0], in[1]); }, 7), {t({3, 4}), t({4, 2})});
    expect_grad_ok(project([](auto& in) { return matmul(in[0], in[1]); }, 8), {t({2, 3, 4}), t({4, 5})});
    expect_grad_ok(project([](auto& in) { return matmul(in[0], in[1]); }, 9), {t({2, 3, 4}), t({2, 4, 2})});
  }
  SUBCASE("transpose / reshape / concat / slice") {
    expect_grad_ok(project([](auto& in) { return transpose(in[0], 0, 2); }, 10), {t({2, 3, 4})});
    expect_grad_ok(project([](auto& in) { return transpose(in[0], -1, -2); }, 11), {t({2, 3, 4})});
    expect_grad_ok(project([](auto& in) { return reshape(in[0], {6, 4}); }, 12), {t({2, 3, 4})});
    expect_grad_ok(project([](auto& in) { return concat({in[0], in[1]}, 1); }, 13), {t({2, 3, 2}), t({2, 1, 2})});
    expect_grad_ok(project([](auto& in) { return concat({in[0], in[1]}, -1); }, 14), {t({2, 3}), t({2, 2})});
    expect_grad_ok(project([](auto& in) { return slice(in[0], 1, 1, 3); }, 15), {t({2, 4, 3})});
  }
  SUBCASE("softmax / layer_norm / activations") {
    expect_grad_ok(project([](auto& in) { return softmax(in[0]); }, 16), {t({3, 5})});
    expect_grad_ok(project([](auto& in) { return layer_norm(in[0], in[1], in[2]); }, 17),
                   {t({3, 6}), t({6}), t({6})});
    expect_grad_ok(project([](auto& in) { return relu(in[0]); }, 18), {away_from_zero(rng, {4, 5})});
    expect_grad_ok(project([](auto& in) { return gelu(in[0]); }, 19), {t({4, 5})});
  }
  SUBCASE("reductions and losses") {
    expect_grad_ok([](auto& in) { return sum(in[0]); }, {t({3, 4})});
    expect_grad_ok([](auto& in) { return mean(in[0]); }, {t({3, 4})});
    expect_grad_ok(project([](auto& in) { return sum_last(in[0]); }, 20), {t({3, 4})});
    Tensor a = t({3, 4});
    Tensor d = away_from_zero(rng, {3, 4});
    Tensor b = Tensor::from({3, 4}, std::vector<Real>(a.data().begin(), a.data().end()), true);
    for (std::size_t i = 0; i < b.numel(); ++i) b.data()[i] += d.data()[i];
    expect_grad_ok([](auto& in) { return l1_loss(in[0], in[1]); }, {a, b});
    expect_grad_ok([](auto& in) { return l2_loss(in[0], in[1]); }, {t({3, 4}), t({3, 4})});
  }
  SUBCASE("cross / normalize") {
    expect_grad_ok(project([](auto& in) { return cross(in[0], in[1]); }, 21), {t({4, 3}), t({4, 3})});
    expect_grad_ok(project([](auto& in) { return normalize(in[0]); }, 22), {t({4, 3})});
  }
  SUBCASE("Gram-Schmidt recovery and FK") {
    expect_grad_ok(project([](auto& in) { return recover_6d(in[0]); }, 23), {t({2, 6})});
    const Skeleton& s = Skeleton::standard();
    expect_grad_ok(project(
                       [&s](auto& in) {
                         const Tensor g = recover_6d(in[0]);
                         const Tensor l = recover_6d(in[1]);
                         return forward_kinematics(s, g, l).positions;
                       },
                       24),
                   {t({2, 6}), t({2, kNumLocal, 6})});
    expect_grad_ok(project(
                       [&s](auto& in) {
                         return global_from_head(s, recover_6d(in[0]), recover_6d(in[1]));
                       },
                       25),
                   {t({2, 6}), t({2, kNumLocal, 6})});
  }
}

TEST_CASE("differentiable geometry agrees with the double-precision versions") {
  std::mt19937_64 rng(43);
  const Skeleton& s = Skeleton::standard();
  for (int i = 0; i < 20; ++i) {
    const PoseOutput p = sptest::random_pose(rng);
    std::vector<Real> g6, l6;
    for (const double v : matrix_to_6d(p.global_orient).r) g6.push_back(v);
    for (const auto& l : p.local_rot)
      for (const double v : matrix_to_6d(l).r) l6.push_back(v);
    const Tensor g = recover_6d(Tensor::from({1, 6}, g6));
    const Tensor l = recover_6d(Tensor::from({1, kNumLocal, 6}, l6));
    const FkResult fk = forward_kinematics(s, g, l);
    PoseOutput at_origin = p;
    at_origin.root_pos = Vec3::Zero();
    const JointState st = sparsepose::forward_kinematics(s, at_origin);
    for (std::size_t j = 0; j < kNumJoints; ++j)
      for (int k = 0; k < 3; ++k) CHECK(std::abs(fk.positions.data()[3 * j + k] - st.pos[j][k]) < 1e-12);
    const Tensor back = matrix_to_6d(g);
    for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(back.data()[k] - g6[k]) < 1e-12);
  }
}

TEST_CASE("no-grad scope and inactive tapes record nothing") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tape tape;
  {
    TapeScope s(tape);
    {
      NoGradScope ng;
      (void)sum(scale(x, 3));
    }
    CHECK(tape.size() == 0);
    (void)sum(x);
    CHECK(tape.size() == 1);
  }
  CHECK(active_tape() == nullptr);
}

TEST_CASE("gradients are bit-identical across runs") {
  auto run = [] {
    std::mt19937_64 rng(9);
    Tensor a = random_tensor(rng, {4, 6});
    Tensor b = random_tensor(rng, {6, 3});
    Tape tape;
    {
      TapeScope s(tape);
      tape.backward(sum(gelu(matmul(a, b))));
    }
    std::vector<Real> g(a.grad().begin(), a.grad().end());
    g.insert(g.end(), b.grad().begin(), b.grad().end());
    return g;
  };
  const auto g1 = run();
  const auto g2 = run();
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(Real)) == 0);
}
