#include <doctest.h>

#include <cmath>
#include <vector>

#include "sparsepose/optim.hpp"

using namespace sparsepose;

TEST_CASE("zero gradient leaves parameters unchanged and counts the step") {
  std::vector<Real> p{1.0, -2.0, 3.0};
  const std::vector<Real> g(3, 0.0);
  AdamState st;
  AdamConfig cfg;
  adam_step(p, g, st, cfg);
  CHECK(p == std::vector<Real>{1.0, -2.0, 3.0});
  CHECK(st.step == 1);
  adam_step(p, {}, st, cfg);
  CHECK(p == std::vector<Real>{1.0, -2.0, 3.0});
  CHECK(st.step == 2);
}

TEST_CASE("first bias-corrected step is lr * g / (|g| + eps)") {
  AdamConfig cfg;
  cfg.lr = 1e-3;
  for (const double g : {2.5, -0.01, 1e-8, -3e-7}) {
    std::vector<Real> p{0.5};
    AdamState st;
    adam_step(p, std::vector<Real>{g}, st, cfg);
    const double expected = 0.5 - cfg.lr * g / (std::abs(g) + cfg.eps);
    CHECK(p[0] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("constant gradient: the step size tends to lr") {
  AdamConfig cfg;
  cfg.lr = 1e-2;
  std::vector<Real> p{0.0};
  AdamState st;
  double last = 0;
  for (int i = 0; i < 5000; ++i) {
    const double before = p[0];
    adam_step(p, std::vector<Real>{0.3}, st, cfg);
    last = before - p[0];
  }
  // m_hat = g and v_hat = g^2 exactly for a constant g.
  CHECK(last == doctest::Approx(cfg.lr).epsilon(1e-6));
}

TEST_CASE("moments follow the closed form for a two-step sequence") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  std::vector<Real> p{0.0};
  AdamState st;
  adam_step(p, std::vector<Real>{1.0}, st, cfg);
  adam_step(p, std::vector<Real>{-2.0}, st, cfg);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * -2.0;
  const double v = 0.999 * 0.001 * 1.0 + 0.001 * 4.0;
  CHECK(st.m[0] == doctest::Approx(m).epsilon(1e-14));
  CHECK(st.v[0] == doctest::Approx(v).epsilon(1e-14));
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  const double first = -0.1 * 1.0 / (1.0 + 1e-8);
  CHECK(p[0] == doctest::Approx(first - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("sgd step") {
  std::vector<Real> p{1.0, 2.0};
  sgd_step(p, std::vector<Real>{0.5, -1.0}, 0.1);
  CHECK(p[0] == doctest::Approx(0.95));
  CHECK(p[1] == doctest::Approx(2.1));
}
