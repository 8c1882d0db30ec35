#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "svj/error.hpp"
#include "svj/losses.hpp"
#include "svj/rng.hpp"

using namespace svj;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected svj::Error");
  return ErrorCode::kConfigError;
}

using V = std::vector<double>;

// Independent reference: direct formulas in long double.
double ref_bt(double a, double b) {
  const long double pa = std::exp(static_cast<long double>(a));
  const long double pb = std::exp(static_cast<long double>(b));
  return static_cast<double>(-std::log(pa / (pa + pb)));
}

double ref_btt(double a, double b, double g) {
  const long double ea = std::exp(static_cast<long double>(a / g));
  const long double eb = std::exp(static_cast<long double>(b / g));
  return static_cast<double>(-std::log(ea / (ea + eb + 1.0L)));
}

}  // namespace

TEST_CASE("ebm_loss arithmetic") {
  CHECK(ebm_loss(V{0}, V{0}) == 0.0);
  CHECK(ebm_loss(V{1}, V{3}) == -2.0);
  CHECK(ebm_loss(V{1, 3}, V{2}) == 0.0);
  CHECK(code_of([] { ebm_loss(V{}, V{1}); }) == ErrorCode::kEmptyBatch);
  CHECK(code_of([] { ebm_loss(V{1}, V{}); }) == ErrorCode::kEmptyBatch);
}

TEST_CASE("l2_reg arithmetic and sign invariance") {
  CHECK(l2_reg(V{0, 0}, V{0}) == 0.0);
  CHECK(l2_reg(V{1}, V{3}) == 10.0);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    V p(4), n(3), mp(4), mn(3);
    for (std::size_t k = 0; k < 4; ++k) mp[k] = -(p[k] = standard_normal(rng));
    for (std::size_t k = 0; k < 3; ++k) mn[k] = -(n[k] = standard_normal(rng));
    CHECK(l2_reg(mp, mn) == l2_reg(p, n));
  }
}

TEST_CASE("contrast_loss composition") {
  CHECK(contrast_loss(V{1}, V{3}) == doctest::Approx(0.0));
  CHECK(contrast_loss(V{1}, V{3}, {0.0}) == ebm_loss(V{1}, V{3}));
  CHECK(code_of([] { contrast_loss(V{}, V{}); }) == ErrorCode::kEmptyBatch);
}

TEST_CASE("contrast_loss minimizer over scalar energies") {
  const double beta = 0.2;
  const V pos{-1.0 / (2 * beta)}, neg{1.0 / (2 * beta)};
  CHECK(contrast_loss(pos, neg, {beta}) == doctest::Approx(-2.5).epsilon(1e-14));
  const auto g = contrast_loss_grad(pos, neg, {beta});
  CHECK(std::abs(g.d_pos[0]) < 1e-14);
  CHECK(std::abs(g.d_neg[0]) < 1e-14);
  // The loss is convex in the energies, so every other point is above the floor.
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const V p{3 * standard_normal(rng), 3 * standard_normal(rng)};
    const V n{3 * standard_normal(rng)};
    CHECK(contrast_loss(p, n, {beta}) >= -2.5 - 1e-12);
  }
}

TEST_CASE("contrast_loss gradient matches the closed form and finite differences") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    V p(5), n(3);
    for (double& x : p) x = standard_normal(rng);
    for (double& x : n) x = standard_normal(rng);
    const double beta = 0.2;
    const auto g = contrast_loss_grad(p, n, {beta});
    CHECK(g.loss == doctest::Approx(contrast_loss(p, n, {beta})));
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(g.d_pos[i] == doctest::Approx(1.0 / 5 + 2 * beta * p[i] / 5).epsilon(1e-14));
    }
    for (std::size_t i = 0; i < n.size(); ++i) {
      CHECK(g.d_neg[i] == doctest::Approx(-1.0 / 3 + 2 * beta * n[i] / 3).epsilon(1e-14));
    }
    V point = p;
    point.insert(point.end(), n.begin(), n.end());
    V analytic = g.d_pos;
    analytic.insert(analytic.end(), g.d_neg.begin(), g.d_neg.end());
    const auto report = grad_check(
        [&](std::span<const double> x) {
          return contrast_loss(x.subspan(0, 5), x.subspan(5, 3), {beta});
        },
        point, analytic, {1e-5, 1e-6, 1e-7, 0, 0});
    CHECK(report.passed);
    CHECK(report.max_rel_error <= 1e-6);
    CHECK(report.coords_checked == 8);
  }
}

TEST_CASE("aspect_mse arithmetic") {
  CHECK(aspect_mse(V{1, 2, 3}, V{1, 2, 3}) == 0.0);
  CHECK(aspect_mse(V{3, 3}, V{1, 5}) == 4.0);
  CHECK(aspect_mse(V{3, 3, 0}, V{1, 5, 1}) == aspect_mse(V{0, 3, 3}, V{1, 1, 5}));
  CHECK(code_of([] { aspect_mse(V{1}, V{1, 2}); }) == ErrorCode::kLengthMismatch);
  const auto g = aspect_mse_grad(V{3, 3}, V{1, 5});
  CHECK(g.loss == 4.0);
  CHECK(g.d_pred == V{2.0, -2.0});
}

TEST_CASE("bt_loss values") {
  CHECK(bt_loss(0.7, 0.7) == doctest::Approx(std::numbers::ln2).epsilon(1e-14));
  CHECK(bt_loss(std::log(3.0), 0.0) == doctest::Approx(0.287682).epsilon(1e-6));
  CHECK(bt_loss(std::log(3.0), 0.0) == doctest::Approx(-std::log(0.75)).epsilon(1e-14));
  CHECK(bt_loss(1000.0, 0.0) >= 0.0);
  CHECK(bt_loss(1000.0, 0.0) < 1e-300);
  CHECK(std::isfinite(bt_loss(-1e4, 1e4)));
  CHECK(bt_loss(-1e4, 1e4) == doctest::Approx(2e4));
  CHECK(std::isfinite(bt_loss(1e4, -1e4)));
}

TEST_CASE("bt_loss agrees with the direct formula") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double a = 5 * standard_normal(rng), b = 5 * standard_normal(rng);
    CHECK(bt_loss(a, b) == doctest::Approx(ref_bt(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("bt_loss properties") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const double a = 4 * standard_normal(rng), b = 4 * standard_normal(rng);
    const double c = 50 * standard_normal(rng);
    CHECK(bt_loss(a, b) + bt_loss(b, a) >= 2 * std::numbers::ln2 - 1e-15);
    CHECK(bt_loss(a + c, b + c) == doctest::Approx(bt_loss(a, b)).epsilon(1e-9));
    CHECK(bt_loss(a + 0.1, b) < bt_loss(a, b));
  }
  CHECK(bt_loss(0.3, 0.3) + bt_loss(0.3, 0.3) == doctest::Approx(2 * std::numbers::ln2));
}

TEST_CASE("btt_loss values and limits") {
  CHECK(btt_loss(0, 0) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  // Tie probability at the origin is 1 - 1/3 - 1/3.
  CHECK(std::exp(-btt_tie_loss(0, 0)) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(btt_loss(1.0, 0.5, {1e-3}) < 1e-100);
  CHECK(code_of([] { btt_loss(0, 0, {0.0}); }) == ErrorCode::kConfigError);
  CHECK(code_of([] { btt_loss(0, 0, {-1.0}); }) == ErrorCode::kConfigError);
  CHECK(std::isfinite(btt_loss(1e4, -1e4)));
  CHECK(std::isfinite(btt_loss(-1e4, 1e4)));
  CHECK(std::isfinite(btt_tie_loss(1e4, 1e4)));
}

TEST_CASE("btt_loss agrees with the direct formula and is not shift invariant") {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const double a = 3 * standard_normal(rng), b = 3 * standard_normal(rng);
    const double g = 0.3 + uniform01(rng) * 2;
    CHECK(btt_loss(a, b, {g}) == doctest::Approx(ref_btt(a, b, g)).epsilon(1e-12));
    CHECK(btt_loss(a + 0.1, b, {g}) < btt_loss(a, b, {g}));
  }
  CHECK(btt_loss(2.0, 1.0) != doctest::Approx(btt_loss(0.0, -1.0)));
}

TEST_CASE("preference gradients match closed forms and finite differences") {
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const double a = 3 * standard_normal(rng), b = 3 * standard_normal(rng);
    const double g = 0.2 + 2 * uniform01(rng);
    const V point{a, b};

    const auto bt = bt_loss_grad(a, b);
    const double s = 1.0 / (1.0 + std::exp(a - b));  // 1 - P(first)
    CHECK(bt.d_pos == doctest::Approx(-s).epsilon(1e-12));
    CHECK(bt.d_neg == doctest::Approx(s).epsilon(1e-12));

    const auto btt = btt_loss_grad(a, b, {g});
    const double ea = std::exp(a / g), eb = std::exp(b / g);
    const double p = ea / (ea + eb + 1.0);
    CHECK(btt.d_pos == doctest::Approx(-(1.0 - p) / g).epsilon(1e-10));
    CHECK(btt.d_neg == doctest::Approx(eb / (ea + eb + 1.0) / g).epsilon(1e-10));

    const auto tie = btt_tie_loss_grad(a, b, {g});
    // Round-off in the difference quotient is about 1e-16 |loss| / h, so
    // coordinates with gradients near 1e-6 need an absolute floor.
    const GradCheckConfig cfg{1e-5, 1e-6, 1e-4, 0, 0};
    CHECK(grad_check([&](std::span<const double> x) { return bt_loss(x[0], x[1]); }, point,
                     V{bt.d_pos, bt.d_neg}, cfg)
              .passed);
    CHECK(grad_check([&](std::span<const double> x) { return btt_loss(x[0], x[1], {g}); },
                     point, V{btt.d_pos, btt.d_neg}, cfg)
              .passed);
    CHECK(grad_check([&](std::span<const double> x) { return btt_tie_loss(x[0], x[1], {g}); },
                     point, V{tie.d_pos, tie.d_neg}, cfg)
              .passed);
  }
}

TEST_CASE("grad_check on a quadratic") {
  Rng rng(8);
  V x(30), grad(30);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = standard_normal(rng);
    grad[i] = 2.0 * (i + 1.0) * x[i];
  }
  const auto f = [](std::span<const double> p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (i + 1.0) * p[i] * p[i];
    return s;
  };
  const auto r = grad_check(f, x, grad, {1e-5, 1e-8, 1e-7, 0, 0});
  CHECK(r.passed);
  CHECK(r.max_rel_error <= 1e-8);

  grad[3] += 1.0;
  CHECK_FALSE(grad_check(f, x, grad, {1e-5, 1e-8, 1e-7, 0, 0}).passed);

  CHECK(code_of([&] {
          grad_check([](std::span<const double>) { return NAN; }, x, grad);
        }) == ErrorCode::kNonFinite);
}

TEST_CASE("grad_check samples a bounded number of coordinates") {
  V x(100, 1.0), grad(100, 2.0);
  const auto f = [](std::span<const double> p) {
    double s = 0.0;
    for (double v : p) s += v * v;
    return s;
  };
  const auto r = grad_check(f, x, grad, {1e-5, 1e-8, 1e-7, 10, 3});
  CHECK(r.coords_checked == 10);
  CHECK(r.passed);
}

TEST_CASE("five-point stencil is exact on quartics where two points are not") {
  // f = sum x^4: the two-point error is h^2 f'''/6 = 4 h^2 x, the five-point
  // stencil has none below degree 5.
  const V x = {1.3, -0.7, 2.1};
  V grad(3);
  for (std::size_t i = 0; i < 3; ++i) grad[i] = 4.0 * x[i] * x[i] * x[i];
  const auto f = [](std::span<const double> p) {
    double s = 0.0;
    for (double v : p) s += v * v * v * v;
    return s;
  };
  GradCheckConfig cfg{0.1, 1e-10, 1e-7, 0, 0};
  CHECK_FALSE(grad_check(f, x, grad, cfg).passed);
  cfg.fourth_order = true;
  const auto r = grad_check(f, x, grad, cfg);
  CHECK(r.passed);
  CHECK(r.coords_checked == 3);
}
