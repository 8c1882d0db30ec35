#include "svj/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svj/error.hpp"
#include "svj/rng.hpp"

namespace svj {
namespace {

void require_batch(std::span<const double> e_pos, std::span<const double> e_neg) {
  if (e_pos.empty() || e_neg.empty()) {
    fail(ErrorCode::kEmptyBatch, "positive and negative batches must be non-empty");
  }
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double mean_sq(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s / static_cast<double>(v.size());
}

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(e^a + e^b + e^0) and the three softmax weights.
struct LogSumExp3 {
  double value;
  double wa, wb, w0;
};

LogSumExp3 lse3(double a, double b) {
  const double m = std::max({a, b, 0.0});
  const double ea = std::exp(a - m), eb = std::exp(b - m), e0 = std::exp(-m);
  const double s = ea + eb + e0;
  return {m + std::log(s), ea / s, eb / s, e0 / s};
}

void require_gamma(const BTTConfig& cfg) {
  if (!(cfg.gamma > 0.0)) fail(ErrorCode::kConfigError, "gamma must be positive");
}

}  // namespace

double ebm_loss(std::span<const double> e_pos, std::span<const double> e_neg) {
  require_batch(e_pos, e_neg);
  return mean(e_pos) - mean(e_neg);
}

double l2_reg(std::span<const double> e_pos, std::span<const double> e_neg) {
  require_batch(e_pos, e_neg);
  return mean_sq(e_pos) + mean_sq(e_neg);
}

double contrast_loss(std::span<const double> e_pos, std::span<const double> e_neg,
                     const ContrastConfig& cfg) {
  return ebm_loss(e_pos, e_neg) + cfg.beta * l2_reg(e_pos, e_neg);
}

ContrastGrad contrast_loss_grad(std::span<const double> e_pos,
                                std::span<const double> e_neg,
                                const ContrastConfig& cfg) {
  ContrastGrad g;
  g.loss = contrast_loss(e_pos, e_neg, cfg);
  const double np = static_cast<double>(e_pos.size());
  const double nn = static_cast<double>(e_neg.size());
  g.d_pos.reserve(e_pos.size());
  g.d_neg.reserve(e_neg.size());
  for (double e : e_pos) g.d_pos.push_back((1.0 + 2.0 * cfg.beta * e) / np);
  for (double e : e_neg) g.d_neg.push_back((-1.0 + 2.0 * cfg.beta * e) / nn);
  return g;
}

double aspect_mse(std::span<const double> pred, std::span<const double> target) {
  return aspect_mse_grad(pred, target).loss;
}

MseGrad aspect_mse_grad(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    fail(ErrorCode::kLengthMismatch, "prediction and target lengths differ");
  }
  if (pred.empty()) fail(ErrorCode::kLengthMismatch, "empty aspect vectors");
  MseGrad g;
  const double n = static_cast<double>(pred.size());
  g.d_pred.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    g.loss += d * d;
    g.d_pred[i] = 2.0 * d / n;
  }
  g.loss /= n;
  return g;
}

double bt_loss(double r_pos, double r_neg) { return softplus(r_neg - r_pos); }

PairGrad bt_loss_grad(double r_pos, double r_neg) {
  // d/d r_pos softplus(r_neg - r_pos) = -sigmoid(r_neg - r_pos)
  const double s = logistic(r_neg - r_pos);
  return {bt_loss(r_pos, r_neg), -s, s};
}

double btt_loss(double r_pos, double r_neg, const BTTConfig& cfg) {
  return btt_loss_grad(r_pos, r_neg, cfg).loss;
}

PairGrad btt_loss_grad(double r_pos, double r_neg, const BTTConfig& cfg) {
  require_gamma(cfg);
  const double a = r_pos / cfg.gamma, b = r_neg / cfg.gamma;
  const LogSumExp3 l = lse3(a, b);
  return {l.value - a, (l.wa - 1.0) / cfg.gamma, l.wb / cfg.gamma};
}

double btt_tie_loss(double r_a, double r_b, const BTTConfig& cfg) {
  return btt_tie_loss_grad(r_a, r_b, cfg).loss;
}

PairGrad btt_tie_loss_grad(double r_a, double r_b, const BTTConfig& cfg) {
  require_gamma(cfg);
  const LogSumExp3 l = lse3(r_a / cfg.gamma, r_b / cfg.gamma);
  return {l.value, l.wa / cfg.gamma, l.wb / cfg.gamma};
}

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> point,
                           std::span<const double> analytic,
                           const GradCheckConfig& cfg) {
  if (point.size() != analytic.size()) {
    fail(ErrorCode::kLengthMismatch, "point and gradient sizes differ");
  }
  std::vector<std::size_t> coords;
  if (cfg.samples == 0 || cfg.samples >= point.size()) {
    coords.resize(point.size());
    std::iota(coords.begin(), coords.end(), 0);
  } else {
    Rng rng(cfg.seed);
    std::vector<std::size_t> all(point.size());
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    coords.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.samples));
  }

  GradCheckReport report;
  std::vector<double> x(point.begin(), point.end());
  for (std::size_t i : coords) {
    const double orig = x[i];
    auto at = [&](double offset) {
      x[i] = orig + offset;
      const double v = loss(x);
      x[i] = orig;
      if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, "non-finite value during gradient check");
      return v;
    };
    if (!std::isfinite(analytic[i])) {
      fail(ErrorCode::kNonFinite, "non-finite value during gradient check");
    }
    const double h = cfg.step;
    const double numeric =
        cfg.fourth_order
            ? (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
            : (at(h) - at(-h)) / (2.0 * h);
    const double abs_err = std::abs(numeric - analytic[i]);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), cfg.abs_floor});
    const double rel = abs_err / denom;
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (report.coords_checked == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
    ++report.coords_checked;
  }
  report.passed = report.max_rel_error <= cfg.tolerance;
  return report;
}

}  // namespace svj
