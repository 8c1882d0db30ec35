#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace svj {

struct ContrastConfig {
  double beta = 0.2;
};

struct BTTConfig {
  double gamma = 1.0;
};

// Batch objectives reduce with means so the scale does not depend on batch
// size. Each *_grad variant returns the loss and its partial derivatives.

double ebm_loss(std::span<const double> e_pos, std::span<const double> e_neg);
double l2_reg(std::span<const double> e_pos, std::span<const double> e_neg);
double contrast_loss(std::span<const double> e_pos, std::span<const double> e_neg,
                     const ContrastConfig& cfg = {});

struct ContrastGrad {
  double loss = 0.0;
  std::vector<double> d_pos;
  std::vector<double> d_neg;
};
ContrastGrad contrast_loss_grad(std::span<const double> e_pos,
                                std::span<const double> e_neg,
                                const ContrastConfig& cfg = {});

double aspect_mse(std::span<const double> pred, std::span<const double> target);

struct MseGrad {
  double loss = 0.0;
  std::vector<double> d_pred;
};
MseGrad aspect_mse_grad(std::span<const double> pred, std::span<const double> target);

// -log sigmoid(r_pos - r_neg), overflow-free for any finite input.
double bt_loss(double r_pos, double r_neg);

// -log[ e^{r_pos/g} / (e^{r_pos/g} + e^{r_neg/g} + 1) ]
double btt_loss(double r_pos, double r_neg, const BTTConfig& cfg = {});

// -log of the implied tie probability 1 / (e^{a/g} + e^{b/g} + 1).
double btt_tie_loss(double r_a, double r_b, const BTTConfig& cfg = {});

struct PairGrad {
  double loss = 0.0;
  double d_pos = 0.0;  // d loss / d first argument
  double d_neg = 0.0;  // d loss / d second argument
};
PairGrad bt_loss_grad(double r_pos, double r_neg);
PairGrad btt_loss_grad(double r_pos, double r_neg, const BTTConfig& cfg = {});
PairGrad btt_tie_loss_grad(double r_a, double r_b, const BTTConfig& cfg = {});

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
  bool passed = false;
};

struct GradCheckConfig {
  double step = 1e-5;
  double tolerance = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor); the floor keeps
  // coordinates whose true gradient is ~0 from dominating on round-off.
  double abs_floor = 1e-7;
  std::size_t samples = 20;  // 0 = every coordinate
  std::uint64_t seed = 0;
  // Five-point central stencil, O(step^4) truncation. Allows a larger step,
  // which cuts round-off on coordinates with small gradients.
  bool fourth_order = false;
};

// Compares `analytic` with central differences of `loss` around `point`.
// `loss` receives the perturbed point. Throws Error{kNonFinite}.
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> point,
                           std::span<const double> analytic,
                           const GradCheckConfig& cfg = {});

}  // namespace svj
