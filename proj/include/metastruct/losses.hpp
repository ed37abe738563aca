#pragma once

// Determinant-based mutual information (DMI) loss and soft-IoU loss for a binary
// probability map P against a mask S.
//
// The joint matrix is Q = 𝒫𝒮ᵀ / N with 𝒫 = [P; 1−P] and 𝒮 = [S; 1−S], so Q(a, b) sums
// 𝒫_a(x)·𝒮_b(x) over pixels. For a 2×2 joint distribution det Q = Q(0,0) − π_P·π_S, the
// covariance of P and S; the DMI loss is −ln|det Q|.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "metastruct/image.hpp"

namespace metastruct {

inline constexpr double kDetClamp = 1e-12;
inline constexpr double kIouSmoothing = 1e-7;

/// Row a is 𝒫_a (0: P, 1: 1−P); column b is 𝒮_b (0: S, 1: 1−S).
struct JointMatrix {
  std::array<std::array<double, 2>, 2> q{};

  double operator()(int a, int b) const { return q[a][b]; }
  double determinant() const { return q[0][0] * q[1][1] - q[0][1] * q[1][0]; }
};

inline JointMatrix joint_matrix(std::span<const double> p, std::span<const double> s) {
  if (p.size() != s.size() || p.empty()) throw Error("joint_matrix: size mismatch");
  JointMatrix j;
  for (std::size_t i = 0; i < p.size(); ++i) {
    j.q[0][0] += p[i] * s[i];
    j.q[0][1] += p[i] * (1.0 - s[i]);
    j.q[1][0] += (1.0 - p[i]) * s[i];
    j.q[1][1] += (1.0 - p[i]) * (1.0 - s[i]);
  }
  const double n = static_cast<double>(p.size());
  for (auto& row : j.q)
    for (double& v : row) v /= n;
  return j;
}

inline JointMatrix joint_matrix(const ProbImage& p, const LabelImage& s) {
  require_same_shape(p, s, "joint_matrix");
  require_binary(s, "joint_matrix");
  const auto sv = as_reals(s);
  return joint_matrix(p.values(), sv);
}

inline double dmi_loss(std::span<const double> p, std::span<const double> s) {
  const double det = joint_matrix(p, s).determinant();
  return -std::log(std::max(std::abs(det), kDetClamp));
}

inline double dmi_loss(const ProbImage& p, const LabelImage& s) {
  require_same_shape(p, s, "dmi_loss");
  require_binary(s, "dmi_loss");
  const auto sv = as_reals(s);
  return dmi_loss(p.values(), sv);
}

/// ∂(−ln|det Q|)/∂p(x) = −(s(x)·π₀ − (1−s(x))·π₁) / (N·det), where π₁ = mean(S) and
/// π₀ = 1 − π₁. Zero when the determinant sits on the clamp.
inline std::vector<double> dmi_gradient(std::span<const double> p, std::span<const double> s) {
  const JointMatrix j = joint_matrix(p, s);
  const double det = j.determinant();
  std::vector<double> grad(p.size(), 0.0);
  if (std::abs(det) <= kDetClamp) return grad;
  const double pi1 = j(0, 0) + j(1, 0);
  const double pi0 = j(0, 1) + j(1, 1);
  const double scale = -1.0 / (static_cast<double>(p.size()) * det);
  for (std::size_t i = 0; i < p.size(); ++i) grad[i] = scale * (s[i] * pi0 - (1.0 - s[i]) * pi1);
  return grad;
}

inline ProbImage dmi_gradient(const ProbImage& p, const LabelImage& s) {
  require_same_shape(p, s, "dmi_gradient");
  require_binary(s, "dmi_gradient");
  const auto sv = as_reals(s);
  const auto g = dmi_gradient(p.values(), sv);
  ProbImage out(p.width(), p.height());
  std::copy(g.begin(), g.end(), out.values().begin());
  return out;
}

struct LossWithGradient {
  double value = 0.0;
  std::vector<double> gradient;
};

/// 1 − (Σ p·s + ε)/(Σ (p + s − p·s) + ε).
inline LossWithGradient soft_iou_loss(std::span<const double> p, std::span<const double> s) {
  if (p.size() != s.size()) throw Error("soft_iou_loss: size mismatch");
  double inter = kIouSmoothing, uni = kIouSmoothing;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += p[i] * s[i];
    uni += p[i] + s[i] - p[i] * s[i];
  }
  LossWithGradient out{1.0 - inter / uni, std::vector<double>(p.size())};
  for (std::size_t i = 0; i < p.size(); ++i)
    out.gradient[i] = -(s[i] * uni - inter * (1.0 - s[i])) / (uni * uni);
  return out;
}

inline LossWithGradient soft_iou_loss(const ProbImage& p, const LabelImage& s) {
  require_same_shape(p, s, "soft_iou_loss");
  require_binary(s, "soft_iou_loss");
  const auto sv = as_reals(s);
  return soft_iou_loss(p.values(), sv);
}

/// Weights of the combined training objective.
struct LossWeights {
  double dmi = 1.0;
  double iou = 1.0;
};

inline LossWithGradient combined_loss(std::span<const double> p, std::span<const double> s,
                                      const LossWeights& w = {}) {
  auto iou = soft_iou_loss(p, s);
  const auto dmi_grad = dmi_gradient(p, s);
  LossWithGradient out{w.dmi * dmi_loss(p, s) + w.iou * iou.value, std::move(iou.gradient)};
  for (std::size_t i = 0; i < p.size(); ++i)
    out.gradient[i] = w.dmi * dmi_grad[i] + w.iou * out.gradient[i];
  return out;
}

}  // namespace metastruct
