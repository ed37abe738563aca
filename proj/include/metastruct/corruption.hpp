#pragma once

// Noisy-label synthesis from clean masks:
//   CL  clean label (identity NTM)
//   RCL randomized clean label: pixel-wise flips through an NTM, boundaries intact
//   PCL perturbed clean label: dilation, erosion or skeleton of the clean mask
//   RL  random label: pixels drawn independently of the image

#include <cstdint>
#include <variant>
#include <vector>

#include "metastruct/image.hpp"
#include "metastruct/label_model.hpp"
#include "metastruct/morphology.hpp"
#include "metastruct/rng.hpp"

namespace metastruct {

/// Resamples every pixel of true class i from column i of q, in raster order.
inline LabelImage apply_ntm(const LabelImage& y, const Ntm& q, Seed seed) {
  require_valid(q);
  if (q.size() != y.num_classes()) {
    throw Error("apply_ntm: NTM is " + std::to_string(q.size()) + "x" +
                std::to_string(q.size()) + " but the mask has " +
                std::to_string(y.num_classes()) + " classes");
  }
  const int m = q.size();
  // Cumulative columns; the last bin absorbs rounding so every draw lands somewhere.
  std::vector<double> cdf(static_cast<std::size_t>(m) * m);
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
      acc += q(j, i);
      cdf[static_cast<std::size_t>(i) * m + j] = acc;
    }
  }
  Rng rng(seed);
  Grid<std::uint8_t> out(y.width(), y.height());
  for (std::size_t p = 0; p < y.size(); ++p) {
    const int truth = y[p];
    const double u = rng.uniform();
    const double* col = &cdf[static_cast<std::size_t>(truth) * m];
    int observed = m - 1;
    for (int j = 0; j < m - 1; ++j) {
      if (u < col[j]) {
        observed = j;
        break;
      }
    }
    out[p] = static_cast<std::uint8_t>(observed);
  }
  return LabelImage(std::move(out), m);
}

namespace rcl {

/// Every pixel leaves its class with probability p; wrong classes share p uniformly.
struct Flip {
  double p_flip = 0.0;
  int num_classes = 2;
};

/// Foreground pixels survive with probability p_sample, otherwise become background.
struct Sample {
  double p_sample = 1.0;
  int num_classes = 2;
};

/// Binary pair (P_{0|1}, P_{1|0}): Q = [1−P_{1|0}, P_{0|1}; P_{1|0}, 1−P_{0|1}].
struct Pair {
  double p0_given1 = 0.0;
  double p1_given0 = 0.0;
};

struct Explicit {
  Ntm q;
};

using Mode = std::variant<Flip, Sample, Pair, Explicit>;

}  // namespace rcl

namespace detail {
inline void require_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(std::string(name) + " must be in [0,1], got " + std::to_string(p));
  }
}
}  // namespace detail

inline Ntm make_rcl_ntm(const rcl::Mode& mode) {
  struct Builder {
    Ntm operator()(const rcl::Flip& f) const {
      detail::require_probability(f.p_flip, "P_flip");
      Ntm q = Ntm::identity(f.num_classes);
      const double off = f.p_flip / (f.num_classes - 1);
      for (int i = 0; i < f.num_classes; ++i)
        for (int j = 0; j < f.num_classes; ++j) q.at(j, i) = (i == j) ? 1.0 - f.p_flip : off;
      return q;
    }
    Ntm operator()(const rcl::Sample& s) const {
      detail::require_probability(s.p_sample, "P_sample");
      Ntm q = Ntm::identity(s.num_classes);
      for (int i = 1; i < s.num_classes; ++i) {
        q.at(i, i) = s.p_sample;
        q.at(0, i) = 1.0 - s.p_sample;
      }
      return q;
    }
    Ntm operator()(const rcl::Pair& p) const {
      detail::require_probability(p.p0_given1, "P_{0|1}");
      detail::require_probability(p.p1_given0, "P_{1|0}");
      return Ntm::from_columns({{1.0 - p.p1_given0, p.p1_given0}, {p.p0_given1, 1.0 - p.p0_given1}});
    }
    Ntm operator()(const rcl::Explicit& e) const {
      require_valid(e.q);
      return e.q;
    }
  };
  return std::visit(Builder{}, mode);
}

/// Random label: each pixel is foreground independently with probability p_generate.
inline LabelImage generate_rl(int height, int width, double p_generate, Seed seed) {
  detail::require_probability(p_generate, "P_generate");
  Rng rng(seed);
  Grid<std::uint8_t> g(width, height);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = rng.bernoulli(p_generate) ? 1 : 0;
  return LabelImage(std::move(g), 2);
}

/// Fraction of pixels where two masks disagree.
inline double pixel_error_rate(const LabelImage& observed, const LabelImage& truth) {
  require_same_shape(observed, truth, "pixel_error_rate");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += observed[i] != truth[i];
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

inline constexpr double kDynamicMinCrd = 0.2;

/// A random full-rank NTM for one epoch of a dynamic-noise stream. Columns are Dirichlet(1)
/// draws, rejected until the matrix has rank m and every column pair is at least 0.2 apart.
inline Ntm dynamic_ntm(int m, std::uint64_t epoch, Seed seed) {
  if (m < 2) throw Error("dynamic_ntm: m must be >= 2");
  Rng rng(derive_seed(derive_seed(seed, "dynamic-ntm"), epoch));
  std::vector<std::vector<double>> columns(m, std::vector<double>(m));
  for (int attempt = 0; attempt < 100000; ++attempt) {
    for (auto& col : columns) {
      double total = 0.0;
      for (double& v : col) total += (v = rng.exponential());
      for (double& v : col) v /= total;
      // renormalise so the column sums to 1 as closely as doubles allow
      double sum = 0.0;
      for (int j = 0; j + 1 < m; ++j) sum += col[j];
      col[m - 1] = 1.0 - sum;
      if (col[m - 1] < 0.0) col[m - 1] = 0.0;
    }
    Ntm q = Ntm::from_columns(columns);
    if (!validate_ntm(q)) continue;
    if (ntm_rank(q) == m && crd(q).min_distance >= kDynamicMinCrd) return q;
  }
  throw Error("dynamic_ntm: no admissible matrix found");
}

}  // namespace metastruct
