#pragma once

// Noise transition matrices (NTMs) and the complete-randomization distance.
//
// An NTM Q is M×M and column-stochastic: column i is the distribution of the observed class
// given true class i, so Q(j, i) = P(observed = j | true = i). Class indices are 0-based.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "metastruct/image.hpp"

namespace metastruct {

class Ntm {
 public:
  Ntm() = default;

  /// Columns listed true-class-first; each inner vector is one column.
  static Ntm from_columns(const std::vector<std::vector<double>>& columns) {
    const int m = static_cast<int>(columns.size());
    Ntm q(m);
    for (int i = 0; i < m; ++i) {
      if (static_cast<int>(columns[i].size()) != m) {
        throw Error("NTM column " + std::to_string(i) + " has " +
                    std::to_string(columns[i].size()) + " entries, expected " +
                    std::to_string(m));
      }
      for (int j = 0; j < m; ++j) q.at(j, i) = columns[i][j];
    }
    return q;
  }

  /// Row-major listing, as matrices are printed: rows[j][i] = P(observed j | true i).
  static Ntm from_rows(const std::vector<std::vector<double>>& rows) {
    const int m = static_cast<int>(rows.size());
    Ntm q(m);
    for (int j = 0; j < m; ++j) {
      if (static_cast<int>(rows[j].size()) != m) throw Error("NTM rows must form a square");
      for (int i = 0; i < m; ++i) q.at(j, i) = rows[j][i];
    }
    return q;
  }

  static Ntm identity(int m) {
    Ntm q(m);
    for (int i = 0; i < m; ++i) q.at(i, i) = 1.0;
    return q;
  }

  int size() const noexcept { return m_; }

  /// P(observed | truth).
  double operator()(int observed, int truth) const { return entries_[index(observed, truth)]; }
  double& at(int observed, int truth) { return entries_[index(observed, truth)]; }

  std::span<const double> column(int truth) const {
    return std::span<const double>(entries_).subspan(static_cast<std::size_t>(truth) * m_, m_);
  }

  friend bool operator==(const Ntm&, const Ntm&) = default;

 private:
  explicit Ntm(int m) : m_(m) {
    if (m < 2 || m > 256) throw Error("NTM size must be in [2, 256], got " + std::to_string(m));
    entries_.assign(static_cast<std::size_t>(m) * m, 0.0);
  }

  std::size_t index(int observed, int truth) const {
    return static_cast<std::size_t>(truth) * m_ + observed;
  }

  int m_ = 0;
  std::vector<double> entries_;  // column-major
};

inline constexpr double kColumnSumTolerance = 1e-9;

struct NtmVerdict {
  bool valid = true;
  std::optional<int> column;  // first violating column
  std::string reason;

  explicit operator bool() const noexcept { return valid; }
};

inline NtmVerdict validate_ntm(const Ntm& q) {
  for (int i = 0; i < q.size(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < q.size(); ++j) {
      const double v = q(j, i);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        return {false, i,
                "column " + std::to_string(i) + " has entry " + std::to_string(v) +
                    " outside [0,1] at row " + std::to_string(j)};
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kColumnSumTolerance) {
      return {false, i, "column " + std::to_string(i) + " sums to " + std::to_string(sum)};
    }
  }
  return {};
}

inline void require_valid(const Ntm& q) {
  if (auto verdict = validate_ntm(q); !verdict) throw Error("invalid NTM: " + verdict.reason);
}

/// Numerical rank by Gaussian elimination with partial pivoting; pivots at or below
/// 1e-9·M count as zero.
inline int ntm_rank(const Ntm& q) {
  require_valid(q);
  const int m = q.size();
  const double tolerance = 1e-9 * m;
  std::vector<std::vector<double>> a(m, std::vector<double>(m));
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) a[r][c] = q(r, c);

  int rank = 0;
  for (int col = 0; col < m && rank < m; ++col) {
    int pivot = rank;
    for (int r = rank + 1; r < m; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) <= tolerance) continue;
    std::swap(a[pivot], a[rank]);
    for (int r = rank + 1; r < m; ++r) {
      const double f = a[r][col] / a[rank][col];
      for (int c = col; c < m; ++c) a[r][c] -= f * a[rank][c];
    }
    ++rank;
  }
  return rank;
}

/// Pairwise complete-randomization distances: the L1 distance between NTM columns.
struct CrdTable {
  int m = 0;
  std::vector<double> distances;  // m×m, symmetric
  int min_u = 0;
  int min_v = 1;
  double min_distance = 0.0;

  double operator()(int u, int v) const { return distances[static_cast<std::size_t>(u) * m + v]; }
};

inline double column_distance(const Ntm& q, int u, int v) {
  double d = 0.0;
  for (int k = 0; k < q.size(); ++k) d += std::abs(q(k, u) - q(k, v));
  return d;
}

inline CrdTable crd(const Ntm& q) {
  require_valid(q);
  CrdTable t;
  t.m = q.size();
  t.distances.assign(static_cast<std::size_t>(t.m) * t.m, 0.0);
  t.min_distance = std::numeric_limits<double>::infinity();
  for (int u = 0; u < t.m; ++u) {
    for (int v = u + 1; v < t.m; ++v) {
      const double d = column_distance(q, u, v);
      t.distances[static_cast<std::size_t>(u) * t.m + v] = d;
      t.distances[static_cast<std::size_t>(v) * t.m + u] = d;
      if (d < t.min_distance) {
        t.min_distance = d;
        t.min_u = u;
        t.min_v = v;
      }
    }
  }
  return t;
}

// JSON form: {"m": M, "columns": [[...], ...]}, columns listed true-class-first.

inline nlohmann::json to_json(const Ntm& q) {
  nlohmann::json columns = nlohmann::json::array();
  for (int i = 0; i < q.size(); ++i) {
    auto col = q.column(i);
    columns.push_back(std::vector<double>(col.begin(), col.end()));
  }
  return {{"m", q.size()}, {"columns", columns}};
}

inline Ntm ntm_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("m") || !j.contains("columns")) {
    throw Error("NTM JSON must be an object with \"m\" and \"columns\"");
  }
  const int m = j.at("m").get<int>();
  const auto& cols = j.at("columns");
  if (!cols.is_array() || static_cast<int>(cols.size()) != m) {
    throw Error("NTM JSON \"columns\" must hold m = " + std::to_string(m) + " columns");
  }
  std::vector<std::vector<double>> columns;
  for (const auto& c : cols) columns.push_back(c.get<std::vector<double>>());
  Ntm q = Ntm::from_columns(columns);
  require_valid(q);
  return q;
}

}  // namespace metastruct
