#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace metastruct {

/// Raised for malformed data: bad files, invalid matrices, shape mismatches.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major H×W grid.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw Error("grid dimensions must be positive, got " + std::to_string(width) + "x" +
                  std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  std::span<const T> row(int y) const {
    return std::span<const T>(data_).subspan(static_cast<std::size_t>(y) * width_, width_);
  }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Predictor output and intensity images: reals in [0,1].
using ProbImage = Grid<double>;

/// Per-pixel class indices in [0, num_classes). Class 0 is background.
class LabelImage {
 public:
  LabelImage() = default;

  LabelImage(int width, int height, int num_classes, std::uint8_t fill = 0)
      : pixels_(width, height, fill), num_classes_(num_classes) {
    check_classes();
    if (fill >= num_classes) throw Error("fill value exceeds class count");
  }

  LabelImage(Grid<std::uint8_t> pixels, int num_classes)
      : pixels_(std::move(pixels)), num_classes_(num_classes) {
    check_classes();
    for (std::size_t i = 0; i < pixels_.size(); ++i) {
      if (pixels_[i] >= num_classes_) {
        throw Error("pixel value " + std::to_string(pixels_[i]) + " at index " +
                    std::to_string(i) + " is not below class count " +
                    std::to_string(num_classes_));
      }
    }
  }

  int width() const noexcept { return pixels_.width(); }
  int height() const noexcept { return pixels_.height(); }
  std::size_t size() const noexcept { return pixels_.size(); }
  int num_classes() const noexcept { return num_classes_; }
  bool is_binary() const noexcept { return num_classes_ == 2; }

  std::uint8_t operator()(int x, int y) const { return pixels_(x, y); }
  std::uint8_t operator[](std::size_t i) const { return pixels_[i]; }

  void set(int x, int y, int label) {
    if (label < 0 || label >= num_classes_) throw Error("label out of range");
    pixels_(x, y) = static_cast<std::uint8_t>(label);
  }
  void set(std::size_t i, int label) {
    if (label < 0 || label >= num_classes_) throw Error("label out of range");
    pixels_[i] = static_cast<std::uint8_t>(label);
  }

  const Grid<std::uint8_t>& pixels() const noexcept { return pixels_; }
  bool contains(int x, int y) const noexcept { return pixels_.contains(x, y); }

  template <typename U>
  bool same_shape(const Grid<U>& g) const noexcept {
    return pixels_.same_shape(g);
  }
  bool same_shape(const LabelImage& other) const noexcept {
    return pixels_.same_shape(other.pixels_);
  }

  std::size_t count(int label) const {
    return static_cast<std::size_t>(
        std::count(pixels_.values().begin(), pixels_.values().end(), label));
  }

  friend bool operator==(const LabelImage&, const LabelImage&) = default;

 private:
  void check_classes() const {
    if (num_classes_ < 2 || num_classes_ > 256) {
      throw Error("class count must be in [2, 256], got " + std::to_string(num_classes_));
    }
  }

  Grid<std::uint8_t> pixels_;
  int num_classes_ = 2;
};

inline LabelImage empty_mask(int width, int height) { return LabelImage(width, height, 2); }

inline void require_binary(const LabelImage& y, const char* what) {
  if (!y.is_binary()) {
    throw Error(std::string(what) + ": expected a binary mask, got " +
                std::to_string(y.num_classes()) + " classes");
  }
}

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(std::string(what) + ": dimension mismatch (" + std::to_string(a.width()) + "x" +
                std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                std::to_string(b.height()) + ")");
  }
}

inline void require_probabilities(const ProbImage& p, const char* what) {
  for (double v : p.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw Error(std::string(what) + ": probability image value outside [0,1]");
    }
  }
}

/// Mask pixels as 0/1 reals, for the loss kernels.
inline std::vector<double> as_reals(const LabelImage& y) {
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = static_cast<double>(y[i]);
  return out;
}

inline LabelImage complement(const LabelImage& y) {
  require_binary(y, "complement");
  Grid<std::uint8_t> g(y.width(), y.height());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = static_cast<std::uint8_t>(1 - y[i]);
  return LabelImage(std::move(g), 2);
}

/// True when every foreground pixel of `inner` is foreground in `outer`.
inline bool is_subset(const LabelImage& inner, const LabelImage& outer) {
  require_same_shape(inner, outer, "is_subset");
  for (std::size_t i = 0; i < inner.size(); ++i) {
    if (inner[i] != 0 && outer[i] == 0) return false;
  }
  return true;
}

}  // namespace metastruct
