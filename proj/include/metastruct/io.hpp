#pragma once

// Image and table files. Masks are 8-bit grayscale with pixel value = class index;
// intensity images map 0..255 linearly onto [0,1]. Both binary PGM (P5) and PNG are
// supported; the format is chosen from the file extension when writing and from the magic
// bytes when reading.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "metastruct/image.hpp"
#include "metastruct/label_model.hpp"

namespace metastruct::io {

namespace fs = std::filesystem;

enum class ImageFormat { Pgm, Png };

inline ImageFormat format_for(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".pgm") return ImageFormat::Pgm;
  if (ext == ".png") return ImageFormat::Png;
  throw Error("unsupported image extension '" + ext + "' for " + path.string() +
              " (expected .pgm or .png)");
}

inline std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------------------
// PGM (P5, maxval 255)

inline Grid<std::uint8_t> decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> Error { return Error(name + ": " + why); };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> long {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw fail("malformed PGM header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1'000'000) throw fail("PGM header value too large");
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw fail("not a binary PGM (P5)");
  pos = 2;
  const long width = number(), height = number(), maxval = number();
  if (width < 1 || height < 1) throw fail("PGM dimensions must be positive");
  if (maxval != 255) throw fail("PGM maxval must be 255, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("malformed PGM header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - pos < n) throw fail("truncated PGM pixel data");
  Grid<std::uint8_t> g(static_cast<int>(width), static_cast<int>(height));
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), n, g.values().begin());
  return g;
}

inline std::vector<std::uint8_t> encode_pgm(const Grid<std::uint8_t>& g) {
  const std::string header =
      "P5\n" + std::to_string(g.width()) + " " + std::to_string(g.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), g.values().begin(), g.values().end());
  return out;
}

// ---------------------------------------------------------------------------------------
// PNG (8-bit grayscale)

namespace detail {

struct PngReadState {
  const std::vector<std::uint8_t>* bytes;
  std::size_t offset;
};

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (state->offset + length > state->bytes->size()) png_error(png, "truncated PNG data");
  std::copy_n(state->bytes->data() + state->offset, length, out);
  state->offset += length;
}

inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

inline void png_flush_noop(png_structp) {}

inline void png_error_handler(png_structp png, png_const_charp message) {
  auto* buffer = static_cast<std::string*>(png_get_error_ptr(png));
  if (buffer) *buffer = message;
  png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace detail

inline Grid<std::uint8_t> decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw Error(name + ": not a PNG file");
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message,
                                           detail::png_error_handler, detail::png_warning_handler);
  if (!png) throw Error(name + ": cannot allocate PNG reader");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(name + ": cannot allocate PNG info");
  }
  detail::PngReadState state{&bytes, 0};
  // Only trivially destructible locals live across setjmp.
  Grid<std::uint8_t>* result = nullptr;
  std::vector<png_bytep>* rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    delete result;
    delete rows;
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(name + ": PNG decode error: " + message);
  }
  png_set_read_fn(png, &state, detail::png_read_from_memory);
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(name + ": PNG must be 8-bit grayscale (color type " + std::to_string(color_type) +
                ", bit depth " + std::to_string(bit_depth) + ")");
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  result = new Grid<std::uint8_t>(static_cast<int>(width), static_cast<int>(height));
  rows = new std::vector<png_bytep>(height);
  for (png_uint_32 r = 0; r < height; ++r)
    (*rows)[r] = result->values().data() + static_cast<std::size_t>(r) * width;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  Grid<std::uint8_t> out = std::move(*result);
  delete result;
  delete rows;
  return out;
}

inline std::vector<std::uint8_t> encode_png(const Grid<std::uint8_t>& g) {
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message,
                                            detail::png_error_handler, detail::png_warning_handler);
  if (!png) throw Error("cannot allocate PNG writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("cannot allocate PNG info");
  }
  auto* out = new std::vector<std::uint8_t>();
  auto* rows = new std::vector<png_bytep>(static_cast<std::size_t>(g.height()));
  if (setjmp(png_jmpbuf(png))) {
    delete out;
    delete rows;
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encode error: " + message);
  }
  png_set_write_fn(png, out, detail::png_write_to_vector, detail::png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(g.width()), static_cast<png_uint_32>(g.height()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < g.height(); ++r)
    (*rows)[r] = const_cast<png_bytep>(g.values().data() + static_cast<std::size_t>(r) * g.width());
  png_write_image(png, rows->data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::vector<std::uint8_t> bytes = std::move(*out);
  delete out;
  delete rows;
  return bytes;
}

// ---------------------------------------------------------------------------------------
// Text, JSON, CSV

inline std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

inline void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline Ntm read_ntm(const fs::path& path) {
  try {
    return ntm_from_json(read_json(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

inline void write_ntm(const fs::path& path, const Ntm& q) { write_text(path, to_json(q).dump(2) + "\n"); }

/// Formats a double with enough digits to round-trip.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// RFC 4180 writer: CRLF line ends, fields quoted when they hold commas, quotes or breaks.
class CsvWriter {
 public:
  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << escape(fields[i]);
    }
    out_ << "\r\n";
  }

  std::string str() const { return out_.str(); }
  void save(const fs::path& path) const { write_text(path, out_.str()); }

  static std::string escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char c : field) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    return quoted + '"';
  }

 private:
  std::ostringstream out_;
};

// ---------------------------------------------------------------------------------------
// Grayscale files

inline Grid<std::uint8_t> read_gray(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path.string());
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes, path.string());
  throw Error(path.string() + ": unrecognised image format (expected binary PGM or PNG)");
}

inline void write_gray(const fs::path& path, const Grid<std::uint8_t>& g) {
  write_bytes(path, format_for(path) == ImageFormat::Pgm ? encode_pgm(g) : encode_png(g));
}

/// Reads a mask. The class count is max value + 1 unless given, and then every value must
/// lie below it. A single-valued mask is still treated as having at least two classes.
inline LabelImage read_mask(const fs::path& path, std::optional<int> num_classes = std::nullopt) {
  Grid<std::uint8_t> g = read_gray(path);
  const int max_value = *std::max_element(g.values().begin(), g.values().end());
  const int m = num_classes.value_or(std::max(2, max_value + 1));
  if (max_value >= m) {
    throw Error(path.string() + ": pixel value " + std::to_string(max_value) +
                " is not below the declared class count " + std::to_string(m));
  }
  return LabelImage(std::move(g), m);
}

inline void write_mask(const fs::path& path, const LabelImage& y) { write_gray(path, y.pixels()); }

inline ProbImage read_intensity(const fs::path& path) {
  const Grid<std::uint8_t> g = read_gray(path);
  ProbImage p(g.width(), g.height());
  for (std::size_t i = 0; i < g.size(); ++i) p[i] = g[i] / 255.0;
  return p;
}

inline Grid<std::uint8_t> quantize(const ProbImage& p) {
  Grid<std::uint8_t> g(p.width(), p.height());
  for (std::size_t i = 0; i < p.size(); ++i)
    g[i] = static_cast<std::uint8_t>(std::lround(std::clamp(p[i], 0.0, 1.0) * 255.0));
  return g;
}

inline void write_intensity(const fs::path& path, const ProbImage& p) { write_gray(path, quantize(p)); }

/// Linear 8-bit rendering of an arbitrary real grid plus a JSON sidecar {"min", "max"} at
/// `<path>.json` for recovering the scale.
inline void write_heatmap(const fs::path& path, const Grid<double>& values) {
  const auto [lo_it, hi_it] = std::minmax_element(values.values().begin(), values.values().end());
  const double lo = *lo_it, hi = *hi_it;
  Grid<std::uint8_t> g(values.width(), values.height());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = hi > lo ? static_cast<std::uint8_t>(std::lround((values[i] - lo) / (hi - lo) * 255.0)) : 0;
  write_gray(path, g);
  const nlohmann::json sidecar = {{"min", lo}, {"max", hi}};
  write_text(fs::path(path.string() + ".json"), sidecar.dump(2) + "\n");
}

}  // namespace metastruct::io
