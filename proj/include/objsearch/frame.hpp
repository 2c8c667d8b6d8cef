#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace objsearch {

/// Image-space rectangle in pixel units, y growing downward.
struct BBox {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  /// 0 <= x_min < x_max <= width, same for y.
  bool valid_for(int image_width, int image_height) const;

  bool operator==(const BBox &) const = default;
};

/// Half-open pixel index range [x0, x1) x [y0, y1).
struct PixelSpan {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(x1 - x0) * static_cast<std::size_t>(y1 - y0);
  }
};

/// Pixels touched by a bbox: every pixel whose unit square overlaps the
/// open box interior. Never empty for a valid bbox.
PixelSpan pixel_span(const BBox &bbox, int image_width, int image_height);

/// Slant range per pixel, row-major.
struct DepthFrame {
  int width = 0;
  int height = 0;
  double max_range = 10.0;
  std::vector<float> depth;

  float at(int x, int y) const {
    return depth[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                 static_cast<std::size_t>(x)];
  }

  bool operator==(const DepthFrame &) const = default;
};

/// Binary foreground mask, row-major, one byte per pixel (0 or 1).
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h)
      : width(w), height(h),
        bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

  bool at(int x, int y) const { return bits[index(x, y)] != 0; }
  void set(int x, int y, bool on = true) { bits[index(x, y)] = on ? 1 : 0; }
  std::size_t count() const;

  bool operator==(const Mask &) const = default;

private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
};

} // namespace objsearch
