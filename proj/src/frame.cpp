#include "objsearch/frame.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace objsearch {

bool BBox::valid_for(int image_width, int image_height) const {
  return 0 <= x_min && x_min < x_max && x_max <= image_width && 0 <= y_min && y_min < y_max &&
         y_max <= image_height;
}

PixelSpan pixel_span(const BBox &bbox, int image_width, int image_height) {
  PixelSpan s;
  s.x0 = std::clamp(static_cast<int>(std::floor(bbox.x_min)), 0, image_width);
  s.y0 = std::clamp(static_cast<int>(std::floor(bbox.y_min)), 0, image_height);
  s.x1 = std::clamp(static_cast<int>(std::ceil(bbox.x_max)), 0, image_width);
  s.y1 = std::clamp(static_cast<int>(std::ceil(bbox.y_max)), 0, image_height);
  s.x1 = std::max(s.x1, s.x0);
  s.y1 = std::max(s.y1, s.y0);
  return s;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

} // namespace objsearch
