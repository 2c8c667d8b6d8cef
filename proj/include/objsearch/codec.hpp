#pragma once

#include "objsearch/json.hpp"
#include "objsearch/localize.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace objsearch {

std::string base64_encode(const std::vector<std::uint8_t> &bytes);
/// Throws ParseError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Depth values as little-endian float32, base64.
std::string encode_depth(const std::vector<float> &depth);
std::vector<float> decode_depth(std::string_view text, std::size_t expected_count);

/// Alternating run lengths over the row-major bits, starting with a run of
/// zeros (possibly empty).
std::vector<std::uint32_t> mask_to_rle(const Mask &mask);
Mask mask_from_rle(const std::vector<std::uint32_t> &runs, int width, int height);

Json bbox_to_json(const BBox &bbox);
BBox bbox_from_json(const Json &j, const std::string &path = "bbox");

Json localization_to_json(const Localization &loc);

Json keyframe_to_json(const KeyFrame &kf);
/// Checks dimensions and the mask/bbox consistency of the record.
KeyFrame keyframe_from_json(const Json &j);

/// Produces the foreground mask for a keyframe's bbox.
class Segmenter {
public:
  virtual ~Segmenter() = default;
  virtual Mask segment(const DepthFrame &depth, const BBox &bbox) = 0;
};

/// Default segmenter: mask_from_bbox with a fixed tau.
class DepthCoherenceSegmenter final : public Segmenter {
public:
  explicit DepthCoherenceSegmenter(double tau = kDefaultMaskTau) : tau_(tau) {}
  Mask segment(const DepthFrame &depth, const BBox &bbox) override;

private:
  double tau_;
};

} // namespace objsearch
