#include "objsearch/codec.hpp"

#include "objsearch/error.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>

namespace objsearch {

std::string base64_encode(const std::vector<std::uint8_t> &bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char *>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ParseError("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char *>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw ParseError("base64: invalid character");
  // EVP_DecodeBlock keeps the zero bytes that stand in for '=' padding.
  std::size_t len = static_cast<std::size_t>(n);
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() >= 2 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

std::string encode_depth(const std::vector<float> &depth) {
  std::vector<std::uint8_t> bytes(depth.size() * 4);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(depth[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return base64_encode(bytes);
}

std::vector<float> decode_depth(std::string_view text, std::size_t expected_count) {
  const auto bytes = base64_decode(text);
  if (bytes.size() != 4 * expected_count) {
    throw ParseError("depth: expected " + std::to_string(expected_count) + " values, got " +
                     std::to_string(bytes.size() / 4));
  }
  std::vector<float> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

std::vector<std::uint32_t> mask_to_rle(const Mask &mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (auto bit : mask.bits) {
    const std::uint8_t v = bit ? 1 : 0;
    if (v != current) {
      runs.push_back(run);
      run = 0;
      current = v;
    }
    ++run;
  }
  runs.push_back(run);
  return runs;
}

Mask mask_from_rle(const std::vector<std::uint32_t> &runs, int width, int height) {
  Mask mask(width, height);
  std::size_t pos = 0;
  bool on = false;
  for (auto run : runs) {
    if (pos + run > mask.bits.size()) throw ParseError("mask rle: runs exceed the mask size");
    if (on) std::memset(mask.bits.data() + pos, 1, run);
    pos += run;
    on = !on;
  }
  if (pos != mask.bits.size()) throw ParseError("mask rle: runs do not cover the mask");
  return mask;
}

Json bbox_to_json(const BBox &b) {
  return Json{{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}};
}

BBox bbox_from_json(const Json &j, const std::string &path) {
  namespace jf = json_field;
  return {jf::number(j, "x_min", path), jf::number(j, "y_min", path), jf::number(j, "x_max", path),
          jf::number(j, "y_max", path)};
}

Json localization_to_json(const Localization &loc) {
  return Json{{"label", loc.label}, {"distance_m", loc.distance_m}, {"hour", loc.hour.value()}};
}

Json keyframe_to_json(const KeyFrame &kf) {
  return Json{{"id", kf.id},
              {"target_label", kf.target_label},
              {"captured_at", kf.captured_at},
              {"pose", pose_to_json(kf.pose)},
              {"width", kf.depth.width},
              {"height", kf.depth.height},
              {"max_range", kf.depth.max_range},
              {"depth", encode_depth(kf.depth.depth)},
              {"bbox", bbox_to_json(kf.bbox)},
              {"mask_rle", mask_to_rle(kf.mask)}};
}

KeyFrame keyframe_from_json(const Json &j) {
  namespace jf = json_field;
  const std::string path = "keyframe";
  KeyFrame kf;
  kf.id = jf::string(j, "id", path);
  kf.target_label = jf::string(j, "target_label", path);
  kf.captured_at = jf::number(j, "captured_at", path);
  kf.pose = pose_from_json(jf::object(j, "pose", path), {}, path + ".pose");
  const int w = static_cast<int>(jf::integer(j, "width", path));
  const int h = static_cast<int>(jf::integer(j, "height", path));
  if (w <= 0 || h <= 0) throw ParseError(path + ": non-positive dimensions");
  if (w != kf.pose.image_width || h != kf.pose.image_height) {
    throw InvariantError(path + ": depth dimensions differ from the pose image size");
  }
  kf.depth.width = w;
  kf.depth.height = h;
  kf.depth.max_range = jf::number(j, "max_range", path);
  kf.depth.depth = decode_depth(jf::string(j, "depth", path),
                                static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  kf.bbox = bbox_from_json(jf::object(j, "bbox", path), path + ".bbox");
  if (!kf.bbox.valid_for(w, h)) throw InvariantError(path + ": bbox outside the image");
  const Json &runs = jf::array(j, "mask_rle", path);
  std::vector<std::uint32_t> rle;
  for (const auto &r : runs) {
    if (!r.is_number_unsigned()) throw ParseError(path + ".mask_rle: expected non-negative integers");
    rle.push_back(r.get<std::uint32_t>());
  }
  kf.mask = mask_from_rle(rle, w, h);
  return kf;
}

Mask DepthCoherenceSegmenter::segment(const DepthFrame &depth, const BBox &bbox) {
  return mask_from_bbox(bbox, depth, tau_);
}

} // namespace objsearch
