#pragma once

#include "xview/error.hpp"
#include "xview/world/types.hpp"

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace xview::datagen {

/// Run lengths of alternating 0/1 runs, always starting with a (possibly
/// empty) run of zeros. The runs sum to height * width.
inline std::vector<std::uint32_t> encode_rle(const world::Mask& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t len = 0;
  for (auto b : mask.bits) {
    const std::uint8_t v = b != 0 ? 1 : 0;
    if (v != current) {
      runs.push_back(len);
      current = v;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return runs;
}

inline world::Mask decode_rle(const std::vector<std::uint32_t>& runs, int height, int width) {
  if (height <= 0 || width <= 0) throw ValidationError("mask dimensions must be positive");
  world::Mask m(height, width);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (auto r : runs) {
    if (pos + r > m.bits.size()) throw ValidationError("RLE runs exceed mask size");
    for (std::uint32_t k = 0; k < r; ++k) m.bits[pos++] = value;
    value ^= 1;
  }
  if (pos != m.bits.size()) throw ValidationError("RLE runs do not cover the mask");
  return m;
}

/// Text form "H W r0 r1 ..." used on the wire.
inline std::string rle_to_text(const world::Mask& mask) {
  std::ostringstream out;
  out << mask.height << ' ' << mask.width;
  for (auto r : encode_rle(mask)) out << ' ' << r;
  return out.str();
}

inline world::Mask rle_from_text(const std::string& text) {
  std::istringstream in(text);
  long long h = 0;
  long long w = 0;
  if (!(in >> h >> w) || h <= 0 || w <= 0 || h > 4096 || w > 4096) {
    throw ValidationError("RLE text must start with positive height and width");
  }
  std::vector<std::uint32_t> runs;
  long long r = 0;
  while (in >> r) {
    if (r < 0) throw ValidationError("negative RLE run");
    runs.push_back(static_cast<std::uint32_t>(r));
  }
  if (!in.eof()) throw ValidationError("malformed RLE text");
  return decode_rle(runs, static_cast<int>(h), static_cast<int>(w));
}

/// (value, length) runs over an instance-id buffer.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> encode_id_runs(const std::vector<std::uint32_t>& ids) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> runs;
  for (auto v : ids) {
    if (!runs.empty() && runs.back().first == v) {
      ++runs.back().second;
    } else {
      runs.push_back({v, 1});
    }
  }
  return runs;
}

}  // namespace xview::datagen
