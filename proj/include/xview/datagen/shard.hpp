#pragma once

// Shard file layout (all integers little-endian):
//
//   "XVSH"  u32 version  u32 clip_count  u32 manifest[4]   (use, break, approach, attack)
//   per clip:
//     u8 event_kind  u32 target_instance  u32 span_begin  u32 span_end
//     u32 frame_count  u32 height  u32 width
//     per frame:
//       f64 x  f64 y  f64 yaw  u32 step_index
//       u8 move  f64 turn  u8 interact
//       u8 visible  [f64 centroid_row  f64 centroid_col]   (only when visible)
//       u32 n  <n bytes: zlib-compressed rgb>
//       u32 runs  <runs x (u32 id, u32 length)>            instance buffer
//       u32 runs  <runs x u32>                             mask, alternating 0/1 from 0
//   "XVEN"

#include "xview/binary_io.hpp"
#include "xview/datagen/rle.hpp"
#include "xview/datagen/types.hpp"
#include "xview/image.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <string>

namespace xview::datagen {

namespace detail {

inline std::vector<std::uint8_t> deflate_bytes(const std::vector<std::uint8_t>& in) {
  uLongf n = compressBound(static_cast<uLong>(in.size()));
  std::vector<std::uint8_t> out(n);
  if (compress2(out.data(), &n, in.data(), static_cast<uLong>(in.size()), 6) != Z_OK) {
    throw IoError("zlib compression failed");
  }
  out.resize(n);
  return out;
}

inline std::vector<std::uint8_t> inflate_bytes(const std::uint8_t* in, std::size_t size, std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  uLongf n = static_cast<uLongf>(expected);
  if (uncompress(out.data(), &n, in, static_cast<uLong>(size)) != Z_OK || n != expected) {
    throw CorruptShardError("frame pixels do not decompress to the declared size");
  }
  return out;
}

inline void check_magic(io::ByteReader<CorruptShardError>& in, const char* magic) {
  char got[4];
  in.get_bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0) throw CorruptShardError(std::string("bad marker, expected ") + magic);
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_shard(const DatasetShard& shard) {
  io::ByteWriter out;
  out.put_bytes("XVSH", 4);
  out.put(shard.format_version);
  out.put(static_cast<std::uint32_t>(shard.clips.size()));
  for (auto c : shard.manifest) out.put(c);
  for (const auto& clip : shard.clips) {
    const int h = clip.frames.empty() ? 0 : clip.frames.front().observation.height;
    const int w = clip.frames.empty() ? 0 : clip.frames.front().observation.width;
    out.put(static_cast<std::uint8_t>(clip.event_kind));
    out.put(static_cast<std::uint32_t>(clip.target_instance));
    out.put(static_cast<std::uint32_t>(clip.span_begin));
    out.put(static_cast<std::uint32_t>(clip.span_end));
    out.put(static_cast<std::uint32_t>(clip.frames.size()));
    out.put(static_cast<std::uint32_t>(h));
    out.put(static_cast<std::uint32_t>(w));
    for (const auto& f : clip.frames) {
      const auto& o = f.observation;
      if (o.height != h || o.width != w) throw InvalidClipError("frames of a clip must share one size");
      out.put(o.pose.x);
      out.put(o.pose.y);
      out.put(o.pose.yaw);
      out.put(static_cast<std::uint32_t>(o.step_index));
      out.put(static_cast<std::uint8_t>(f.action.move));
      out.put(f.action.turn);
      out.put(static_cast<std::uint8_t>(f.action.interact));
      out.put(static_cast<std::uint8_t>(f.label.visible ? 1 : 0));
      if (f.label.visible) {
        out.put(f.label.centroid->row);
        out.put(f.label.centroid->col);
      }
      const auto packed = detail::deflate_bytes(o.rgb);
      out.put(static_cast<std::uint32_t>(packed.size()));
      out.put_bytes(packed.data(), packed.size());
      const auto id_runs = encode_id_runs(o.instance_buffer);
      out.put(static_cast<std::uint32_t>(id_runs.size()));
      for (auto [v, n] : id_runs) {
        out.put(v);
        out.put(n);
      }
      const auto runs = encode_rle(f.label.mask);
      out.put(static_cast<std::uint32_t>(runs.size()));
      for (auto r : runs) out.put(r);
    }
  }
  out.put_bytes("XVEN", 4);
  return std::move(out.bytes());
}

inline DatasetShard deserialize_shard(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader<CorruptShardError> in(bytes.data(), bytes.size());
  detail::check_magic(in, "XVSH");
  DatasetShard shard;
  shard.format_version = in.get<std::uint32_t>();
  if (shard.format_version != kShardFormatVersion) {
    throw UnsupportedFormatError("shard format version " + std::to_string(shard.format_version) +
                                 " is not supported (expected " + std::to_string(kShardFormatVersion) + ")");
  }
  const auto clip_count = in.get<std::uint32_t>();
  for (auto& c : shard.manifest) c = in.get<std::uint32_t>();
  for (std::uint32_t ci = 0; ci < clip_count; ++ci) {
    TrajectoryClip clip;
    const auto kind = in.get<std::uint8_t>();
    if (kind >= world::kEventKindCount) throw CorruptShardError("bad event kind");
    clip.event_kind = static_cast<world::EventKind>(kind);
    clip.target_instance = static_cast<int>(in.get<std::uint32_t>());
    clip.span_begin = static_cast<int>(in.get<std::uint32_t>());
    clip.span_end = static_cast<int>(in.get<std::uint32_t>());
    const auto frames = in.get<std::uint32_t>();
    const auto h = static_cast<int>(in.get<std::uint32_t>());
    const auto w = static_cast<int>(in.get<std::uint32_t>());
    if (h < 0 || w < 0 || h > 4096 || w > 4096) throw CorruptShardError("bad frame size");
    const auto pixels = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    // Each frame needs far more than one byte, so this bounds bogus counts.
    if (frames > in.remaining()) throw CorruptShardError("frame count exceeds file size");
    clip.frames.reserve(frames);
    for (std::uint32_t fi = 0; fi < frames; ++fi) {
      ClipFrame f;
      auto& o = f.observation;
      o.height = h;
      o.width = w;
      o.pose.x = in.get<double>();
      o.pose.y = in.get<double>();
      o.pose.yaw = in.get<double>();
      o.step_index = static_cast<int>(in.get<std::uint32_t>());
      const auto move = in.get<std::uint8_t>();
      f.action.turn = in.get<double>();
      const auto interact = in.get<std::uint8_t>();
      if (move >= world::kMoveCount || interact >= world::kInteractCount) throw CorruptShardError("bad action");
      f.action.move = static_cast<world::MoveCommand>(move);
      f.action.interact = static_cast<world::InteractCommand>(interact);
      f.label.visible = in.get<std::uint8_t>() != 0;
      if (f.label.visible) {
        training::PixelPoint p;
        p.row = in.get<double>();
        p.col = in.get<double>();
        f.label.centroid = p;
      }
      const auto packed = in.get<std::uint32_t>();
      std::vector<std::uint8_t> buf(packed);
      in.get_bytes(buf.data(), packed);
      o.rgb = detail::inflate_bytes(buf.data(), buf.size(), pixels * 3);
      const auto id_runs = in.get<std::uint32_t>();
      o.instance_buffer.reserve(pixels);
      for (std::uint32_t k = 0; k < id_runs; ++k) {
        const auto v = in.get<std::uint32_t>();
        const auto n = in.get<std::uint32_t>();
        if (n > pixels - o.instance_buffer.size()) throw CorruptShardError("instance runs overflow frame");
        o.instance_buffer.insert(o.instance_buffer.end(), n, v);
      }
      if (o.instance_buffer.size() != pixels) throw CorruptShardError("instance runs do not cover frame");
      const auto mask_runs = in.get<std::uint32_t>();
      if (mask_runs > in.remaining() / 4) throw CorruptShardError("mask run count exceeds file size");
      std::vector<std::uint32_t> runs(mask_runs);
      for (auto& r : runs) r = in.get<std::uint32_t>();
      try {
        f.label.mask = decode_rle(runs, h, w);
      } catch (const ValidationError& e) {
        throw CorruptShardError(e.what());
      }
      clip.frames.push_back(std::move(f));
    }
    shard.clips.push_back(std::move(clip));
  }
  detail::check_magic(in, "XVEN");
  if (in.remaining() != 0) throw CorruptShardError("trailing bytes after shard end marker");
  if (shard.manifest != count_events(shard.clips)) throw CorruptShardError("manifest does not match contents");
  return shard;
}

inline DatasetShard write_shard(const std::vector<TrajectoryClip>& clips, const std::string& path) {
  DatasetShard shard;
  shard.clips = clips;
  shard.manifest = count_events(clips);
  write_file(path, serialize_shard(shard));
  return shard;
}

inline DatasetShard read_shard(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("shard not found: " + path);
  return deserialize_shard(read_file(path));
}

}  // namespace xview::datagen
