#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nxf/field.hpp"

namespace nxf {

namespace fs = std::filesystem;

/// Middlebury .flo: float32 202021.25, int32 width, int32 height, then
/// interleaved (u, v) float32, all little-endian.
inline constexpr float kFloMagic = 202021.25f;

Field2D read_flo(const fs::path& path);
void write_flo(const fs::path& path, const Field2D& flow);

/// KITTI flow PNG: 16-bit RGB, u = (R - 2^15) / 64, v = (G - 2^15) / 64,
/// B = validity. Invalid pixels decode to (0, 0).
struct KittiFlow {
  Field2D flow;
  Mask valid;
};

KittiFlow read_kitti_png(const fs::path& path);
void write_kitti_png(const fs::path& path, const Field2D& flow, const Mask& valid);

/// Dispatches on the extension: .png is read as KITTI, anything else as .flo.
/// For .flo files every pixel is marked valid.
KittiFlow read_flow_any(const fs::path& path);

/// 8-bit PNG or binary PPM/PGM, normalised to [0, 1]. Grey images are
/// expanded to three identical channels.
Field2D read_image(const fs::path& path);

/// Mask stored as an 8-bit PNG; any nonzero sample marks a known pixel.
Mask read_mask(const fs::path& path);
void write_mask(const fs::path& path, const Mask& m);

struct RgbImage {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> pixels;  // RGB interleaved, row-major

  std::uint8_t at(Index x, Index y, int ch) const {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + ch)];
  }
};

void write_png_rgb(const fs::path& path, const RgbImage& img);

/// Colour-wheel rendering: hue from the flow direction, saturation from
/// |flow| / max_mag (default: 99th percentile of the magnitudes). Zero flow
/// is white; magnitudes beyond max_mag are darkened.
RgbImage flow_to_color(const Field2D& flow, std::optional<double> max_mag = std::nullopt);

/// z-field container: "NXZF", u32 version (1), u32 levels, then per level
/// u32 width, u32 height, u32 channels (5) and float32 row-major,
/// channel-interleaved samples. Little-endian; levels run finest first and
/// halve (floor) from one to the next.
inline constexpr std::uint32_t kZFieldVersion = 1;

std::vector<Field2D> read_zfield(const fs::path& path);
void write_zfield(const fs::path& path, const std::vector<Field2D>& levels);

/// Whole-file helpers, also used by the tests.
std::vector<std::uint8_t> read_bytes(const fs::path& path);
void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace nxf
