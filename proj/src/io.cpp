#include "nxf/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nxf/error.hpp"

namespace nxf {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Format, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Format, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Format, "write failed for " + path.string());
}

namespace {

// Little-endian codecs that do not depend on host byte order.
class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& b, std::string what) : bytes_(b), what_(std::move(what)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorKind::CorruptFile, what_ + ": truncated payload");
    }
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::uint8_t* cursor() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> bytes;
};

// ---------------------------------------------------------------- PNG --

struct RawPng {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;  // row-major, interleaved
};

struct MemorySource {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

void png_read_memory(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<MemorySource*>(png_get_io_ptr(png));
  if (src->size - src->pos < n) png_error(png, "truncated PNG stream");
  std::memcpy(out, src->data + src->pos, n);
  src->pos += n;
}

void png_write_memory(png_structp png, png_bytep in, png_size_t n) {
  auto* dst = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  dst->insert(dst->end(), in, in + n);
}

void png_flush_noop(png_structp) {}

void png_silent_warning(png_structp, png_const_charp) {}

[[noreturn]] void png_silent_error(png_structp png, png_const_charp) { png_longjmp(png, 1); }

// The decoder runs inside setjmp; nothing with a destructor is created
// between setjmp and the last libpng call.
const char* decode_png(const std::vector<std::uint8_t>& file, RawPng& out, std::vector<png_bytep>& rows,
                       std::vector<std::uint8_t>& buffer) {
  if (file.size() < 8 || png_sig_cmp(file.data(), 0, 8) != 0) return "not a PNG file";
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_silent_error, png_silent_warning);
  if (png == nullptr) return "libpng initialisation failed";
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return "libpng initialisation failed";
  }
  MemorySource src{file.data(), file.size(), 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return "corrupt or truncated PNG";
  }
  png_set_read_fn(png, &src, png_read_memory);
  png_read_info(png, info);
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && out.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  out.channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (std::uint32_t y = 0; y < out.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return nullptr;
}

RawPng read_png_raw(const fs::path& path) {
  const auto file = read_bytes(path);
  RawPng out;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;
  if (const char* err = decode_png(file, out, rows, buffer)) {
    const bool is_png = file.size() >= 8 && png_sig_cmp(file.data(), 0, 8) == 0;
    throw Error(is_png ? ErrorKind::CorruptFile : ErrorKind::Format, path.string() + ": " + err);
  }
  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      out.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
  }
  return out;
}

const char* encode_png(std::vector<std::uint8_t>& out, const RawPng& img, std::vector<png_bytep>& rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_silent_error, png_silent_warning);
  if (png == nullptr) return "libpng initialisation failed";
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    return "libpng initialisation failed";
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return "PNG encoding failed";
  }
  png_set_write_fn(png, &out, png_write_memory, png_flush_noop);
  const int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width, img.height, img.bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return nullptr;
}

void write_png_raw(const fs::path& path, const RawPng& img) {
  if (img.width == 0 || img.height == 0) throw Error(ErrorKind::InvalidArgument, "cannot write an empty PNG");
  const std::size_t bps = img.bit_depth == 16 ? 2 : 1;
  const std::size_t rowbytes = static_cast<std::size_t>(img.width) * img.channels * bps;
  std::vector<std::uint8_t> buffer(rowbytes * img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    if (bps == 2) {
      buffer[2 * i] = static_cast<std::uint8_t>(img.samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<std::uint8_t>(img.samples[i] & 0xff);
    } else {
      buffer[i] = static_cast<std::uint8_t>(img.samples[i]);
    }
  }
  std::vector<png_bytep> rows(img.height);
  for (std::uint32_t y = 0; y < img.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  std::vector<std::uint8_t> out;
  if (const char* err = encode_png(out, img, rows)) {
    throw Error(ErrorKind::Format, path.string() + ": " + err);
  }
  write_bytes(path, out);
}

bool has_extension(const fs::path& path, const char* ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return e == ext;
}

// Binary PPM (P6) / PGM (P5) with maxval <= 255.
Field2D read_pnm(const fs::path& path) {
  const auto bytes = read_bytes(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  const std::string magic = token();
  if (magic != "P6" && magic != "P5") throw Error(ErrorKind::Format, path.string() + ": unsupported PNM type");
  const int channels = magic == "P6" ? 3 : 1;
  long w = 0, h = 0, maxval = 0;
  try {
    w = std::stol(token());
    h = std::stol(token());
    maxval = std::stol(token());
  } catch (const std::exception&) {
    throw Error(ErrorKind::CorruptFile, path.string() + ": malformed PNM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw Error(ErrorKind::Format, path.string() + ": unsupported PNM dimensions or depth");
  }
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(w * h * channels);
  if (pos > bytes.size() || bytes.size() - pos < n) {
    throw Error(ErrorKind::CorruptFile, path.string() + ": truncated PNM payload");
  }
  Field2D img(w, h, 3);
  for (Index p = 0; p < w * h; ++p)
    for (int ch = 0; ch < 3; ++ch) {
      const std::size_t src = pos + static_cast<std::size_t>(p * channels + (channels == 3 ? ch : 0));
      img.data()[p * 3 + ch] = static_cast<double>(bytes[src]) / static_cast<double>(maxval);
    }
  return img;
}

double percentile_magnitude(const Field2D& flow, double q) {
  std::vector<double> mags(static_cast<std::size_t>(flow.pixels()));
  for (Index p = 0; p < flow.pixels(); ++p) {
    mags[static_cast<std::size_t>(p)] = std::hypot(flow.data()[2 * p], flow.data()[2 * p + 1]);
  }
  if (mags.empty()) return 0;
  const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(mags.size() - 1)));
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end());
  return mags[k];
}

// Middlebury colour wheel: red-yellow-green-cyan-blue-magenta segments.
std::vector<std::array<double, 3>> make_color_wheel() {
  constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  std::vector<std::array<double, 3>> wheel;
  for (int i = 0; i < RY; ++i) wheel.push_back({255, 255.0 * i / RY, 0});
  for (int i = 0; i < YG; ++i) wheel.push_back({255 - 255.0 * i / YG, 255, 0});
  for (int i = 0; i < GC; ++i) wheel.push_back({0, 255, 255.0 * i / GC});
  for (int i = 0; i < CB; ++i) wheel.push_back({0, 255 - 255.0 * i / CB, 255});
  for (int i = 0; i < BM; ++i) wheel.push_back({255.0 * i / BM, 0, 255});
  for (int i = 0; i < MR; ++i) wheel.push_back({255, 0, 255 - 255.0 * i / MR});
  return wheel;
}

void check_zfield_levels(const std::vector<Index>& w, const std::vector<Index>& h, const std::vector<Index>& c,
                         const std::string& what) {
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (c[k] != 5) {
      throw Error(ErrorKind::Format, what + ": level " + std::to_string(k) + " has " + std::to_string(c[k]) +
                                         " channels, expected 5");
    }
    if (w[k] < 1 || h[k] < 1) throw Error(ErrorKind::Format, what + ": empty z-field level");
    if (k > 0 && (w[k] != w[k - 1] / 2 || h[k] != h[k - 1] / 2)) {
      throw Error(ErrorKind::Format, what + ": level " + std::to_string(k) +
                                         " does not halve the previous level's dimensions");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- .flo --

Field2D read_flo(const fs::path& path) {
  const auto bytes = read_bytes(path);
  ByteReader in(bytes, path.string());
  if (bytes.size() < 4 || in.f32() != kFloMagic) {
    throw Error(ErrorKind::Format, path.string() + ": bad .flo magic");
  }
  const std::int32_t w = in.i32();
  const std::int32_t h = in.i32();
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) {
    throw Error(ErrorKind::Format, path.string() + ": invalid .flo dimensions " + std::to_string(w) + "x" +
                                       std::to_string(h));
  }
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 2;
  in.need(n * 4);
  Field2D flow(w, h, 2);
  for (std::size_t i = 0; i < n; ++i) flow.data()[static_cast<Index>(i)] = in.f32();
  if (!in.at_end()) throw Error(ErrorKind::CorruptFile, path.string() + ": trailing bytes after .flo payload");
  return flow;
}

void write_flo(const fs::path& path, const Field2D& flow) {
  if (flow.channels() != 2) throw Error(ErrorKind::InvalidArgument, "write_flo: flow must have 2 channels");
  if (flow.width() < 1 || flow.height() < 1) throw Error(ErrorKind::InvalidArgument, "write_flo: empty flow");
  ByteWriter out;
  out.f32(kFloMagic);
  out.i32(static_cast<std::int32_t>(flow.width()));
  out.i32(static_cast<std::int32_t>(flow.height()));
  for (Index i = 0; i < flow.size(); ++i) out.f32(static_cast<float>(flow.data()[i]));
  write_bytes(path, out.bytes);
}

// ---------------------------------------------------------- KITTI PNG --

KittiFlow read_kitti_png(const fs::path& path) {
  const RawPng raw = read_png_raw(path);
  if (raw.bit_depth != 16) {
    throw Error(ErrorKind::Format, path.string() + ": KITTI flow needs 16-bit samples, got " +
                                       std::to_string(raw.bit_depth));
  }
  if (raw.channels != 3) {
    throw Error(ErrorKind::Format, path.string() + ": KITTI flow needs 3 channels");
  }
  KittiFlow out{Field2D(raw.width, raw.height, 2), Mask(raw.width, raw.height)};
  for (Index p = 0; p < out.flow.pixels(); ++p) {
    const auto* s = raw.samples.data() + p * 3;
    if (s[2] == 0) continue;
    out.valid.set(p, true);
    out.flow.data()[2 * p] = (static_cast<double>(s[0]) - 32768.0) / 64.0;
    out.flow.data()[2 * p + 1] = (static_cast<double>(s[1]) - 32768.0) / 64.0;
  }
  return out;
}

void write_kitti_png(const fs::path& path, const Field2D& flow, const Mask& valid) {
  if (flow.channels() != 2 || !valid.matches(flow)) {
    throw Error(ErrorKind::InvalidArgument, "write_kitti_png: need a 2-channel flow and a matching mask");
  }
  RawPng raw;
  raw.width = static_cast<std::uint32_t>(flow.width());
  raw.height = static_cast<std::uint32_t>(flow.height());
  raw.channels = 3;
  raw.bit_depth = 16;
  raw.samples.assign(static_cast<std::size_t>(flow.pixels()) * 3, 0);
  auto encode = [](double v) {
    const double e = std::round(v * 64.0 + 32768.0);
    return static_cast<std::uint16_t>(std::clamp(e, 0.0, 65535.0));
  };
  for (Index p = 0; p < flow.pixels(); ++p) {
    auto* s = raw.samples.data() + p * 3;
    if (valid.at(p)) {
      s[0] = encode(flow.data()[2 * p]);
      s[1] = encode(flow.data()[2 * p + 1]);
      s[2] = 1;
    } else {
      s[0] = 32768;
      s[1] = 32768;
      s[2] = 0;
    }
  }
  write_png_raw(path, raw);
}

KittiFlow read_flow_any(const fs::path& path) {
  if (has_extension(path, ".png")) return read_kitti_png(path);
  Field2D flow = read_flo(path);
  Mask all(flow.width(), flow.height(), true);
  return {std::move(flow), std::move(all)};
}

// ------------------------------------------------------- images/masks --

Field2D read_image(const fs::path& path) {
  if (has_extension(path, ".ppm") || has_extension(path, ".pgm") || has_extension(path, ".pnm")) {
    return read_pnm(path);
  }
  const RawPng raw = read_png_raw(path);
  if (raw.bit_depth != 8) {
    throw Error(ErrorKind::Format, path.string() + ": reference images must be 8-bit");
  }
  Field2D img(raw.width, raw.height, 3);
  const int c = raw.channels;
  for (Index p = 0; p < img.pixels(); ++p)
    for (int ch = 0; ch < 3; ++ch) {
      // grey(+alpha) replicates channel 0; RGB(A) drops alpha
      const int src = c >= 3 ? ch : 0;
      img.data()[p * 3 + ch] = raw.samples[static_cast<std::size_t>(p * c + src)] / 255.0;
    }
  return img;
}

Mask read_mask(const fs::path& path) {
  const RawPng raw = read_png_raw(path);
  Mask m(raw.width, raw.height);
  for (Index p = 0; p < m.pixels(); ++p) {
    bool any = false;
    for (int ch = 0; ch < raw.channels; ++ch) any = any || raw.samples[static_cast<std::size_t>(p * raw.channels + ch)] != 0;
    m.set(p, any);
  }
  return m;
}

void write_mask(const fs::path& path, const Mask& m) {
  RawPng raw;
  raw.width = static_cast<std::uint32_t>(m.width());
  raw.height = static_cast<std::uint32_t>(m.height());
  raw.channels = 1;
  raw.bit_depth = 8;
  raw.samples.resize(static_cast<std::size_t>(m.pixels()));
  for (Index p = 0; p < m.pixels(); ++p) raw.samples[static_cast<std::size_t>(p)] = m.at(p) ? 255 : 0;
  write_png_raw(path, raw);
}

void write_png_rgb(const fs::path& path, const RgbImage& img) {
  RawPng raw;
  raw.width = static_cast<std::uint32_t>(img.width);
  raw.height = static_cast<std::uint32_t>(img.height);
  raw.channels = 3;
  raw.bit_depth = 8;
  raw.samples.assign(img.pixels.begin(), img.pixels.end());
  write_png_raw(path, raw);
}

RgbImage flow_to_color(const Field2D& flow, std::optional<double> max_mag) {
  if (flow.channels() != 2) throw Error(ErrorKind::InvalidArgument, "flow_to_color: flow must have 2 channels");
  double scale = max_mag ? *max_mag : percentile_magnitude(flow, 0.99);
  if (!(scale > 0)) scale = max_mag ? 1.0 : percentile_magnitude(flow, 1.0);
  if (!(scale > 0)) scale = 1.0;

  static const auto wheel = make_color_wheel();
  const int ncols = static_cast<int>(wheel.size());
  RgbImage img{flow.width(), flow.height(), std::vector<std::uint8_t>(static_cast<std::size_t>(flow.pixels()) * 3)};
  for (Index p = 0; p < flow.pixels(); ++p) {
    const double fx = flow.data()[2 * p] / scale;
    const double fy = flow.data()[2 * p + 1] / scale;
    const double rad = std::sqrt(fx * fx + fy * fy);
    const double a = std::atan2(-fy, -fx) / M_PI;
    const double fk = (a + 1.0) / 2.0 * (ncols - 1);
    const int k0 = static_cast<int>(fk);
    const int k1 = (k0 + 1) % ncols;
    const double f = fk - k0;
    for (int ch = 0; ch < 3; ++ch) {
      const double c0 = wheel[static_cast<std::size_t>(k0)][static_cast<std::size_t>(ch)] / 255.0;
      const double c1 = wheel[static_cast<std::size_t>(k1)][static_cast<std::size_t>(ch)] / 255.0;
      double col = (1 - f) * c0 + f * c1;
      col = rad <= 1 ? 1 - rad * (1 - col) : col * 0.75;
      img.pixels[static_cast<std::size_t>(p * 3 + ch)] = static_cast<std::uint8_t>(255.0 * col);
    }
  }
  return img;
}

// ------------------------------------------------------------ z-field --

std::vector<Field2D> read_zfield(const fs::path& path) {
  const auto bytes = read_bytes(path);
  const std::string what = path.string();
  ByteReader in(bytes, what);
  in.need(4);
  if (std::memcmp(in.cursor(), "NXZF", 4) != 0) throw Error(ErrorKind::Format, what + ": bad z-field magic");
  in.skip(4);
  const std::uint32_t version = in.u32();
  if (version != kZFieldVersion) {
    throw Error(ErrorKind::Format, what + ": unsupported z-field version " + std::to_string(version));
  }
  const std::uint32_t levels = in.u32();
  if (levels == 0 || levels > 32) throw Error(ErrorKind::Format, what + ": invalid level count");
  std::vector<Field2D> out;
  std::vector<Index> ws, hs, cs;
  for (std::uint32_t k = 0; k < levels; ++k) {
    const std::uint32_t w = in.u32(), h = in.u32(), c = in.u32();
    ws.push_back(w);
    hs.push_back(h);
    cs.push_back(c);
    check_zfield_levels(ws, hs, cs, what);
    const std::size_t n = static_cast<std::size_t>(w) * h * c;
    if (n > in.remaining() / 4) throw Error(ErrorKind::CorruptFile, what + ": truncated payload");
    Field2D z(w, h, c);
    for (std::size_t i = 0; i < n; ++i) z.data()[static_cast<Index>(i)] = in.f32();
    out.push_back(std::move(z));
  }
  if (!in.at_end()) throw Error(ErrorKind::CorruptFile, what + ": trailing bytes after z-field payload");
  return out;
}

void write_zfield(const fs::path& path, const std::vector<Field2D>& levels) {
  if (levels.empty()) throw Error(ErrorKind::InvalidArgument, "write_zfield: no levels");
  std::vector<Index> ws, hs, cs;
  for (const auto& z : levels) {
    ws.push_back(z.width());
    hs.push_back(z.height());
    cs.push_back(z.channels());
  }
  check_zfield_levels(ws, hs, cs, path.string());
  ByteWriter out;
  out.bytes = {'N', 'X', 'Z', 'F'};
  out.u32(kZFieldVersion);
  out.u32(static_cast<std::uint32_t>(levels.size()));
  for (const auto& z : levels) {
    out.u32(static_cast<std::uint32_t>(z.width()));
    out.u32(static_cast<std::uint32_t>(z.height()));
    out.u32(static_cast<std::uint32_t>(z.channels()));
    for (Index i = 0; i < z.size(); ++i) out.f32(static_cast<float>(z.data()[i]));
  }
  write_bytes(path, out.bytes);
}

}  // namespace nxf
