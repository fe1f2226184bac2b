#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>
#include <unistd.h>

#include "nxf/io.hpp"
#include "nxf/random.hpp"

using namespace nxf;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("nxf_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& name) const { return path / name; }
};

// round every sample through float32 so the field is exactly representable
Field2D float_exact(Field2D f) {
  for (Index i = 0; i < f.size(); ++i) f.data()[i] = static_cast<float>(f.data()[i]);
  return f;
}

bool bit_equal(const Field2D& a, const Field2D& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data().data(), b.data().data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) b[at + k] = static_cast<std::uint8_t>(v >> (8 * k));
}

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Numeric;
}

}  // namespace

TEST_CASE(".flo") {
  TempDir tmp;
  Rng rng(51);
  const auto flow = float_exact(random_field(17, 9, 2, rng, -50, 50));
  const auto path = tmp / "a.flo";
  write_flo(path, flow);

  SUBCASE("round trip is bitwise") {
    CHECK(bit_equal(read_flo(path), flow));
    const auto bytes = read_bytes(path);
    write_flo(tmp / "b.flo", read_flo(path));
    CHECK(read_bytes(tmp / "b.flo") == bytes);
  }
  SUBCASE("header layout") {
    const auto bytes = read_bytes(path);
    REQUIRE(bytes.size() == 12 + 17 * 9 * 2 * 4);
    float magic;
    std::memcpy(&magic, bytes.data(), 4);  // little-endian host
    CHECK(magic == 202021.25f);
    CHECK(bytes[4] == 17);
    CHECK(bytes[8] == 9);
  }
  SUBCASE("bad magic") {
    auto bytes = read_bytes(path);
    bytes[0] ^= 0xff;
    write_bytes(tmp / "bad.flo", bytes);
    CHECK(kind_of([&] { read_flo(tmp / "bad.flo"); }) == ErrorKind::Format);
  }
  SUBCASE("zero width") {
    auto bytes = read_bytes(path);
    put_u32(bytes, 4, 0);
    write_bytes(tmp / "zero.flo", bytes);
    CHECK(kind_of([&] { read_flo(tmp / "zero.flo"); }) == ErrorKind::Format);
  }
  SUBCASE("truncated payload") {
    auto bytes = read_bytes(path);
    bytes.resize(bytes.size() - 3);
    write_bytes(tmp / "short.flo", bytes);
    CHECK(kind_of([&] { read_flo(tmp / "short.flo"); }) == ErrorKind::CorruptFile);
    bytes.resize(6);
    write_bytes(tmp / "stub.flo", bytes);
    CHECK(kind_of([&] { read_flo(tmp / "stub.flo"); }) == ErrorKind::CorruptFile);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_flo(tmp / "nope.flo"), Error);
  }
}

TEST_CASE("KITTI PNG") {
  TempDir tmp;
  Rng rng(52);
  Field2D flow(13, 6, 2);
  Mask valid(13, 6);
  for (Index p = 0; p < flow.pixels(); ++p) {
    // representable values: multiples of 1/64 inside the 16-bit range
    flow.data()[2 * p] = std::round(rng.uniform(-200, 200) * 64) / 64;
    flow.data()[2 * p + 1] = std::round(rng.uniform(-200, 200) * 64) / 64;
    valid.set(p, rng.uniform() < 0.7);
  }
  const auto masked = apply_mask(flow, valid);
  const auto path = tmp / "k.png";
  write_kitti_png(path, flow, valid);

  SUBCASE("round trip on representable values") {
    const auto back = read_kitti_png(path);
    CHECK(back.valid == valid);
    CHECK(bit_equal(back.flow, masked));
    write_kitti_png(tmp / "k2.png", back.flow, back.valid);
    CHECK(read_bytes(tmp / "k2.png") == read_bytes(path));
  }
  SUBCASE("encoding zero point and unit step") {
    Field2D f(3, 1, 2);
    f(1, 0, 0) = 1.0;
    f(2, 0, 0) = 7.0;  // masked out below
    Mask v(3, 1, true);
    v.set(2, 0, false);
    write_kitti_png(tmp / "z.png", f, v);
    const auto back = read_kitti_png(tmp / "z.png");
    CHECK(back.flow(0, 0, 0) == 0.0);
    CHECK(back.flow(1, 0, 0) == 1.0);
    CHECK(back.flow(2, 0, 0) == 0.0);
    CHECK_FALSE(back.valid(2, 0));
  }
  SUBCASE("8-bit PNG is rejected") {
    RgbImage img{4, 4, std::vector<std::uint8_t>(48, 128)};
    write_png_rgb(tmp / "eight.png", img);
    CHECK(kind_of([&] { read_kitti_png(tmp / "eight.png"); }) == ErrorKind::Format);
  }
  SUBCASE("truncated PNG") {
    auto bytes = read_bytes(path);
    bytes.resize(bytes.size() / 2);
    write_bytes(tmp / "cut.png", bytes);
    CHECK_THROWS_AS(read_kitti_png(tmp / "cut.png"), Error);
  }
  SUBCASE("read_flow_any dispatches on the extension") {
    CHECK(read_flow_any(path).valid == valid);
    write_flo(tmp / "f.flo", masked);
    CHECK(read_flow_any(tmp / "f.flo").valid.count() == 13 * 6);
  }
}

TEST_CASE("images and masks") {
  TempDir tmp;
  SUBCASE("mask round trip") {
    Rng rng(53);
    Mask m(21, 8);
    for (Index p = 0; p < m.pixels(); ++p) m.set(p, rng.uniform() < 0.3);
    write_mask(tmp / "m.png", m);
    CHECK(read_mask(tmp / "m.png") == m);
  }
  SUBCASE("RGB PNG normalises to [0, 1]") {
    RgbImage img{2, 1, {0, 51, 255, 255, 255, 255}};
    write_png_rgb(tmp / "i.png", img);
    const auto f = read_image(tmp / "i.png");
    CHECK(f.channels() == 3);
    CHECK(f(0, 0, 0) == 0.0);
    CHECK(f(0, 0, 1) == 0.2);
    CHECK(f(0, 0, 2) == 1.0);
    CHECK(f(1, 0, 1) == 1.0);
  }
  SUBCASE("binary PGM expands to three channels") {
    std::vector<std::uint8_t> bytes{'P', '5', '\n', '2', ' ', '1', '\n', '2', '5', '5', '\n', 0, 255};
    write_bytes(tmp / "g.pgm", bytes);
    const auto f = read_image(tmp / "g.pgm");
    CHECK(f.width() == 2);
    CHECK(f(1, 0, 0) == 1.0);
    CHECK(f(1, 0, 2) == 1.0);
    CHECK(f(0, 0, 1) == 0.0);
  }
}

TEST_CASE("z-field container") {
  TempDir tmp;
  Rng rng(54);
  std::vector<Field2D> levels;
  for (Index w = 40, h = 27; levels.size() < 4; w /= 2, h /= 2) {
    levels.push_back(float_exact(random_field(w, h, 5, rng, -3, 3)));
  }
  const auto path = tmp / "z.nxzf";
  write_zfield(path, levels);

  SUBCASE("round trip is bitwise") {
    const auto back = read_zfield(path);
    REQUIRE(back.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) CHECK(bit_equal(back[k], levels[k]));
  }
  SUBCASE("header fields") {
    const auto bytes = read_bytes(path);
    CHECK(std::memcmp(bytes.data(), "NXZF", 4) == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[8] == 4);
    CHECK(bytes[12] == 40);
    CHECK(bytes[16] == 27);
    CHECK(bytes[20] == 5);
  }
  SUBCASE("wrong channel count") {
    CHECK_THROWS_AS(write_zfield(tmp / "bad.nxzf", {Field2D(8, 8, 4)}), Error);
    auto bytes = read_bytes(path);
    put_u32(bytes, 20, 4);
    write_bytes(tmp / "c4.nxzf", bytes);
    CHECK_THROWS_AS(read_zfield(tmp / "c4.nxzf"), Error);
  }
  SUBCASE("levels must halve") {
    CHECK_THROWS_AS(write_zfield(tmp / "bad.nxzf", {Field2D(16, 16, 5), Field2D(16, 16, 5)}), Error);
    auto bytes = read_bytes(path);
    put_u32(bytes, 12, 41);
    write_bytes(tmp / "w.nxzf", bytes);
    CHECK_THROWS_AS(read_zfield(tmp / "w.nxzf"), Error);
  }
  SUBCASE("magic, version and truncation") {
    auto bytes = read_bytes(path);
    auto bad = bytes;
    bad[0] = 'X';
    write_bytes(tmp / "m.nxzf", bad);
    CHECK(kind_of([&] { read_zfield(tmp / "m.nxzf"); }) == ErrorKind::Format);
    bad = bytes;
    put_u32(bad, 4, 2);
    write_bytes(tmp / "v.nxzf", bad);
    CHECK(kind_of([&] { read_zfield(tmp / "v.nxzf"); }) == ErrorKind::Format);
    bad = bytes;
    bad.resize(bad.size() - 1);
    write_bytes(tmp / "t.nxzf", bad);
    CHECK(kind_of([&] { read_zfield(tmp / "t.nxzf"); }) == ErrorKind::CorruptFile);
  }
}

TEST_CASE("flow_to_color") {
  SUBCASE("zero flow is white") {
    const auto img = flow_to_color(Field2D(5, 4, 2));
    for (auto v : img.pixels) CHECK(v == 255);
  }
  SUBCASE("a full rotation covers the hue circle") {
    const Index n = 360;
    Field2D f(n, 1, 2);
    for (Index i = 0; i < n; ++i) {
      const double t = 2 * M_PI * static_cast<double>(i) / n;
      f(i, 0, 0) = std::cos(t);
      f(i, 0, 1) = std::sin(t);
    }
    const auto img = flow_to_color(f, 1.0);
    std::set<int> sectors;
    for (Index i = 0; i < n; ++i) {
      const double r = img.at(i, 0, 0), g = img.at(i, 0, 1), b = img.at(i, 0, 2);
      const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
      REQUIRE(mx > mn);
      double h;
      if (mx == r) h = std::fmod((g - b) / (mx - mn) + 6, 6);
      else if (mx == g) h = (b - r) / (mx - mn) + 2;
      else h = (r - g) / (mx - mn) + 4;
      sectors.insert(static_cast<int>(h * 2));  // 30-degree bins
    }
    CHECK(sectors.size() == 12);
  }
  SUBCASE("scaling the flow and max_mag together changes nothing") {
    Rng rng(55);
    const auto f = random_field(9, 9, 2, rng, -4, 4);
    Field2D g = f;
    g.data() *= 8.0;  // power of two keeps the division exact
    CHECK(flow_to_color(f, 3.0).pixels == flow_to_color(g, 24.0).pixels);
  }
}
