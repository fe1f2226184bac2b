#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "nxf/metrics.hpp"
#include "nxf/random.hpp"

using namespace nxf;

namespace {

Field2D single(double u, double v) {
  Field2D f(1, 1, 2);
  f(0, 0, 0) = u;
  f(0, 0, 1) = v;
  return f;
}

Field2D rotated(const Field2D& f, double theta) {
  Field2D out = f;
  const double c = std::cos(theta), s = std::sin(theta);
  for (Index p = 0; p < f.pixels(); ++p) {
    const double u = f.data()[2 * p], v = f.data()[2 * p + 1];
    out.data()[2 * p] = c * u - s * v;
    out.data()[2 * p + 1] = s * u + c * v;
  }
  return out;
}

}  // namespace

TEST_CASE("epe") {
  Rng rng(41);
  SUBCASE("identical fields score zero") {
    const auto f = random_field(9, 7, 2, rng);
    CHECK(epe(f, f) == 0.0);
  }
  SUBCASE("3-4-5 triangle") {
    CHECK(epe(single(0, 0), single(3, 4)) == 5.0);
  }
  SUBCASE("matches a direct summation") {
    const auto a = random_field(13, 11, 2, rng, -4, 4);
    const auto b = random_field(13, 11, 2, rng, -4, 4);
    double sum = 0;
    for (Index y = 0; y < 11; ++y)
      for (Index x = 0; x < 13; ++x) {
        const double du = a(x, y, 0) - b(x, y, 0), dv = a(x, y, 1) - b(x, y, 1);
        sum += std::sqrt(du * du + dv * dv);
      }
    CHECK(std::abs(epe(a, b) - sum / 143.0) < 1e-9);
  }
  SUBCASE("scope restricts the average") {
    Field2D est(2, 1, 2), gt(2, 1, 2);
    gt(0, 0, 0) = 3;
    gt(0, 0, 1) = 4;
    gt(1, 0, 0) = 1;
    Mask m(2, 1);
    m.set(1, 0, true);
    CHECK(epe(est, gt, m) == 1.0);
    CHECK(epe(est, gt) == 3.0);
  }
  SUBCASE("invariant under a global rotation") {
    const auto a = random_field(10, 10, 2, rng, -3, 3);
    const auto b = random_field(10, 10, 2, rng, -3, 3);
    for (double theta : {0.3, 1.7, -2.2}) {
      CHECK(std::abs(epe(rotated(a, theta), rotated(b, theta)) - epe(a, b)) < 1e-9);
    }
  }
  SUBCASE("empty scope is an undefined metric") {
    try {
      epe(single(0, 0), single(1, 1), Mask(1, 1));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::UndefinedMetric);
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(epe(Field2D(2, 2, 2), Field2D(2, 3, 2)), Error);
  }
}

TEST_CASE("fl_rate") {
  SUBCASE("identical fields have no outliers") {
    Rng rng(42);
    const auto f = random_field(6, 6, 2, rng, -20, 20);
    CHECK(fl_rate(f, f, std::nullopt, FlMode::And) == 0.0);
    CHECK(fl_rate(f, f, std::nullopt, FlMode::Or) == 0.0);
  }
  SUBCASE("magnitude 10, error 4 is an outlier under both rules") {
    const auto gt = single(6, 8);
    const auto est = single(6, 12);
    CHECK(fl_rate(est, gt, std::nullopt, FlMode::And) == 1.0);
    CHECK(fl_rate(est, gt, std::nullopt, FlMode::Or) == 1.0);
  }
  SUBCASE("magnitude 100, error 2 is an inlier under the and rule") {
    const auto gt = single(60, 80);
    const auto est = single(60, 82);
    CHECK(fl_rate(est, gt, std::nullopt, FlMode::And) == 0.0);
    // 2 px is 2% of the magnitude: below both thresholds
    CHECK(fl_rate(est, gt, std::nullopt, FlMode::Or) == 0.0);
  }
  SUBCASE("the rules split on small errors at small magnitudes") {
    const auto gt = single(1, 0);
    const auto est = single(1.5, 0);
    CHECK(fl_rate(est, gt, std::nullopt, FlMode::And) == 0.0);
    CHECK(fl_rate(est, gt, std::nullopt, FlMode::Or) == 1.0);
  }
  SUBCASE("and never exceeds or") {
    Rng rng(43);
    for (int trial = 0; trial < 50; ++trial) {
      const auto gt = random_field(8, 8, 2, rng, -30, 30);
      const auto est = random_field(8, 8, 2, rng, -30, 30);
      CHECK(fl_rate(est, gt, std::nullopt, FlMode::And) <= fl_rate(est, gt, std::nullopt, FlMode::Or));
    }
  }
  SUBCASE("parsing") {
    CHECK(parse_fl_mode("and") == FlMode::And);
    CHECK(parse_fl_mode("or") == FlMode::Or);
    CHECK_THROWS_AS(parse_fl_mode("xor"), Error);
    CHECK(parse_scope("heldout") == EvalScope::HeldoutMask);
    CHECK_THROWS_AS(parse_scope("some"), Error);
  }
}

TEST_CASE("genmask") {
  SUBCASE("extreme densities") {
    CHECK(genmask(17, 9, 1.0, 3).count() == 153);
    CHECK(genmask(17, 9, 0.0, 3).count() == 0);
  }
  SUBCASE("exact count at 5% on 384x384") {
    const Mask a = genmask(384, 384, 0.05, 12345);
    CHECK(a.count() == 7372);
    CHECK(a == genmask(384, 384, 0.05, 12345));
    CHECK_FALSE(a == genmask(384, 384, 0.05, 12346));
  }
  SUBCASE("density error is below one pixel") {
    for (double d : {0.01, 0.1, 0.29, 0.333, 0.7}) {
      const Mask m = genmask(37, 23, d, 1);
      CHECK(std::abs(m.density() - d) <= 1.0 / (37 * 23));
      CHECK(m.density() <= d + 1e-12);
    }
  }
  SUBCASE("masks are nested across densities for a fixed seed") {
    const Mask lo = genmask(50, 50, 0.02, 8), hi = genmask(50, 50, 0.1, 8);
    for (Index p : lo.indices()) CHECK(hi.at(p));
  }
  SUBCASE("invalid density") {
    CHECK_THROWS_AS(genmask(4, 4, 1.5, 0), Error);
    CHECK_THROWS_AS(genmask(4, 4, -0.1, 0), Error);
  }
}

TEST_CASE("density_sweep") {
  const auto scene = testing::piecewise_affine_scene(64);
  const auto cfg = PipelineConfig::explicit_eed(3);
  SUBCASE("full density is exact") {
    const auto rows = density_sweep(scene.image, scene.flow, {1.0}, cfg, {1});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].epe == 0.0);
  }
  SUBCASE("row count and ordering") {
    const auto rows = density_sweep(scene.image, scene.flow, {0.05, 0.1}, cfg, {1, 2, 3});
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].density == 0.05);
    CHECK(rows[3].density == 0.1);
    CHECK(rows[4].seed == 2);
    CHECK(rows[0].n_pixels == 64 * 64);
  }
  SUBCASE("unknown scope counts only the unknown pixels") {
    const auto rows = density_sweep(scene.image, scene.flow, {0.05}, cfg, {4}, EvalScope::UnknownOnly);
    CHECK(rows[0].n_pixels == 64 * 64 - genmask_count(64 * 64, 0.05));
    const auto all = density_sweep(scene.image, scene.flow, {0.05}, cfg, {4});
    CHECK(rows[0].epe > all[0].epe);
  }
  SUBCASE("empty density list") {
    CHECK_THROWS_AS(density_sweep(scene.image, scene.flow, {}, cfg, {1}), Error);
  }
}

TEST_CASE("report CSV") {
  EvalReport r;
  r.density = 0.05;
  r.seed = 7;
  r.epe = 0.25;
  r.fl_rate = 0;
  r.n_pixels = 100;
  r.scope = EvalScope::UnknownOnly;
  std::ostringstream os;
  write_report_csv(os, {r});
  CHECK(os.str() == "density,seed,epe,fl,n_pixels,scope\n0.05,7,0.25,0,100,unknown\n");
}
