#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

#include "nxf/random.hpp"
#include "nxf/tensor_field.hpp"

using namespace nxf;

namespace {

// Independent eigen oracle for checking tensor invariants.
Eigen::Vector2d eigenvalues(const Eigen::Matrix2d& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(m, Eigen::EigenvaluesOnly).eigenvalues();
}

void check_tensor_invariants(const TensorField<double>& t) {
  for (Index p = 0; p < t.pixels(); ++p) {
    const auto ev = eigenvalues(t.tensor(p));
    CHECK(ev[0] >= -1e-12);
    CHECK(ev[1] <= 1 + 1e-12);
    CHECK(t.alpha[p] >= 0);
    CHECK(t.alpha[p] <= 0.5);
    CHECK(std::abs(t.beta[p]) <= 1 - 2 * t.alpha[p] + 1e-15);
  }
}

}  // namespace

TEST_CASE("gaussian_smooth") {
  Rng rng(11);
  SUBCASE("rho = 0 is the identity") {
    const auto f = random_field(7, 5, 2, rng);
    CHECK(gaussian_smooth(f, 0.0) == f);
  }
  SUBCASE("constants survive any rho") {
    for (double rho : {0.5, 1.0, 2.3, 6.0}) {
      const auto out = gaussian_smooth(Field2D::constant(9, 9, 1, 3.0), rho);
      CHECK((out.data() - 3.0).abs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("an impulse keeps unit mass") {
    Field2D f(21, 21, 1);
    f(10, 10) = 1;
    const auto out = gaussian_smooth(f, 1.0);
    double sum = 0;
    for (Index i = 0; i < out.size(); ++i) sum += out.data()[i];
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(out(10, 10) > out(11, 10));
    CHECK(out(11, 10) == doctest::Approx(out(10, 11)));
  }
  SUBCASE("negative rho is rejected") {
    CHECK_THROWS_AS(gaussian_smooth(Field2D(3, 3, 1), -1.0), Error);
  }
}

TEST_CASE("structure_tensor") {
  SUBCASE("constant image") {
    const auto st = structure_tensor(Field2D::constant(8, 8, 3, 0.4), 1.0);
    CHECK((st.s11.abs().maxCoeff()) == 0.0);
    CHECK((st.s12.abs().maxCoeff()) == 0.0);
    CHECK((st.s22.abs().maxCoeff()) == 0.0);
  }
  SUBCASE("horizontal ramp") {
    Field2D img(8, 8, 1);
    for (Index y = 0; y < 8; ++y)
      for (Index x = 0; x < 8; ++x) img(x, y) = static_cast<double>(x);
    const auto st = structure_tensor(img, 0.0);
    for (Index y = 1; y < 7; ++y)
      for (Index x = 1; x < 7; ++x) {
        const Index p = y * 8 + x;
        CHECK(st.s11[p] == 1.0);
        CHECK(st.s12[p] == 0.0);
        CHECK(st.s22[p] == 0.0);
      }
  }
  SUBCASE("random images give PSD tensors") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
      const auto st = structure_tensor(random_field(8, 8, 3, rng, 0, 1), trial % 2 ? 1.0 : 0.0);
      for (Index p = 0; p < 64; ++p) CHECK(eigenvalues(st.at(p))[0] >= -1e-9);
    }
  }
}

TEST_CASE("eigen2x2") {
  SUBCASE("analytic cases") {
    const auto e = eigen2x2(2.0, 1.0, 2.0);
    CHECK(e.mu1 == doctest::Approx(3.0));
    CHECK(e.mu2 == doctest::Approx(1.0));
    CHECK(e.v1.x() == doctest::Approx(1 / std::sqrt(2.0)));
    CHECK(e.v1.y() == doctest::Approx(1 / std::sqrt(2.0)));

    const auto f = eigen2x2(1.0, 0.0, 0.0);
    CHECK(f.mu1 == 1.0);
    CHECK(f.mu2 == 0.0);
    CHECK(f.v1.x() == 1.0);
    CHECK(f.v1.y() == 0.0);
  }
  SUBCASE("isotropic tie") {
    const auto e = eigen2x2(0.5, 0.0, 0.5);
    CHECK(e.v1 == Eigen::Vector2d(1, 0));
    CHECK(e.v2 == Eigen::Vector2d(0, 1));
  }
  SUBCASE("1000 random PSD matrices rebuild and match Eigen") {
    Rng rng(13);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
      Eigen::Matrix2d g;
      g << rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3);
      const Eigen::Matrix2d s = g * g.transpose();
      const auto e = eigen2x2(s(0, 0), s(0, 1), s(1, 1));
      worst = std::max(worst, (e.reconstruct() - s).cwiseAbs().maxCoeff());
      CHECK(e.mu1 >= e.mu2);
      CHECK(std::abs(e.v1.norm() - 1) < 1e-9);
      CHECK(std::abs(e.v2.norm() - 1) < 1e-9);
      CHECK(std::abs(e.v1.dot(e.v2)) < 1e-9);
      const auto ref = eigenvalues(s);
      CHECK(e.mu2 == doctest::Approx(ref[0]).epsilon(1e-9).scale(1));
      CHECK(e.mu1 == doctest::Approx(ref[1]).epsilon(1e-9).scale(1));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("perona_malik") {
  CHECK(perona_malik(0.0, 2.0) == 1.0);
  CHECK(perona_malik(2.0, 2.0) == 0.5);
  CHECK(perona_malik(1e-4, 1e-4) == 0.5);
  CHECK(perona_malik(4.0, 2.0) == doctest::Approx(0.2));
  CHECK(perona_malik(-4.0, 2.0) == perona_malik(4.0, 2.0));
  CHECK(perona_malik(3.0, 2.0) < perona_malik(1.0, 2.0));
}

TEST_CASE("eed_tensor") {
  SUBCASE("constant image gives the identity") {
    const auto t = eed_tensor(Field2D::constant(10, 10, 3, 0.3), {1e-4, 1.0}, 0.2);
    CHECK((t.a == 1.0).all());
    CHECK((t.b == 0.0).all());
    CHECK((t.c == 1.0).all());
    CHECK((t.alpha == 0.2).all());
    CHECK((t.beta == 0.0).all());
  }
  SUBCASE("ramp with lambda = 1 halves diffusion across the gradient") {
    Field2D img(8, 8, 1);
    for (Index y = 0; y < 8; ++y)
      for (Index x = 0; x < 8; ++x) img(x, y) = static_cast<double>(x);
    const auto t = eed_tensor(img, {1.0, 0.0}, 0.0);
    const Index p = 3 * 8 + 3;
    CHECK(t.a[p] == doctest::Approx(0.5));
    CHECK(t.b[p] == doctest::Approx(0.0));
    CHECK(t.c[p] == doctest::Approx(1.0));
  }
  SUBCASE("random images produce valid tensors with eigenvalues in (0, 1]") {
    Rng rng(14);
    for (int trial = 0; trial < 5; ++trial) {
      const auto t = eed_tensor(random_field(12, 12, 3, rng, 0, 1), {0.05, 1.0}, rng.uniform(0, 0.5));
      check_tensor_invariants(t);
      for (Index p = 0; p < t.pixels(); ++p) CHECK(eigenvalues(t.tensor(p))[0] > 0);
    }
  }
  SUBCASE("alpha outside [0, 1/2] is rejected") {
    CHECK_THROWS_AS(eed_tensor(Field2D(4, 4, 3), {1.0, 1.0}, 0.6), Error);
  }
}

TEST_CASE("z_to_tensor") {
  auto single = [](double z0, double z1, double z2, double z3, double z4, double lambda = 1.0) {
    Field2D z(1, 1, 5);
    z(0, 0, 0) = z0;
    z(0, 0, 1) = z1;
    z(0, 0, 2) = z2;
    z(0, 0, 3) = z3;
    z(0, 0, 4) = z4;
    return z_to_tensor(z, lambda);
  };
  SUBCASE("neutral feature vector") {
    const auto t = single(0, 0, 0, 1, 0);
    CHECK(t.alpha[0] == 0.25);
    CHECK(t.a[0] == 1.0);
    CHECK(t.b[0] == 0.0);
    CHECK(t.c[0] == 1.0);
    CHECK(t.beta[0] == 0.0);
  }
  SUBCASE("large z0 drives alpha to 1/2 and beta to 0") {
    const auto t = single(50, 0.3, 2.0, 1, 1);
    CHECK(t.alpha[0] == doctest::Approx(0.5));
    CHECK(std::abs(t.beta[0]) < 1e-15);
    const auto u = single(-800, 0.3, 2.0, 1, 1);
    CHECK(std::isfinite(u.alpha[0]));
    CHECK(u.alpha[0] >= 0);
  }
  SUBCASE("equal eigenvalues give an isotropic tensor") {
    const double lambda = 0.7;
    const auto t = single(0, lambda, lambda, 1, 1, lambda);
    CHECK(t.a[0] == doctest::Approx(0.5));
    CHECK(t.c[0] == doctest::Approx(0.5));
    CHECK(std::abs(t.b[0]) < 1e-15);
  }
  SUBCASE("degenerate direction falls back to the x axis") {
    const auto t = single(0, 2.0, 0.0, 0, 0);
    CHECK(t.a[0] == doctest::Approx(perona_malik(2.0, 1.0)));
    CHECK(t.c[0] == doctest::Approx(1.0));
    CHECK(t.b[0] == 0.0);
  }
  SUBCASE("positive rescaling of the direction changes nothing") {
    Rng rng(15);
    for (int i = 0; i < 200; ++i) {
      const double z[5] = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-2, 2),
                           rng.uniform(-2, 2)};
      const double k = rng.uniform(0.01, 100);
      const auto t = single(z[0], z[1], z[2], z[3], z[4]);
      const auto s = single(z[0], z[1], z[2], k * z[3], k * z[4]);
      CHECK(std::abs(t.a[0] - s.a[0]) < 1e-9);
      CHECK(std::abs(t.b[0] - s.b[0]) < 1e-9);
      CHECK(std::abs(t.c[0] - s.c[0]) < 1e-9);
    }
  }
  SUBCASE("rotating the direction by 90 degrees swaps the eigenvalues") {
    Rng rng(16);
    for (int i = 0; i < 200; ++i) {
      const double z1 = rng.uniform(-3, 3), z2 = rng.uniform(-3, 3);
      const double z3 = rng.uniform(-2, 2), z4 = rng.uniform(-2, 2);
      const auto t = single(0, z1, z2, z3, z4);
      const auto r = single(0, z2, z1, -z4, z3);
      CHECK(std::abs(t.a[0] - r.a[0]) < 1e-9);
      CHECK(std::abs(t.b[0] - r.b[0]) < 1e-9);
      CHECK(std::abs(t.c[0] - r.c[0]) < 1e-9);
    }
  }
  SUBCASE("random z-fields satisfy the tensor invariants") {
    Rng rng(17);
    const auto t = z_to_tensor(random_field(16, 16, 5, rng, -4, 4), 0.8);
    check_tensor_invariants(t);
  }
  SUBCASE("wrong channel count is rejected") {
    CHECK_THROWS_AS(z_to_tensor(Field2D(4, 4, 4), 1.0), Error);
  }
}
