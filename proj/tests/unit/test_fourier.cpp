#include <doctest.h>

#include "oracles.hpp"

using namespace kamtori;

TEST_CASE("forward transform matches the direct O(N^2) sum in one and two dimensions") {
  std::mt19937_64 rng(7);
  for (const GridShape& g : {GridShape::uniform(1, 32), GridShape({8, 16})}) {
    const std::vector<double> samples = oracle::random_vector(rng, 2 * g.total());
    FourierSeries f = FourierSeries::from_grid(g, 2, 1, samples);
    f.ensure_coeffs();
    std::vector<int> k(g.dim());
    bool nyq = false;
    double worst = 0.0;
    for (int comp = 0; comp < 2; ++comp) {
      const std::vector<double> part(samples.begin() + comp * g.total(), samples.begin() + (comp + 1) * g.total());
      for (std::size_t i = 0; i < g.packed(); ++i) {
        g.wavenumber(i, k.data(), &nyq);
        worst = std::max(worst, std::abs(f.coeffs(comp)[i] - oracle::direct_dft(g, part, k)));
      }
    }
    CHECK(worst < 1e-14);
  }
}

TEST_CASE("grid and coefficient representations round-trip") {
  std::mt19937_64 rng(11);
  const GridShape g({16, 8});
  const std::vector<double> samples = oracle::random_vector(rng, g.total());
  FourierSeries f = to_grid(to_coeffs(FourierSeries::from_grid(g, 1, 1, samples)));
  double worst = 0.0;
  for (std::size_t p = 0; p < g.total(); ++p) worst = std::max(worst, std::abs(f.at(0, p) - samples[p]));
  CHECK(worst < 1e-14);
}

TEST_CASE("derivative, rotation and evaluation agree with closed forms") {
  const GridShape g = GridShape::uniform(1, 64);
  std::vector<double> v(g.total());
  for (std::size_t p = 0; p < g.total(); ++p) {
    double t;
    g.point(p, &t);
    v[p] = std::sin(oracle::kTwoPi * 3 * t) + 0.5 * std::cos(oracle::kTwoPi * 5 * t);
  }
  const FourierSeries f = FourierSeries::from_grid(g, 1, 1, v);
  const FourierSeries df = derivative(f, 0);
  const double shift = 0.123;
  const FourierSeries rf = to_grid(rotate(f, std::vector<double>{shift}));
  double e_der = 0.0, e_rot = 0.0, e_eval = 0.0;
  for (std::size_t p = 0; p < g.total(); ++p) {
    double t;
    g.point(p, &t);
    const double exact_der = oracle::kTwoPi * (3 * std::cos(oracle::kTwoPi * 3 * t) -
                                               2.5 * std::sin(oracle::kTwoPi * 5 * t));
    e_der = std::max(e_der, std::abs(df.at(0, p) - exact_der));
    const double ts = t + shift;
    e_rot = std::max(e_rot, std::abs(rf.at(0, p) - (std::sin(oracle::kTwoPi * 3 * ts) +
                                                      0.5 * std::cos(oracle::kTwoPi * 5 * ts))));
  }
  for (double t : {0.01, 0.377, 0.9}) {
    const double exact = std::sin(oracle::kTwoPi * 3 * t) + 0.5 * std::cos(oracle::kTwoPi * 5 * t);
    e_eval = std::max(e_eval, std::abs(evaluate_at(f, std::vector<double>{t})[0] - exact));
  }
  CHECK(e_der < 1e-11);
  CHECK(e_rot < 1e-13);
  CHECK(e_eval < 1e-13);
}

TEST_CASE("resampling a trigonometric polynomial preserves its values") {
  std::mt19937_64 rng(3);
  const FourierSeries f = oracle::smooth_field(rng, GridShape::uniform(1, 16), 2);
  const FourierSeries up = to_grid(resample(f, GridShape::uniform(1, 64)));
  const FourierSeries back = to_grid(resample(up, GridShape::uniform(1, 16)));
  double worst = 0.0;
  for (std::size_t p = 0; p < 64; ++p) {
    double t;
    up.shape().point(p, &t);
    const std::vector<double> exact = evaluate_at(f, std::vector<double>{t});
    for (int c = 0; c < 2; ++c) worst = std::max(worst, std::abs(up.at(c, p) - exact[c]));
  }
  const FourierSeries fg = to_grid(f);
  for (std::size_t p = 0; p < 16; ++p) {
    for (int c = 0; c < 2; ++c) worst = std::max(worst, std::abs(back.at(c, p) - fg.at(c, p)));
  }
  CHECK(worst < 1e-13);
}

TEST_CASE("averages, sup norm and tail fraction") {
  const GridShape g = GridShape::uniform(1, 32);
  std::vector<double> v(32);
  for (std::size_t p = 0; p < 32; ++p) {
    double t;
    g.point(p, &t);
    v[p] = 2.0 + std::cos(oracle::kTwoPi * t);
  }
  FourierSeries f = FourierSeries::from_grid(g, 1, 1, v);
  CHECK(average(f)[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(sup_norm(f) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(tail_fraction(f) < 1e-15);
  CHECK(std::abs(average(subtract_average(f))[0]) < 1e-15);

  // All energy above N/4.
  for (std::size_t p = 0; p < 32; ++p) {
    double t;
    g.point(p, &t);
    v[p] = std::cos(oracle::kTwoPi * 12 * t);
  }
  CHECK(tail_fraction(FourierSeries::from_grid(g, 1, 1, v)) == doctest::Approx(1.0));
}

TEST_CASE("cohomology solver inverts phi - phi o T exactly on the spectrum") {
  std::mt19937_64 rng(5);
  const RotationVector omega = RotationVector::golden();
  const GridShape g = GridShape::uniform(1, 128);
  const FourierSeries phi = subtract_average(oracle::smooth_field(rng, g, 1));
  const FourierSeries eta = field_add(phi, rotate(phi, omega), -1.0);
  const CohomologyResult r = solve_cohomology_constant(eta, omega);
  const FourierSeries diff = field_add(r.phi, phi, -1.0);
  CHECK(sup_norm(diff) < 1e-13);
  CHECK(r.min_divisor > 0.0);

  // Nonzero average is an obstruction.
  std::vector<double> one(g.total(), 1.0);
  CHECK_THROWS_AS(solve_cohomology_constant(FourierSeries::from_grid(g, 1, 1, one), omega), ObstructionError);

  // A near-resonant frequency trips the divisor floor.
  CohomologyOptions tight;
  tight.divisor_floor = 0.5;
  CHECK_THROWS_AS(solve_cohomology_constant(eta, omega, tight), SmallDivisorError);
}

TEST_CASE("two-sided constant-coefficient solver") {
  std::mt19937_64 rng(9);
  const RotationVector omega = RotationVector::sqrt2();
  const GridShape g = GridShape::uniform(1, 64);
  const FourierSeries delta = oracle::smooth_field(rng, g, 1);
  const double a = 1.7, b = 0.4;
  const FourierSeries eta = field_add(field_scale(delta, a), field_scale(rotate(delta, omega), b), -1.0);
  const FourierSeries got = solve_twosided_constant(a, b, eta, omega);
  CHECK(sup_norm(field_add(got, delta, -1.0)) < 1e-14);
}

TEST_CASE("rotation vectors: named constants, lists and rational detection") {
  const RotationVector g = RotationVector::parse("golden");
  CHECK(g.omega[0] == (std::sqrt(5.0) - 1.0) / 2.0);
  CHECK(g.nu == 3.0);
  const RotationVector s = RotationVector::parse("sqrt2");
  CHECK(s.omega[0] == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-16));
  const RotationVector two = RotationVector::parse("golden,sqrt2");
  REQUIRE(two.dim() == 2);
  CHECK(two.omega[1] == s.omega[0]);
  CHECK(RotationVector::parse("0.25").omega[0] == 0.25);
  CHECK_THROWS_AS(RotationVector::parse(""), ParameterError);
  CHECK_THROWS_AS(RotationVector::parse("abc"), ParameterError);
  CHECK_THROWS_AS(RotationVector(std::vector<double>{0.25}).check_irrational(16), ParameterError);
  CHECK_NOTHROW(g.check_irrational(1024));
}

TEST_CASE("Diophantine witness matches brute force over integer vectors") {
  const RotationVector g = RotationVector::golden();
  const DiophantineReport rep = diophantine_witness(g, 200);
  double worst = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double x = k * g.omega[0];
    worst = std::max(worst, 1.0 / (std::abs(x - std::round(x)) * k));
  }
  CHECK(rep.worst_ratio == doctest::Approx(worst).epsilon(1e-12));
  CHECK(rep.ok);
  // For the golden mean the worst ratio approaches 1 + golden = 2.618... from below.
  CHECK(rep.worst_ratio < 2.6181);
}
