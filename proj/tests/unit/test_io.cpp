#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

using namespace kamtori;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path d = fs::temp_directory_path() / "kamtori_io_test";
  fs::create_directories(d);
  return d;
}

std::string bytes_of(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TorusEmbedding solved_torus(double eps, int n) {
  const MapPtr F = model_standard_map(eps);
  const RotationVector omega = RotationVector::golden();
  const std::vector<double> base = {0.0, omega.omega[0]};
  SolverOptions o;
  o.counterterm = true;
  return newton_solve(constant_embedding(*F, omega, GridShape::uniform(1, n), base), *F, o).torus;
}

bool same_coeffs(const FourierSeries& a, const FourierSeries& b) {
  return to_coeffs(a).coeff_data() == to_coeffs(b).coeff_data();
}

}  // namespace

TEST_CASE("series blocks round-trip through a stream") {
  std::mt19937_64 rng(51);
  SeriesBlock b;
  b.role = "test";
  b.series = oracle::smooth_field(rng, GridShape({8, 4}), 2, 3);
  b.omega = RotationVector({0.1, 0.2}, 3.0, 1.0);
  b.attrs = {{"alpha", "1"}, {"beta", "x y"}};
  std::stringstream ss;
  write_block(ss, b);
  write_block(ss, b);
  const std::vector<SeriesBlock> back = read_blocks(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].role == "test");
  CHECK(back[0].series.rows() == 2);
  CHECK(back[0].series.cols() == 3);
  CHECK(back[0].series.shape() == b.series.shape());
  CHECK(back[0].omega.omega == b.omega.omega);
  CHECK(back[0].attrs == b.attrs);
  CHECK(same_coeffs(back[1].series, b.series));
}

TEST_CASE("torus files round-trip bit for bit and are deterministic") {
  const TorusEmbedding K = solved_torus(0.3, 256);
  const fs::path a = scratch_dir() / "a.fts", b = scratch_dir() / "b.fts";
  save_torus(a.string(), K, {{"model", "standard"}});
  save_torus(b.string(), K, {{"model", "standard"}});
  CHECK(bytes_of(a) == bytes_of(b));
  CHECK(bytes_of(a).substr(0, 4) == "FTS1");

  Attributes attrs;
  const TorusEmbedding back = load_torus(a.string(), &attrs);
  CHECK(attrs.at("model") == "standard");
  CHECK(back.omega.omega == K.omega.omega);
  CHECK(back.omega.nu == K.omega.nu);
  CHECK(back.lambda == K.lambda);
  CHECK(back.angle_slots == K.angle_slots);
  CHECK(back.winding.I == K.winding.I);
  CHECK(back.K0.has_value() == K.K0.has_value());
  CHECK(same_coeffs(back.K, K.K));
  const fs::path c = scratch_dir() / "c.fts";
  save_torus(c.string(), back, {{"model", "standard"}});
  CHECK(bytes_of(a) == bytes_of(c));
}

TEST_CASE("splitting and whisker files round-trip") {
  const MapPtr F = model_rotator_pendulum(1.0, 0.05);
  const RotationVector omega = RotationVector::golden();
  const std::vector<double> base = {0.0, 0.0, omega.omega[0], 0.0};
  const SolveResult r = newton_solve(constant_embedding(*F, omega, GridShape::uniform(1, 128), base), *F);
  const fs::path sp = scratch_dir() / "s.fts";
  save_splitting(sp.string(), *r.splitting, omega);
  const InvariantSplitting S = load_splitting(sp.string());
  CHECK(S.stable_rank == 1);
  CHECK(S.unstable_rank == 1);
  CHECK(same_coeffs(S.Pi_s, r.splitting->Pi_s));
  REQUIRE(S.Pi_u.has_value());
  CHECK(same_coeffs(*S.Pi_u, *r.splitting->Pi_u));

  const Whisker w = order_by_order(r.torus, solve_bundle_and_multiplier(r.torus, *F, S, Side::stable), *F, 6);
  const fs::path wp = scratch_dir() / "w.ftt";
  save_whisker(wp.string(), w);
  CHECK(bytes_of(wp).substr(0, 4) == "FTT1");
  const Whisker back = load_whisker(wp.string());
  CHECK(back.mu == w.mu);
  CHECK(back.rho == w.rho);
  CHECK(back.s_max == w.s_max);
  REQUIRE(back.order() == 6);
  for (int n = 0; n <= 6; ++n) CHECK(same_coeffs(back.W.orders[n], w.W.orders[n]));
  CHECK(back.base.omega.omega == w.base.omega.omega);
}

TEST_CASE("malformed files raise format errors") {
  const fs::path bad = scratch_dir() / "bad.fts";
  {
    std::ofstream os(bad, std::ios::binary);
    os << "XXXX0000";
  }
  CHECK_THROWS_AS(load_torus(bad.string()), FormatError);
  CHECK_THROWS_AS(load_torus((scratch_dir() / "missing.fts").string()), FormatError);

  const TorusEmbedding K = solved_torus(0.1, 64);
  const fs::path good = scratch_dir() / "good.fts";
  save_torus(good.string(), K);
  const std::string full = bytes_of(good);
  const fs::path cut = scratch_dir() / "cut.fts";
  {
    std::ofstream os(cut, std::ios::binary);
    os << full.substr(0, full.size() / 2);
  }
  CHECK_THROWS_AS(load_torus(cut.string()), FormatError);
  CHECK_THROWS_AS(load_whisker(good.string()), FormatError);
}

TEST_CASE("CSV writers") {
  const TorusEmbedding K = solved_torus(0.2, 32);
  std::ostringstream grid;
  write_grid_csv(grid, K.K, {"q", "p"});
  std::istringstream in(grid.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "theta0,q,p");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 32);

  std::ostringstream log;
  NewtonReport r;
  r.iter = 1;
  r.residual_before = 0.5;
  write_log_csv(log, {r});
  CHECK(log.str().rfind("iter,residual,", 0) == 0);
  CHECK(log.str().find("\n1,0.5,") != std::string::npos);
  CHECK(format_double(0.1) == "0.10000000000000001");
}
