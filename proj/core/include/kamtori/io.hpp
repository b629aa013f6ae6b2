#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "kamtori/splitting.hpp"
#include "kamtori/torus.hpp"
#include "kamtori/whisker.hpp"

namespace kamtori {

using Attributes = std::map<std::string, std::string>;

// One FTS1 block: a matrix-valued series with its frequency, role tag and
// free-form key=value attributes.
//
// Layout (little endian): "FTS1", u32 ell, u32 m (components), u32 N[ell],
// f64 omega[ell], u32 flags, u32 len + role bytes, u32 rows, u32 cols,
// u32 len + attribute text ("key=value\n" lines), then m * packed (re, im) f64
// pairs, component-major, packed index row-major in k (last axis halved).
struct SeriesBlock {
  std::string role;
  FourierSeries series;
  RotationVector omega;
  Attributes attrs;
};

constexpr unsigned kFlagForwardScaled = 1u;  // c_k = N^{-1} sum f e^{-2 pi i k.theta}

void write_block(std::ostream& os, const SeriesBlock& block);
SeriesBlock read_block(std::istream& is);
// Reads blocks until end of stream.
std::vector<SeriesBlock> read_blocks(std::istream& is);

void save_torus(const std::string& path, const TorusEmbedding& K, const Attributes& extra = {});
TorusEmbedding load_torus(const std::string& path, Attributes* attrs = nullptr);

void save_splitting(const std::string& path, const InvariantSplitting& S, const RotationVector& omega);
InvariantSplitting load_splitting(const std::string& path);

// FTT1: "FTT1", f64 mu, f64 rho, f64 s_max, u32 L, u32 len + attributes, then
// L + 1 FTS1 blocks (order 0 carries the torus attributes).
void save_whisker(const std::string& path, const Whisker& w);
Whisker load_whisker(const std::string& path);

// One row per grid point: theta columns, then the components.
void write_grid_csv(std::ostream& os, const FourierSeries& f, const std::vector<std::string>& names = {});
void write_log_csv(std::ostream& os, const std::vector<NewtonReport>& log);
// Point cloud (theta, s, W(theta, s)) on a theta_points x s_points grid, |s| <= s_max.
void write_whisker_cloud_csv(std::ostream& os, const Whisker& w, int theta_points, int s_points);

std::string format_double(double x);

}  // namespace kamtori
