#include "kamtori/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "kamtori/errors.hpp"

namespace kamtori {

namespace {

constexpr std::uint32_t kMaxLen = 1u << 20;

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw FormatError("truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n > kMaxLen) throw FormatError("string field too long");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw FormatError("truncated file");
  return s;
}

void expect_magic(std::istream& is, const char* magic) {
  char m[4];
  if (!is.read(m, 4) || std::memcmp(m, magic, 4) != 0) {
    throw FormatError(std::string("missing ") + magic + " magic");
  }
}

std::string encode_attrs(const Attributes& a) {
  std::string s;
  for (const auto& [k, v] : a) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("attribute '" + k + "' cannot be encoded");
    }
    s += k + "=" + v + "\n";
  }
  return s;
}

Attributes decode_attrs(const std::string& s) {
  Attributes a;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed attribute line");
    a[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return a;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> v;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw FormatError("bad number '" + item + "'");
    }
  }
  return v;
}

const std::string& require(const Attributes& a, const std::string& key) {
  const auto it = a.find(key);
  if (it == a.end()) throw FormatError("missing attribute '" + key + "'");
  return it->second;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "'");
  return is;
}

Attributes torus_attrs(const TorusEmbedding& K) {
  Attributes a;
  std::vector<double> I;
  for (int i = 0; i < K.ell(); ++i) {
    for (int j = 0; j < K.ell(); ++j) I.push_back(K.winding.I(i, j));
  }
  a["winding"] = join(I);
  std::vector<double> slots(K.angle_slots.begin(), K.angle_slots.end());
  a["angle_slots"] = join(slots);
  a["lambda"] = join(K.lambda);
  a["nu"] = format_double(K.omega.nu);
  a["tau"] = format_double(K.omega.tau);
  return a;
}

TorusEmbedding torus_from(const SeriesBlock& b) {
  TorusEmbedding K;
  K.K = b.series;
  K.omega = b.omega;
  const int ell = b.omega.dim();
  const std::vector<double> I = split_doubles(require(b.attrs, "winding"));
  if (static_cast<int>(I.size()) != ell * ell) throw FormatError("winding has the wrong size");
  K.winding.I = Mat(ell, ell);
  for (int i = 0; i < ell; ++i) {
    for (int j = 0; j < ell; ++j) K.winding.I(i, j) = I[i * ell + j];
  }
  for (double s : split_doubles(require(b.attrs, "angle_slots"))) {
    const int slot = static_cast<int>(s);
    if (slot < 0 || slot >= b.series.rows()) throw FormatError("angle slot out of range");
    K.angle_slots.push_back(slot);
  }
  if (static_cast<int>(K.angle_slots.size()) != ell) throw FormatError("angle slot count differs from ell");
  K.lambda = split_doubles(require(b.attrs, "lambda"));
  if (static_cast<int>(K.lambda.size()) != ell) throw FormatError("lambda has the wrong size");
  if (auto it = b.attrs.find("nu"); it != b.attrs.end()) K.omega.nu = std::stod(it->second);
  if (auto it = b.attrs.find("tau"); it != b.attrs.end()) K.omega.tau = std::stod(it->second);
  return K;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_block(std::ostream& os, const SeriesBlock& b) {
  FourierSeries f = to_coeffs(b.series);
  const GridShape& g = f.shape();
  if (b.omega.dim() != g.dim()) throw FormatError("frequency dimension differs from the grid");
  os.write("FTS1", 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.components()));
  for (int a = 0; a < g.dim(); ++a) put<std::uint32_t>(os, static_cast<std::uint32_t>(g.size(a)));
  for (double w : b.omega.omega) put<double>(os, w);
  put<std::uint32_t>(os, kFlagForwardScaled);
  put_string(os, b.role);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.rows()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.cols()));
  put_string(os, encode_attrs(b.attrs));
  for (const cplx& c : f.coeff_data()) {
    put<double>(os, c.real());
    put<double>(os, c.imag());
  }
  if (!os) throw FormatError("write failed");
}

SeriesBlock read_block(std::istream& is) {
  expect_magic(is, "FTS1");
  SeriesBlock b;
  const auto ell = get<std::uint32_t>(is);
  const auto m = get<std::uint32_t>(is);
  if (ell == 0 || ell > 8 || m == 0 || m > 64) throw FormatError("implausible FTS1 dimensions");
  std::vector<int> sizes(ell);
  for (auto& n : sizes) {
    n = static_cast<int>(get<std::uint32_t>(is));
    if (n <= 0 || n > (1 << 24)) throw FormatError("implausible grid size");
  }
  std::vector<double> omega(ell);
  for (auto& w : omega) w = get<double>(is);
  const auto flags = get<std::uint32_t>(is);
  if (!(flags & kFlagForwardScaled)) throw FormatError("unsupported coefficient normalization");
  b.role = get_string(is);
  const auto rows = get<std::uint32_t>(is);
  const auto cols = get<std::uint32_t>(is);
  if (rows * cols != m) throw FormatError("rows x cols differs from the component count");
  b.attrs = decode_attrs(get_string(is));
  GridShape g;
  try {
    g = GridShape(sizes);
  } catch (const Error& e) {
    throw FormatError(e.what());
  }
  std::vector<cplx> c(static_cast<std::size_t>(m) * g.packed());
  for (auto& z : c) {
    const double re = get<double>(is);
    const double im = get<double>(is);
    z = cplx(re, im);
  }
  b.series = FourierSeries::from_coeffs(g, static_cast<int>(rows), static_cast<int>(cols), std::move(c));
  b.omega = RotationVector(std::move(omega));
  return b;
}

std::vector<SeriesBlock> read_blocks(std::istream& is) {
  std::vector<SeriesBlock> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_block(is));
  return out;
}

void save_torus(const std::string& path, const TorusEmbedding& K, const Attributes& extra) {
  std::ofstream os = open_out(path);
  Attributes a = torus_attrs(K);
  for (const auto& [k, v] : extra) a[k] = v;
  write_block(os, {"torus", K.K, K.omega, a});
  if (K.K0) write_block(os, {"reference", *K.K0, K.omega, {}});
}

TorusEmbedding load_torus(const std::string& path, Attributes* attrs) {
  std::ifstream is = open_in(path);
  const std::vector<SeriesBlock> blocks = read_blocks(is);
  if (blocks.empty() || blocks[0].role != "torus") throw FormatError("'" + path + "' holds no torus block");
  TorusEmbedding K = torus_from(blocks[0]);
  if (blocks.size() > 1 && blocks[1].role == "reference") K.K0 = blocks[1].series;
  if (attrs) *attrs = blocks[0].attrs;
  return K;
}

void save_splitting(const std::string& path, const InvariantSplitting& S, const RotationVector& omega) {
  std::ofstream os = open_out(path);
  Attributes a{{"stable_rank", std::to_string(S.stable_rank)},
               {"unstable_rank", std::to_string(S.unstable_rank)}};
  write_block(os, {"stable", S.Pi_s, omega, a});
  if (S.Pi_u) write_block(os, {"unstable", *S.Pi_u, omega, a});
}

InvariantSplitting load_splitting(const std::string& path) {
  std::ifstream is = open_in(path);
  const std::vector<SeriesBlock> blocks = read_blocks(is);
  InvariantSplitting S;
  bool have_stable = false;
  for (const auto& b : blocks) {
    if (b.series.rows() != b.series.cols()) throw FormatError("projection block is not square");
    if (b.role == "stable") {
      S.Pi_s = to_grid(b.series);
      S.Pi_cu = field_add(field_identity(b.series.shape(), b.series.rows()), S.Pi_s, -1.0);
      S.stable_rank = std::stoi(require(b.attrs, "stable_rank"));
      S.unstable_rank = std::stoi(require(b.attrs, "unstable_rank"));
      have_stable = true;
    } else if (b.role == "unstable") {
      S.Pi_u = to_grid(b.series);
      S.Pi_cs = field_add(field_identity(b.series.shape(), b.series.rows()), *S.Pi_u, -1.0);
    } else {
      throw FormatError("unknown splitting role '" + b.role + "'");
    }
  }
  if (!have_stable) throw FormatError("'" + path + "' holds no stable projection");
  return S;
}

void save_whisker(const std::string& path, const Whisker& w) {
  std::ofstream os = open_out(path);
  os.write("FTT1", 4);
  put<double>(os, w.mu);
  put<double>(os, w.rho);
  put<double>(os, w.s_max);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(w.order()));
  put_string(os, encode_attrs({{"branch", w.stable() ? "stable" : "unstable"}}));
  TorusEmbedding K = w.base;
  write_block(os, {"order:0", w.W.orders[0], K.omega, torus_attrs(K)});
  for (int n = 1; n <= w.order(); ++n) {
    write_block(os, {"order:" + std::to_string(n), w.W.orders[n], K.omega, {}});
  }
}

Whisker load_whisker(const std::string& path) {
  std::ifstream is = open_in(path);
  expect_magic(is, "FTT1");
  Whisker w;
  w.mu = get<double>(is);
  w.rho = get<double>(is);
  w.s_max = get<double>(is);
  const auto L = get<std::uint32_t>(is);
  if (L > 62) throw FormatError("implausible whisker order");
  get_string(is);
  for (std::uint32_t n = 0; n <= L; ++n) {
    SeriesBlock b = read_block(is);
    if (b.role != "order:" + std::to_string(n)) throw FormatError("whisker orders out of sequence");
    if (n == 0) w.base = torus_from(b);
    w.W.orders.push_back(to_grid(b.series));
  }
  w.base.K = w.W.orders[0];
  return w;
}

void write_grid_csv(std::ostream& os, const FourierSeries& f0, const std::vector<std::string>& names) {
  const FourierSeries f = to_grid(f0);
  const GridShape& g = f.shape();
  for (int a = 0; a < g.dim(); ++a) os << "theta" << a << ",";
  for (int c = 0; c < f.components(); ++c) {
    os << (c < static_cast<int>(names.size()) ? names[c] : "c" + std::to_string(c));
    os << (c + 1 < f.components() ? "," : "\n");
  }
  std::vector<double> theta(g.dim());
  for (std::size_t p = 0; p < g.total(); ++p) {
    g.point(p, theta.data());
    for (double t : theta) os << format_double(t) << ",";
    for (int c = 0; c < f.components(); ++c) {
      os << format_double(f.at(c, p)) << (c + 1 < f.components() ? "," : "\n");
    }
  }
}

void write_log_csv(std::ostream& os, const std::vector<NewtonReport>& log) {
  os << "iter,residual,residual_after,lambda,twist,condM,normN,divisor,tail,grid,seconds\n";
  for (const auto& r : log) {
    os << r.iter << "," << format_double(r.residual_before) << "," << format_double(r.residual_after) << ","
       << format_double(r.lambda) << "," << format_double(r.twist) << "," << format_double(r.cond_M) << ","
       << format_double(r.norm_N) << "," << format_double(r.divisor_margin) << "," << format_double(r.tail)
       << "," << r.grid << "," << format_double(r.seconds) << "\n";
  }
}

void write_whisker_cloud_csv(std::ostream& os, const Whisker& w, int theta_points, int s_points) {
  const int ell = w.base.ell();
  const int m = w.base.phase_dim();
  for (int a = 0; a < ell; ++a) os << "theta" << a << ",";
  os << "s";
  for (int i = 0; i < m; ++i) os << ",z" << i;
  os << "\n";
  std::vector<double> theta(ell);
  for (int i = 0; i < theta_points; ++i) {
    for (int a = 0; a < ell; ++a) theta[a] = static_cast<double>(i) / theta_points;
    for (int j = 0; j < s_points; ++j) {
      const double s = s_points > 1 ? -w.s_max + 2.0 * w.s_max * j / (s_points - 1) : 0.0;
      const std::vector<double> z = evaluate_whisker(w, theta, s);
      for (double t : theta) os << format_double(t) << ",";
      os << format_double(s);
      for (double v : z) os << "," << format_double(v);
      os << "\n";
    }
  }
}

}  // namespace kamtori
