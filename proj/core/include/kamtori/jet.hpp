#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace kamtori {

// Truncated power series c_0 + c_1 s + ... + c_n s^n with fixed capacity.
class Jet {
 public:
  static constexpr int kCapacity = 64;

  Jet() { c_[0] = 0.0; }
  explicit Jet(int order, double value = 0.0) : n_(order) {
    c_.fill(0.0);
    c_[0] = value;
  }

  int order() const { return n_; }
  double operator[](int i) const { return c_[i]; }
  double& operator[](int i) { return c_[i]; }

  Jet& operator+=(const Jet& o) {
    for (int i = 0; i <= n_; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int i = 0; i <= n_; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet& operator*=(double s) {
    for (int i = 0; i <= n_; ++i) c_[i] *= s;
    return *this;
  }
  Jet& operator+=(double s) {
    c_[0] += s;
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator+(Jet a, double s) { return a += s; }
  friend Jet operator-(Jet a) { return a *= -1.0; }
  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r(a.n_);
    for (int i = 0; i <= a.n_; ++i) {
      double s = 0.0;
      for (int k = 0; k <= i; ++k) s += a.c_[k] * b.c_[i - k];
      r.c_[i] = s;
    }
    return r;
  }

  // sin and cos of a jet by the recurrences S' = C u', C' = -S u'.
  friend void sincos(const Jet& u, Jet& s, Jet& c) {
    s = Jet(u.n_);
    c = Jet(u.n_);
    s.c_[0] = std::sin(u.c_[0]);
    c.c_[0] = std::cos(u.c_[0]);
    for (int n = 1; n <= u.n_; ++n) {
      double ss = 0.0, cc = 0.0;
      for (int k = 1; k <= n; ++k) {
        ss += k * u.c_[k] * c.c_[n - k];
        cc -= k * u.c_[k] * s.c_[n - k];
      }
      s.c_[n] = ss / n;
      c.c_[n] = cc / n;
    }
  }
  friend Jet sin(const Jet& u) {
    Jet s, c;
    sincos(u, s, c);
    return s;
  }
  friend Jet cos(const Jet& u) {
    Jet s, c;
    sincos(u, s, c);
    return c;
  }

 private:
  int n_ = 0;
  std::array<double, kCapacity> c_{};
};

}  // namespace kamtori
