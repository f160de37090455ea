#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsb {

// Spatial and jump dimensions are small at desk scale.
inline constexpr int kMaxDim = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnsupportedModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fixed-capacity point in R^d, d <= kMaxDim. Value type, no allocation.
struct Pt {
  std::array<double, kMaxDim> c{};
  int d = 0;

  Pt() = default;
  explicit Pt(int dim) : d(dim) {}
  Pt(std::initializer_list<double> xs) {
    d = static_cast<int>(xs.size());
    int k = 0;
    for (double x : xs) c[k++] = x;
  }
  double& operator[](int k) { return c[k]; }
  double operator[](int k) const { return c[k]; }

  Pt& operator+=(const Pt& o) {
    for (int k = 0; k < d; ++k) c[k] += o.c[k];
    return *this;
  }
  Pt& operator-=(const Pt& o) {
    for (int k = 0; k < d; ++k) c[k] -= o.c[k];
    return *this;
  }
  Pt& operator*=(double a) {
    for (int k = 0; k < d; ++k) c[k] *= a;
    return *this;
  }
  friend Pt operator+(Pt a, const Pt& b) { return a += b; }
  friend Pt operator-(Pt a, const Pt& b) { return a -= b; }
  friend Pt operator*(double a, Pt p) { return p *= a; }

  double norm() const {
    double s = 0;
    for (int k = 0; k < d; ++k) s += c[k] * c[k];
    return std::sqrt(s);
  }
  bool finite() const {
    for (int k = 0; k < d; ++k)
      if (!std::isfinite(c[k])) return false;
    return true;
  }
};

inline double dot(const Pt& a, const Pt& b) {
  double s = 0;
  for (int k = 0; k < a.d; ++k) s += a.c[k] * b.c[k];
  return s;
}

// Small dense matrix, rows*cols <= kMaxDim^2.
struct Mat {
  std::array<double, kMaxDim * kMaxDim> m{};
  int rows = 0, cols = 0;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c) {}
  double& operator()(int i, int j) { return m[i * cols + j]; }
  double operator()(int i, int j) const { return m[i * cols + j]; }

  static Mat identity(int n) {
    Mat a(n, n);
    for (int i = 0; i < n; ++i) a(i, i) = 1.0;
    return a;
  }
  Mat transposed() const {
    Mat a(cols, rows);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) a(j, i) = m[i * cols + j];
    return a;
  }
  Pt mul(const Pt& x) const {
    Pt y(rows);
    for (int i = 0; i < rows; ++i) {
      double s = 0;
      for (int j = 0; j < cols; ++j) s += m[i * cols + j] * x[j];
      y[i] = s;
    }
    return y;
  }
  friend Mat operator*(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
      for (int k = 0; k < a.cols; ++k) {
        double v = a(i, k);
        for (int j = 0; j < b.cols; ++j) c(i, j) += v * b(k, j);
      }
    return c;
  }
};

inline double det(const Mat& a) {
  if (a.rows == 1) return a(0, 0);
  if (a.rows == 2) return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  if (a.rows == 3)
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
  throw NumericError("det: dimension > 3 not supported");
}

inline Mat inverse(const Mat& a) {
  double dv = det(a);
  if (dv == 0.0 || !std::isfinite(dv)) throw NumericError("singular matrix");
  Mat r(a.rows, a.cols);
  if (a.rows == 1) {
    r(0, 0) = 1.0 / dv;
  } else if (a.rows == 2) {
    r(0, 0) = a(1, 1) / dv;
    r(0, 1) = -a(0, 1) / dv;
    r(1, 0) = -a(1, 0) / dv;
    r(1, 1) = a(0, 0) / dv;
  } else {
    throw NumericError("inverse: dimension > 2 not supported");
  }
  return r;
}

// FNV-1a, used for artifact/content hashes in caches and manifests.
struct Fnv1a {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* p, std::size_t n) {
    auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  }
  void add(double x) { bytes(&x, sizeof x); }
  void add(std::uint64_t x) { bytes(&x, sizeof x); }
  void add(std::int64_t x) { bytes(&x, sizeof x); }
  void add(int x) { add(static_cast<std::int64_t>(x)); }
  void add(const std::string& s) {
    add(static_cast<std::uint64_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

std::string format_g17(double x);

}  // namespace rsb
