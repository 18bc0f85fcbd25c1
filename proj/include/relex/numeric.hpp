#pragma once

// Dense row-major matrices, numerically stable scalar kernels, a seeded PRNG
// and the central-difference gradient oracle the backward passes are tested
// against. All math here is double precision; only checkpoints narrow to
// 32-bit floats.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "relex/errors.hpp"

namespace relex {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major, rows * cols entries

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

inline double dot(const double* a, const double* b, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// y += a * x
inline void axpy(double a, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

inline std::vector<double> matvec(const Matrix& m, const std::vector<double>& v) {
  if (m.cols != static_cast<int>(v.size())) {
    throw Error("matvec: dimension mismatch, matrix " + shape_str(m) + " vs vector " +
                std::to_string(v.size()));
  }
  std::vector<double> out(m.rows);
  for (int r = 0; r < m.rows; ++r) out[r] = dot(m.row(r), v.data(), m.cols);
  return out;
}

// ln(1 + e^x) without overflow for large |x|.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// 1 / (1 + e^-x) without overflow for large |x|.
inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Derivative of tanh expressed through its output y = tanh(x).
inline double tanh_grad(double y) { return 1.0 - y * y; }

// Max-subtracted softmax; every entry ends in [0,1] and the sum is 1.
inline void softmax_inplace(std::vector<double>& e) {
  if (e.empty()) throw Error("softmax: empty input");
  double mx = *std::max_element(e.begin(), e.end());
  double sum = 0.0;
  for (double& v : e) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : e) v /= sum;
}

inline std::vector<double> softmax(std::vector<double> e) {
  softmax_inplace(e);
  return e;
}

// Deterministic 64-bit generator. std::mt19937_64 has an ISO-pinned sequence,
// so identical seeds give identical draws on every platform; the output
// mappings are written out here because the standard distributions are not
// portable across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53 bits of precision.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) by rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Inverted-dropout keep mask: entry i is 1 with probability p_keep, else 0.
inline std::vector<double> bernoulli_mask(Rng& rng, int len, double p_keep) {
  if (!(p_keep > 0.0 && p_keep <= 1.0)) {
    throw Error("bernoulli_mask: p_keep must be in (0,1], got " + std::to_string(p_keep));
  }
  std::vector<double> mask(len);
  for (int i = 0; i < len; ++i) mask[i] = rng.uniform01() < p_keep ? 1.0 : 0.0;
  return mask;
}

// Central differences: g[i] = (f(theta + h e_i) - f(theta - h e_i)) / 2h.
// The oracle every hand-written backward pass is checked against.
inline std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> theta,
    double h = 1e-4) {
  std::vector<double> grad(theta.size());
  for (size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + h;
    double fp = f(theta);
    theta[i] = saved - h;
    double fm = f(theta);
    theta[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Relative error with an absolute floor, used by all gradient checks.
inline double rel_error(double a, double b) {
  double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / denom;
}

inline bool all_finite(const double* v, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(v[i])) return false;
  }
  return true;
}

// Stable shortish decimal rendering used by CSV writers.
inline std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return std::string(buf);
}

}  // namespace relex
