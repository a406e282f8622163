#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library code it is compared against.

#include "dualmap/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using Matrix = dualmap::ad::Matrix;

// Sparse-mask rule by integer stride doubling, no logarithms.
inline bool mask_cell(int a, int b, int g) {
  if (b < a) return false;
  const int len = b - a + 1;
  if (len <= g) return true;
  int stride = 1;
  while (static_cast<long long>(g) * stride < len) stride *= 2;
  return (b + 1) % stride == 0;
}

inline std::vector<std::uint8_t> mask_grid(int n, int g) {
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(n * n), 0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) keep[static_cast<std::size_t>(a * n + b)] = mask_cell(a, b, g);
  return keep;
}

inline int mask_count(int n, int g) {
  int c = 0;
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) c += mask_cell(a, b, g);
  return c;
}

// Plain interval overlap ratio.
inline double iou(double s1, double e1, double s2, double e2) {
  const double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  const double uni = (e1 - s1) + (e2 - s2) - inter;
  return inter / uni;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = d(rng);
  return m;
}

// Dense same-padded 2D convolution of an (n*n) x cin map, followed by masking.
// weight rows are indexed ((dy * k + dx) * cin + c).
inline Matrix dense_conv(const Matrix& x, const Matrix& w, const Matrix& bias, int n, int k,
                         const std::vector<std::uint8_t>& keep) {
  const int cin = static_cast<int>(x.cols());
  const int cout = static_cast<int>(w.cols());
  const int r = k / 2;
  Matrix out = Matrix::Zero(n * n, cout);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (!keep[static_cast<std::size_t>(a * n + b)]) continue;
      for (int o = 0; o < cout; ++o) {
        double acc = bias(0, o);
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const int aa = a + dy - r, bb = b + dx - r;
            if (aa < 0 || bb < 0 || aa >= n || bb >= n) continue;
            for (int c = 0; c < cin; ++c)
              acc += x(aa * n + bb, c) * w((dy * k + dx) * cin + c, o);
          }
        out(a * n + b, o) = acc;
      }
    }
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
};

// Central differences of f over every entry of `value`, compared against
// `analytic`. The relative error uses max(|analytic|, |numeric|, floor).
inline GradCheck compare_gradient(Matrix& value, const Matrix& analytic,
                                  const std::function<double()>& f, double h = 1e-6,
                                  double floor = 1e-6) {
  GradCheck r;
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    const double saved = value.data()[i];
    value.data()[i] = saved + h;
    const double up = f();
    value.data()[i] = saved - h;
    const double down = f();
    value.data()[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.size() ? analytic.data()[i] : 0.0;
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(a - numeric) / denom);
    r.max_abs_grad = std::max(r.max_abs_grad, std::abs(a));
  }
  return r;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dualmap_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
