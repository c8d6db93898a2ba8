#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace fdtlab {

/// Welford accumulator with Chan's pairwise merge.
struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }

  void merge(const RunningStats& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(n + o.n);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.n) / total;
    m2 += o.m2 + delta * delta * static_cast<double>(n) * static_cast<double>(o.n) / total;
    n += o.n;
  }

  double variance() const { return n > 1 ? std::max(0.0, m2 / static_cast<double>(n - 1)) : 0.0; }
  double stderr_of_mean() const { return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

struct MeanWithError {
  double mean = 0.0;
  double stderr = 0.0;
};

inline MeanWithError mean_and_stderr(std::span<const double> values) {
  RunningStats s;
  for (double v : values) s.add(v);
  return {s.mean, s.stderr_of_mean()};
}

/// Batch-means estimate: the series is cut into `batches` contiguous blocks
/// and the standard error is taken from the spread of block means.
inline MeanWithError batch_means(std::span<const double> values, std::size_t batches) {
  const std::size_t n = values.size();
  if (n == 0) return {};
  batches = std::clamp<std::size_t>(batches, 1, n);
  RunningStats blocks;
  double total = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t lo = b * n / batches;
    const std::size_t hi = (b + 1) * n / batches;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += values[i];
    total += s;
    blocks.add(s / static_cast<double>(hi - lo));
  }
  return {total / static_cast<double>(n), blocks.stderr_of_mean()};
}

/// Least-squares slope of y against t.
inline double ls_slope(std::span<const double> t, std::span<const double> y) {
  const std::size_t n = std::min(t.size(), y.size());
  if (n < 2) return 0.0;
  double tm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    tm += t[i];
    ym += y[i];
  }
  tm /= static_cast<double>(n);
  ym /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (t[i] - tm) * (y[i] - ym);
    den += (t[i] - tm) * (t[i] - tm);
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace fdtlab
