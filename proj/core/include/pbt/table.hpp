#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "pbt/errors.hpp"

namespace pbt {

using Value = int;  // index into a variable's domain

// Mixed-radix index space over an ordered variable list. The first variable is
// the most significant digit, so flat tables read like nested row-major loops.
struct DiscreteSpace {
  std::vector<int> sizes;
  std::vector<size_t> strides;
  size_t total = 1;

  DiscreteSpace() = default;
  explicit DiscreteSpace(std::vector<int> domain_sizes) : sizes(std::move(domain_sizes)) {
    strides.assign(sizes.size(), 1);
    total = 1;
    for (size_t i = sizes.size(); i-- > 0;) {
      strides[i] = total;
      total *= static_cast<size_t>(sizes[i]);
    }
  }

  size_t arity() const { return sizes.size(); }

  size_t index_of(const std::vector<Value>& valuation) const {
    size_t idx = 0;
    for (size_t i = 0; i < sizes.size(); ++i) idx += strides[i] * static_cast<size_t>(valuation[i]);
    return idx;
  }

  void valuation_of(size_t index, std::vector<Value>& out) const {
    out.resize(sizes.size());
    for (size_t i = 0; i < sizes.size(); ++i) {
      out[i] = static_cast<Value>(index / strides[i]);
      index %= strides[i];
    }
  }

  std::vector<Value> valuation_of(size_t index) const {
    std::vector<Value> v;
    valuation_of(index, v);
    return v;
  }

  Value digit(size_t index, size_t pos) const {
    return static_cast<Value>((index / strides[pos]) % static_cast<size_t>(sizes[pos]));
  }
};

// Dense nonnegative table over a DiscreteSpace.
struct Table {
  DiscreteSpace space;
  std::vector<double> v;

  Table() = default;
  explicit Table(DiscreteSpace s, double fill = 0.0) : space(std::move(s)), v(space.total, fill) {}

  double sum() const { return std::accumulate(v.begin(), v.end(), 0.0); }

  // Normalizes to sum 1; returns the pre-normalization sum (0 means all-zero,
  // in which case the table is left untouched).
  double normalize() {
    double s = sum();
    if (s > 0.0) {
      double inv = 1.0 / s;
      for (double& x : v) x *= inv;
    }
    return s;
  }
};

inline double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d += (a[i] > b[i]) ? a[i] - b[i] : b[i] - a[i];
  return 0.5 * d;
}

inline void normalize_vector(std::vector<double>& v) {
  double s = std::accumulate(v.begin(), v.end(), 0.0);
  if (s > 0.0)
    for (double& x : v) x /= s;
}

}  // namespace pbt
