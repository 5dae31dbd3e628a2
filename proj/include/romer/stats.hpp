#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "romer/linalg.hpp"

namespace romer {

// Numerically stable softmax (max subtraction). Entries of -inf are allowed
// as "never select" sentinels and map to exactly zero mass; at least one
// entry must be finite.
inline Vector softmax(const Vector& z) {
    if (z.empty()) throw std::invalid_argument("empty logits");
    const double m = *std::max_element(z.begin(), z.end());
    if (!std::isfinite(m)) throw std::invalid_argument("softmax: no finite logit");
    Vector p(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

// Linear-interpolation quantile: with sorted values v_0..v_{n-1} and
// h = (n-1)p, returns v_{floor(h)} + frac(h) * (v_{floor(h)+1} - v_{floor(h)}).
inline double quantile(const Vector& z, double p) {
    if (z.empty()) throw std::invalid_argument("quantile: empty input");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p outside [0,1]");
    Vector v = z;
    std::sort(v.begin(), v.end());
    const double h = static_cast<double>(v.size() - 1) * p;
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = h - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline double interquartile_range(const Vector& z) {
    return quantile(z, 0.75) - quantile(z, 0.25);
}

// Indices of the k largest entries, sorted by descending value then ascending
// index; ties always resolve to the lower index so routing is reproducible.
inline std::vector<int> topk_indices(const Vector& z, std::size_t k) {
    if (z.empty()) throw std::invalid_argument("topk_indices: empty input");
    if (k < 1 || k > z.size()) {
        throw std::invalid_argument("topk_indices: k out of range");
    }
    std::vector<int> idx(z.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&z](int a, int b) {
        if (z[a] != z[b]) return z[a] > z[b];
        return a < b;
    });
    idx.resize(k);
    return idx;
}

inline double mean(const Vector& v) {
    if (v.empty()) throw std::invalid_argument("mean: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Population variance (divide by n).
inline double variance(const Vector& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

inline double sample_variance(const Vector& v) {
    if (v.size() < 2) throw std::invalid_argument("sample_variance: need >= 2 values");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

// Shannon entropy of weights normalized by log(count): 1 for uniform mass,
// 0 for one-hot or all-zero mass. 0*log(0) counts as 0.
inline double normalized_entropy(const Vector& weights) {
    if (weights.empty()) throw std::invalid_argument("normalized_entropy: empty input");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("normalized_entropy: negative weight");
        total += w;
    }
    if (total <= 0.0) return 0.0;
    if (weights.size() == 1) return 1.0;
    double h = 0.0;
    for (double w : weights) {
        if (w > 0.0) {
            const double p = w / total;
            h -= p * std::log(p);
        }
    }
    return h / std::log(static_cast<double>(weights.size()));
}

}  // namespace romer
