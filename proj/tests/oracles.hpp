#pragma once

// Brute-force reference computations used by the tests. Deliberately naive
// and independent of the library's tape.

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline Mat matmul(const Mat& a, const Mat& b) {
    Mat c(a.size(), Vec(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b[0].size(); ++j)
            for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

inline Vec row_times(const Vec& x, const Mat& w) { return matmul(Mat{x}, w)[0]; }

inline Vec plus(Vec a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

inline Vec concat(std::initializer_list<Vec> parts) {
    Vec out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec softmax(const Vec& s) {
    double mx = *std::max_element(s.begin(), s.end());
    Vec e(s.size());
    double z = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) z += e[i] = std::exp(s[i] - mx);
    for (double& v : e) v /= z;
    return e;
}

inline Vec masked_softmax(const Vec& s, const std::vector<bool>& mask) {
    double mx = -1e300;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (mask[i]) mx = std::max(mx, s[i]);
    Vec e(s.size(), 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (mask[i]) z += e[i] = std::exp(s[i] - mx);
    for (double& v : e) v /= z;
    return e;
}

/// softmax(q k^T / sqrt(dk)) v, row by row.
inline Mat attend(const Mat& q, const Mat& k, const Mat& v) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(k[0].size()));
    Mat out;
    for (const auto& qi : q) {
        Vec s(k.size());
        for (std::size_t b = 0; b < k.size(); ++b) {
            double d = 0.0;
            for (std::size_t c = 0; c < qi.size(); ++c) d += qi[c] * k[b][c];
            s[b] = d * scale;
        }
        const Vec w = softmax(s);
        Vec o(v[0].size(), 0.0);
        for (std::size_t b = 0; b < v.size(); ++b)
            for (std::size_t c = 0; c < o.size(); ++c) o[c] += w[b] * v[b][c];
        out.push_back(o);
    }
    return out;
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

} // namespace oracle
