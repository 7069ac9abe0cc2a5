#pragma once

#include <vector>

#include "oracles.hpp"
#include "toolselect/diffcore.hpp"
#include "toolselect/rng.hpp"

namespace helpers {

using toolselect::diffcore::Tensor;

inline Tensor tensor_of(const oracle::Mat& m) {
    std::vector<double> data;
    for (const auto& row : m) data.insert(data.end(), row.begin(), row.end());
    return Tensor::matrix(m.size(), m[0].size(), std::move(data));
}

inline oracle::Mat mat_of(const Tensor& t) {
    oracle::Mat m(t.rows(), oracle::Vec(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
    return m;
}

inline Tensor random_tensor(toolselect::diffcore::Shape shape, toolselect::Rng& rng, double sd = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal(0.0, sd);
    return t;
}

inline double max_abs_diff(const oracle::Mat& a, const oracle::Mat& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) d = std::max(d, std::abs(a[i][j] - b[i][j]));
    return d;
}

} // namespace helpers
