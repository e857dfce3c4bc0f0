#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace blum {

// Dense row-major matrix. The only container the numeric kernels operate on.
template <class Real>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<Real> d;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), d(static_cast<std::size_t>(r) * c, Real(0)) {}

    void resize(int r, int c) {
        rows = r;
        cols = c;
        d.assign(static_cast<std::size_t>(r) * c, Real(0));
    }

    Real* row(int i) { return d.data() + static_cast<std::size_t>(i) * cols; }
    const Real* row(int i) const { return d.data() + static_cast<std::size_t>(i) * cols; }

    Real& operator()(int i, int j) { return d[static_cast<std::size_t>(i) * cols + j]; }
    Real operator()(int i, int j) const { return d[static_cast<std::size_t>(i) * cols + j]; }

    Real* data() { return d.data(); }
    const Real* data() const { return d.data(); }

    std::size_t size() const { return d.size(); }
    bool empty() const { return d.empty(); }

    void zero() { std::fill(d.begin(), d.end(), Real(0)); }
    void fill(Real v) { std::fill(d.begin(), d.end(), v); }

    bool all_finite() const {
        for (Real v : d)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

template <class Real>
using Vec = std::vector<Real>;

template <class Real>
bool all_finite(const Vec<Real>& v) {
    for (Real x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

}  // namespace blum
