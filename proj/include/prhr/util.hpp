#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace prhr {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Dense 2-d array of doubles with (i,j) indexing. Row-major.
struct Grid2 {
    int n1 = 0, n2 = 0;
    std::vector<double> v;

    Grid2() = default;
    Grid2(int a, int b, double fill = 0.0) : n1(a), n2(b), v(static_cast<size_t>(a) * b, fill) {}

    double& operator()(int a, int b) { return v[static_cast<size_t>(a) * n2 + b]; }
    double operator()(int a, int b) const { return v[static_cast<size_t>(a) * n2 + b]; }
    bool same_shape(const Grid2& o) const { return n1 == o.n1 && n2 == o.n2; }
};

// Dense 3-d array, (i,j,k) indexing.
struct Grid3 {
    int n1 = 0, n2 = 0, n3 = 0;
    std::vector<double> v;

    Grid3() = default;
    Grid3(int a, int b, int c, double fill = 0.0)
        : n1(a), n2(b), n3(c), v(static_cast<size_t>(a) * b * c, fill) {}

    double& operator()(int a, int b, int c) {
        return v[(static_cast<size_t>(a) * n2 + b) * n3 + c];
    }
    double operator()(int a, int b, int c) const {
        return v[(static_cast<size_t>(a) * n2 + b) * n3 + c];
    }
};

inline bool nearly_equal(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace prhr
