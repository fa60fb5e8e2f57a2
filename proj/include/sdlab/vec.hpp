#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sdlab {

using Vec = std::vector<double>;

inline void check_same_dim(const Vec& a, const Vec& b, const char* where) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(where) + ": dimension mismatch (" +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
}

inline Vec add(const Vec& a, const Vec& b) {
    check_same_dim(a, b, "add");
    Vec r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec sub(const Vec& a, const Vec& b) {
    check_same_dim(a, b, "sub");
    Vec r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vec scale(const Vec& a, double s) {
    Vec r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] * s;
    return r;
}

inline void axpy(double s, const Vec& x, Vec& y) {
    check_same_dim(x, y, "axpy");
    for (size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline double dot(const Vec& a, const Vec& b) {
    check_same_dim(a, b, "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(const Vec& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(squared_norm(a)); }

inline double squared_distance(const Vec& a, const Vec& b) {
    check_same_dim(a, b, "squared_distance");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double distance(const Vec& a, const Vec& b) { return std::sqrt(squared_distance(a, b)); }

inline double max_abs_diff(const Vec& a, const Vec& b) {
    check_same_dim(a, b, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline bool all_finite(const Vec& a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace sdlab
