#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace meshfree {

/// Small fixed-capacity vector for spatial coordinates (dim <= 3).
/// Components beyond the active dimension are kept at zero, so dot products
/// and norms never need an explicit dimension argument.
struct Vec {
    std::array<double, 3> c{0.0, 0.0, 0.0};

    Vec() = default;
    Vec(double x, double y = 0.0, double z = 0.0) : c{x, y, z} {}

    double& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return c[static_cast<std::size_t>(i)]; }
};

inline Vec operator+(const Vec& a, const Vec& b) {
    return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec operator-(const Vec& a, const Vec& b) {
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec operator*(double s, const Vec& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline Vec& operator+=(Vec& a, const Vec& b) {
    a[0] += b[0];
    a[1] += b[1];
    a[2] += b[2];
    return a;
}

inline double dot(const Vec& a, const Vec& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double norm2(const Vec& a) { return dot(a, a); }
inline double norm(const Vec& a) { return std::sqrt(norm2(a)); }

/// Dense 3x3 matrix, row major. Entries outside the active dim x dim block
/// stay zero; operations take the dimension where it matters.
struct Mat {
    std::array<double, 9> a{};

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(3 * i + j)]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(3 * i + j)]; }

    static Mat identity(int dim) {
        Mat m;
        for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline Mat operator+(const Mat& x, const Mat& y) {
    Mat r;
    for (std::size_t i = 0; i < 9; ++i) r.a[i] = x.a[i] + y.a[i];
    return r;
}
inline Mat operator-(const Mat& x, const Mat& y) {
    Mat r;
    for (std::size_t i = 0; i < 9; ++i) r.a[i] = x.a[i] - y.a[i];
    return r;
}
inline Mat operator*(double s, const Mat& x) {
    Mat r;
    for (std::size_t i = 0; i < 9; ++i) r.a[i] = s * x.a[i];
    return r;
}

inline Mat transpose(const Mat& m) {
    Mat t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t(i, j) = m(j, i);
    return t;
}

inline double trace(const Mat& m, int dim) {
    double t = 0.0;
    for (int i = 0; i < dim; ++i) t += m(i, i);
    return t;
}

inline Vec matvec(const Mat& m, const Vec& v) {
    Vec r;
    for (int i = 0; i < 3; ++i) r[i] = m(i, 0) * v[0] + m(i, 1) * v[1] + m(i, 2) * v[2];
    return r;
}

/// Outer product a (x) b.
inline Mat outer(const Vec& a, const Vec& b) {
    Mat m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = a[i] * b[j];
    return m;
}

inline double max_abs(const Mat& m, int dim) {
    double r = 0.0;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) r = std::max(r, std::abs(m(i, j)));
    return r;
}

inline double norm1(const Mat& m, int dim) {
    double r = 0.0;
    for (int j = 0; j < dim; ++j) {
        double col = 0.0;
        for (int i = 0; i < dim; ++i) col += std::abs(m(i, j));
        r = std::max(r, col);
    }
    return r;
}

/// Inverts the leading dim x dim block by Gauss elimination with partial
/// pivoting. Reports a 1-norm condition estimate through `cond` when given.
/// Throws on an exactly singular block.
inline Mat invert(const Mat& m, int dim, double* cond = nullptr) {
    double aug[3][6] = {};
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) aug[i][j] = m(i, j);
        aug[i][dim + i] = 1.0;
    }
    for (int k = 0; k < dim; ++k) {
        int piv = k;
        for (int i = k + 1; i < dim; ++i)
            if (std::abs(aug[i][k]) > std::abs(aug[piv][k])) piv = i;
        if (aug[piv][k] == 0.0) throw std::runtime_error("invert: singular matrix");
        if (piv != k)
            for (int j = 0; j < 2 * dim; ++j) std::swap(aug[piv][j], aug[k][j]);
        const double d = aug[k][k];
        for (int j = 0; j < 2 * dim; ++j) aug[k][j] /= d;
        for (int i = 0; i < dim; ++i) {
            if (i == k) continue;
            const double f = aug[i][k];
            if (f == 0.0) continue;
            for (int j = 0; j < 2 * dim; ++j) aug[i][j] -= f * aug[k][j];
        }
    }
    Mat inv;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) inv(i, j) = aug[i][dim + j];
    if (cond) *cond = norm1(m, dim) * norm1(inv, dim);
    return inv;
}

/// Smallest eigenvalue of the symmetric part of the leading block.
/// Cyclic Jacobi; plenty for 3x3.
inline double min_symmetric_eigenvalue(const Mat& m, int dim) {
    double s[3][3] = {};
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) s[i][j] = 0.5 * (m(i, j) + m(j, i));
    if (dim == 1) return s[0][0];
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < dim; ++p)
            for (int q = p + 1; q < dim; ++q) off += s[p][q] * s[p][q];
        if (off < 1e-30) break;
        for (int p = 0; p < dim; ++p) {
            for (int q = p + 1; q < dim; ++q) {
                if (s[p][q] == 0.0) continue;
                const double theta = 0.5 * std::atan2(2.0 * s[p][q], s[q][q] - s[p][p]);
                const double co = std::cos(theta), si = std::sin(theta);
                for (int k = 0; k < dim; ++k) {
                    const double sp = s[k][p], sq = s[k][q];
                    s[k][p] = co * sp - si * sq;
                    s[k][q] = si * sp + co * sq;
                }
                for (int k = 0; k < dim; ++k) {
                    const double sp = s[p][k], sq = s[q][k];
                    s[p][k] = co * sp - si * sq;
                    s[q][k] = si * sp + co * sq;
                }
            }
        }
    }
    double lo = s[0][0];
    for (int i = 1; i < dim; ++i) lo = std::min(lo, s[i][i]);
    return lo;
}

/// Axis-aligned rectangular domain: |x_i - center_i| <= half_i.
struct Domain {
    Vec center;
    Vec half;
    int dim = 2;

    Domain() = default;
    Domain(Vec c, Vec h, int d) : center(c), half(h), dim(d) {
        if (dim < 1 || dim > 3) throw std::invalid_argument("Domain: dim must be 1, 2 or 3");
        for (int i = 0; i < dim; ++i)
            if (!(half[i] > 0.0)) throw std::invalid_argument("Domain: half lengths must be positive");
    }

    double side(int i) const { return 2.0 * half[i]; }
    double volume() const {
        double v = 1.0;
        for (int i = 0; i < dim; ++i) v *= side(i);
        return v;
    }
    double lo(int i) const { return center[i] - half[i]; }
    double hi(int i) const { return center[i] + half[i]; }
};

}  // namespace meshfree
