#pragma once

#include <array>
#include <cmath>

#include "gsrd/common.hpp"

namespace gsrd {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    double& operator[](int i) { return (&x)[i]; }
    double operator[](int i) const { return (&x)[i]; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 cwise(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
};

// row-major 3x3
struct Mat3 {
    std::array<double, 9> m{};

    double& operator()(int r, int c) { return m[r * 3 + c]; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }

    static Mat3 identity() {
        Mat3 I;
        I(0, 0) = I(1, 1) = I(2, 2) = 1.0;
        return I;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
};

struct Quat {
    double w = 1, x = 0, y = 0, z = 0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quat normalized() const {
        double n = norm();
        require(n > 0, "zero quaternion");
        return {w / n, x / n, y / n, z / n};
    }

    Mat3 to_matrix() const {
        Quat q = normalized();
        Mat3 R;
        R(0, 0) = 1 - 2 * (q.y * q.y + q.z * q.z);
        R(0, 1) = 2 * (q.x * q.y - q.w * q.z);
        R(0, 2) = 2 * (q.x * q.z + q.w * q.y);
        R(1, 0) = 2 * (q.x * q.y + q.w * q.z);
        R(1, 1) = 1 - 2 * (q.x * q.x + q.z * q.z);
        R(1, 2) = 2 * (q.y * q.z - q.w * q.x);
        R(2, 0) = 2 * (q.x * q.z - q.w * q.y);
        R(2, 1) = 2 * (q.y * q.z + q.w * q.x);
        R(2, 2) = 1 - 2 * (q.x * q.x + q.y * q.y);
        return R;
    }
};

struct Aabb {
    Vec3 lo{0, 0, 0};
    Vec3 hi{0, 0, 0};

    void expand(const Vec3& p) {
        lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y); lo.z = std::min(lo.z, p.z);
        hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y); hi.z = std::max(hi.z, p.z);
    }

    bool contains(const Vec3& p, double eps = 0.0) const {
        return p.x >= lo.x - eps && p.x <= hi.x + eps && p.y >= lo.y - eps &&
               p.y <= hi.y + eps && p.z >= lo.z - eps && p.z <= hi.z + eps;
    }

    Vec3 extent() const { return hi - lo; }

    // min-max normalization into [0,1]^3; degenerate axes map to 0
    Vec3 normalize(const Vec3& p, bool* clamped = nullptr) const {
        Vec3 e = extent();
        Vec3 r;
        bool clip = false;
        for (int i = 0; i < 3; ++i) {
            double v = e[i] > 0 ? (p[i] - lo[i]) / e[i] : 0.0;
            if (v < 0.0 || v > 1.0) clip = true;
            r[i] = clamp01(v);
        }
        if (clamped) *clamped = clip;
        return r;
    }
};

}  // namespace gsrd
