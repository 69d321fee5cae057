#pragma once

#include <algorithm>
#include <cmath>

namespace milagro {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
    const double n = norm(a);
    return n > 0.0 ? a * (1.0 / n) : Vec3{0, 0, 0};
}
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

// Rotation about the vertical axis, +ccw in the xy plane.
inline Vec3 rotate_z(const Vec3& v, double angle_rad) {
    const double c = std::cos(angle_rad), s = std::sin(angle_rad);
    return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

struct Box3 {
    Vec3 lo, hi;

    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
               p.z <= hi.z;
    }
};

// Segment p0–p1 against an axis-aligned box (slab test).
inline bool segment_hits_box(const Vec3& p0, const Vec3& p1, const Box3& box) {
    const Vec3 d = p1 - p0;
    double tmin = 0.0, tmax = 1.0;
    const double o[3] = {p0.x, p0.y, p0.z};
    const double dd[3] = {d.x, d.y, d.z};
    const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
    const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
    for (int i = 0; i < 3; ++i) {
        if (std::abs(dd[i]) < 1e-12) {
            if (o[i] < lo[i] || o[i] > hi[i]) return false;
        } else {
            double t1 = (lo[i] - o[i]) / dd[i];
            double t2 = (hi[i] - o[i]) / dd[i];
            if (t1 > t2) std::swap(t1, t2);
            tmin = std::max(tmin, t1);
            tmax = std::min(tmax, t2);
            if (tmin > tmax) return false;
        }
    }
    return true;
}

// Segment against a finite vertical cylinder (axis at (cx,cy), z in [z0,z1]).
inline bool segment_hits_cylinder(const Vec3& p0, const Vec3& p1, double cx, double cy,
                                  double radius, double z0, double z1) {
    const double dx = p1.x - p0.x, dy = p1.y - p0.y;
    const double fx = p0.x - cx, fy = p0.y - cy;
    const double a = dx * dx + dy * dy;
    const double b = 2.0 * (fx * dx + fy * dy);
    const double c = fx * fx + fy * fy - radius * radius;

    double t_enter, t_exit;
    if (a < 1e-15) {
        // vertical segment in xy: inside the circle or not at all
        if (c > 0.0) return false;
        t_enter = 0.0;
        t_exit = 1.0;
    } else {
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0.0) return false;
        const double sq = std::sqrt(disc);
        t_enter = (-b - sq) / (2.0 * a);
        t_exit = (-b + sq) / (2.0 * a);
        if (t_exit < 0.0 || t_enter > 1.0) return false;
        t_enter = std::max(t_enter, 0.0);
        t_exit = std::min(t_exit, 1.0);
    }
    // overlap of segment z-range within [t_enter, t_exit] against [z0, z1]
    const double za = p0.z + (p1.z - p0.z) * t_enter;
    const double zb = p0.z + (p1.z - p0.z) * t_exit;
    const double zlo = std::min(za, zb), zhi = std::max(za, zb);
    return zhi >= z0 && zlo <= z1;
}

}  // namespace milagro
