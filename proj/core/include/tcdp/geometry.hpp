#pragma once

#include <cmath>

namespace tcdp {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  return n > 0.0 ? a * (1.0 / n) : Vec3{};
}

struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  static Quat identity() { return {}; }
  static Quat from_axis_angle(const Vec3& axis, double radians) {
    Vec3 u = normalized(axis);
    double h = 0.5 * radians;
    double s = std::sin(h);
    return {std::cos(h), u.x * s, u.y * s, u.z * s};
  }
  Quat conjugate() const { return {w, -x, -y, -z}; }
  Quat operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
  }
  Quat normalized_q() const {
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    return {w / n, x / n, y / n, z / n};
  }
  Vec3 rotate(const Vec3& v) const {
    // q v q^-1 expanded via the double-cross identity.
    Vec3 u{x, y, z};
    Vec3 t = cross(u, v) * 2.0;
    return v + t * w + cross(u, t);
  }
};

// Rigid motion p -> rotation * p + translation.
struct RigidTransform {
  Quat rotation;
  Vec3 translation;

  static RigidTransform identity() { return {}; }
  Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
  Vec3 apply_vector(const Vec3& v) const { return rotation.rotate(v); }
  RigidTransform inverse() const {
    Quat inv = rotation.conjugate();
    return {inv, inv.rotate(translation) * -1.0};
  }
  RigidTransform compose(const RigidTransform& inner) const {
    // (*this) after inner: p -> this(inner(p)).
    return {(rotation * inner.rotation).normalized_q(),
            rotation.rotate(inner.translation) + translation};
  }
};

}  // namespace tcdp
