#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ndtns {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class DegenerateGeometry : public Error {
public:
    using Error::Error;
};

/// Raised when a constitutive law is evaluated outside its domain (J <= 0 for ln J).
class ConstitutiveDomainError : public Error {
public:
    explicit ConstitutiveDomainError(const std::string& what, int element = -1)
        : Error(element >= 0 ? what + " (element " + std::to_string(element) + ")" : what),
          element_(element)
    {}
    int element() const { return element_; }

private:
    int element_;
};

/// Singular internal block during static condensation.
class CondensationFailure : public Error {
public:
    explicit CondensationFailure(int element)
        : Error("singular internal block in element " + std::to_string(element)), element_(element)
    {}
    int element() const { return element_; }

private:
    int element_;
};

// 2x2 matrices are flattened row-major: (11, 12, 21, 22).
inline Vec4 flatten(const Mat2& m) { return {m(0, 0), m(0, 1), m(1, 0), m(1, 1)}; }

inline Mat2 unflatten(const Vec4& v)
{
    Mat2 m;
    m << v(0), v(1), v(2), v(3);
    return m;
}

/// Rotation by -90 degrees: maps a counter-clockwise boundary tangent to the outward normal.
inline Vec2 rot_cw(const Vec2& a) { return {a.y(), -a.x()}; }

/// Rotation by +90 degrees: tangent obtained from a normal.
inline Vec2 rot_ccw(const Vec2& a) { return {-a.y(), a.x()}; }

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

} // namespace ndtns
