#pragma once

#include "ndtns/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace ndtns {

enum class ConstraintKind { Jminus1, LogJ };

struct MaterialParams {
    double mu = 1.0;
    ConstraintKind kind = ConstraintKind::Jminus1;
    double eps_lambda = 1e-8;
    double kappa = 0.0; // bulk modulus of the nearly incompressible variant; 0 disables it

    void validate() const
    {
        if (!(mu > 0.0))
            throw InvalidInput("shear modulus must be positive");
        if (!(eps_lambda >= 0.0))
            throw InvalidInput("eigenvalue floor must be non-negative");
        if (kappa < 0.0)
            throw InvalidInput("bulk modulus must be non-negative");
    }
};

struct MaterialPoint {
    Mat2 F = Mat2::Identity();
    double p = 0.0;
};

/// 4x4 matrix acting on row-major flattened 2x2 matrices.
using Tangent4 = Mat4;

struct ConstraintValues {
    double c, dc, ddc;
};

inline double strain_energy(const Mat2& f, const MaterialParams& m) { return 0.5 * m.mu * (f.squaredNorm() - 2.0); }

inline ConstraintValues constraint(double j, ConstraintKind kind)
{
    if (kind == ConstraintKind::Jminus1)
        return {j - 1.0, 1.0, 0.0};
    if (!(j > 0.0))
        throw ConstitutiveDomainError("ln J evaluated at J = " + std::to_string(j));
    return {std::log(j), 1.0 / j, -1.0 / (j * j)};
}

inline Mat2 cof(const Mat2& a)
{
    Mat2 c;
    c << a(1, 1), -a(1, 0), -a(0, 1), a(0, 0);
    return c;
}

/// Tensor cross product (A x B)_ij = eps_ikl eps_jmn A_km B_ln.
inline Eigen::Matrix3d tensor_cross(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b)
{
    auto eps = [](int i, int j, int k) { return 0.5 * (i - j) * (j - k) * (k - i); };
    Eigen::Matrix3d r = Eigen::Matrix3d::Zero();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) {
                    double e1 = eps(i, k, l);
                    if (e1 == 0.0)
                        continue;
                    for (int m = 0; m < 3; ++m)
                        for (int n = 0; n < 3; ++n) {
                            double e2 = eps(j, m, n);
                            if (e2 != 0.0)
                                r(i, j) += e1 * e2 * a(k, m) * b(l, n);
                        }
                }
    return r;
}

inline Eigen::Matrix3d cof(const Eigen::Matrix3d& a) { return 0.5 * tensor_cross(a, a); }

/// cof F and its directional derivative in direction dF (2D: cof is linear).
inline std::pair<Mat2, Mat2> cof_and_derivative(const Mat2& f, const Mat2& df) { return {cof(f), cof(df)}; }

inline std::pair<Eigen::Matrix3d, Eigen::Matrix3d> cof_and_derivative(const Eigen::Matrix3d& f,
                                                                      const Eigen::Matrix3d& df)
{
    return {cof(f), tensor_cross(f, df)};
}

/// The linear map A -> cof A on flattened 2x2 matrices.
inline const Mat4& cof_operator()
{
    static const Mat4 d = [] {
        Mat4 m = Mat4::Zero();
        m(0, 3) = 1.0;
        m(1, 2) = -1.0;
        m(2, 1) = -1.0;
        m(3, 0) = 1.0;
        return m;
    }();
    return d;
}

inline Mat2 piola_stress(const MaterialPoint& pt, const MaterialParams& m)
{
    auto c = constraint(pt.F.determinant(), m.kind);
    return m.mu * pt.F - pt.p * c.dc * cof(pt.F);
}

inline Tangent4 material_tangent(const MaterialPoint& pt, const MaterialParams& m)
{
    auto c = constraint(pt.F.determinant(), m.kind);
    Vec4 cf = flatten(cof(pt.F));
    return m.mu * Mat4::Identity() - pt.p * (c.ddc * cf * cf.transpose() + c.dc * cof_operator());
}

struct ShiftedTangent {
    Tangent4 a;
    double shift;
};

/// Adds max(eps_lambda, -lambda_min) times the identity.
inline ShiftedTangent shifted_tangent(const Tangent4& a, const MaterialParams& m)
{
    Eigen::SelfAdjointEigenSolver<Mat4> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    double shift = std::max(m.eps_lambda, -es.eigenvalues()(0));
    return {a + shift * Mat4::Identity(), shift};
}

} // namespace ndtns
