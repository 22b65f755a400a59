#pragma once

#include "ndtns/common.hpp"

#include <vector>

namespace ndtns {

inline int num_monomials(int degree) { return (degree + 1) * (degree + 2) / 2; }

/// Monomial exponents (a, b) of x^a y^b, ordered by total degree then descending a.
inline std::vector<std::pair<int, int>> monomial_exponents(int degree)
{
    std::vector<std::pair<int, int>> e;
    for (int d = 0; d <= degree; ++d)
        for (int a = d; a >= 0; --a)
            e.emplace_back(a, d - a);
    return e;
}

/// Values and first derivatives of all monomials up to `degree` at x.
struct MonomialValues {
    VecX v, dx, dy;
};

inline MonomialValues eval_monomials(int degree, const Vec2& x)
{
    const int n = num_monomials(degree);
    MonomialValues m{VecX(n), VecX(n), VecX(n)};
    std::vector<double> px(degree + 1, 1.0), py(degree + 1, 1.0);
    for (int i = 1; i <= degree; ++i) {
        px[i] = px[i - 1] * x.x();
        py[i] = py[i - 1] * x.y();
    }
    int idx = 0;
    for (int d = 0; d <= degree; ++d)
        for (int a = d; a >= 0; --a, ++idx) {
            int b = d - a;
            m.v(idx) = px[a] * py[b];
            m.dx(idx) = a > 0 ? a * px[a - 1] * py[b] : 0.0;
            m.dy(idx) = b > 0 ? b * px[a] * py[b - 1] : 0.0;
        }
    return m;
}

/// Polynomial functions with `ncomp` components; row f of `coeffs` holds the monomial
/// coefficients of function f, component-major (comp * nmono + m).
struct PolyBasis {
    int ncomp = 1;
    int degree = 0;
    MatX coeffs;

    int size() const { return static_cast<int>(coeffs.rows()); }
    int nmono() const { return num_monomials(degree); }

    /// Values: size() x ncomp.
    MatX values(const Vec2& x) const
    {
        auto m = eval_monomials(degree, x);
        MatX out(size(), ncomp);
        const int nm = nmono();
        for (int c = 0; c < ncomp; ++c)
            out.col(c) = coeffs.middleCols(c * nm, nm) * m.v;
        return out;
    }

    /// Derivatives d/dx and d/dy of each component: size() x ncomp each.
    std::pair<MatX, MatX> derivatives(const Vec2& x) const
    {
        auto m = eval_monomials(degree, x);
        MatX gx(size(), ncomp), gy(size(), ncomp);
        const int nm = nmono();
        for (int c = 0; c < ncomp; ++c) {
            gx.col(c) = coeffs.middleCols(c * nm, nm) * m.dx;
            gy.col(c) = coeffs.middleCols(c * nm, nm) * m.dy;
        }
        return {gx, gy};
    }
};

} // namespace ndtns
