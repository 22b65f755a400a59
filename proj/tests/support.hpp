#pragma once

#include "ndtns/assembly.hpp"
#include "ndtns/dofmap.hpp"
#include "ndtns/geometry.hpp"

#include <random>
#include <vector>

namespace ndtns::support {

/// Least-squares coefficients of a vector field in the physical RT basis of one element.
inline VecX fit_rt(const std::vector<VolumePoint>& vps, const std::function<Vec2(const Vec2&)>& f)
{
    const int n = static_cast<int>(vps.front().u.rows());
    MatX a(2 * vps.size(), n);
    VecX b(2 * vps.size());
    for (std::size_t q = 0; q < vps.size(); ++q) {
        a.row(2 * q) = vps[q].u.col(0).transpose();
        a.row(2 * q + 1) = vps[q].u.col(1).transpose();
        Vec2 v = f(vps[q].x);
        b(2 * q) = v.x();
        b(2 * q + 1) = v.y();
    }
    return a.colPivHouseholderQr().solve(b);
}

/// Least-squares coefficients of a matrix field in the physical stress basis of one element.
inline VecX fit_stress(const std::vector<VolumePoint>& vps, const std::function<Mat2(const Vec2&)>& f)
{
    const int n = static_cast<int>(vps.front().P.rows());
    MatX a(4 * vps.size(), n);
    VecX b(4 * vps.size());
    for (std::size_t q = 0; q < vps.size(); ++q) {
        a.middleRows(4 * q, 4) = vps[q].P.transpose();
        b.segment(4 * q, 4) = flatten(f(vps[q].x));
    }
    return a.colPivHouseholderQr().solve(b);
}

/// Single triangle with a boundary marker on every edge.
inline Triangulation single_triangle(Vec2 a, Vec2 b, Vec2 c)
{
    return make_triangulation({a, b, c}, {{0, 1, 2}},
                              {{{0, 1}, "bottom"}, {{1, 2}, "diag"}, {{0, 2}, "left"}});
}

/// Two triangles sharing the edge (1,0)-(0.2,0.9).
inline Triangulation two_triangles()
{
    std::vector<Vec2> v{Vec2(0, 0), Vec2(1, 0), Vec2(1.1, 1.0), Vec2(0.2, 0.9)};
    return make_triangulation(v, {{0, 1, 3}, {1, 2, 3}},
                              {{{0, 1}, "bottom"}, {{1, 2}, "right"}, {{2, 3}, "top"}, {{0, 3}, "left"}});
}

/// Random local state near the reference configuration.
inline VecX random_state(const LocalLayout& l, std::mt19937& rng, double amplitude, double p0 = 1.0)
{
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    VecX c(l.total);
    for (int i = 0; i < l.total; ++i)
        c(i) = amplitude * d(rng);
    c(l.p) += p0;
    return c;
}

inline double relative_difference(const MatX& a, const MatX& b)
{
    return (a - b).norm() / std::max(1e-300, std::max(a.norm(), b.norm()));
}

} // namespace ndtns::support
