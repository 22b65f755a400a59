#pragma once

#include "ndtns/common.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

namespace ndtns {

/// Points and weights on the reference triangle {(0,0),(1,0),(0,1)} or on [0,1].
struct QuadratureRule {
    std::vector<Vec2> points;     // edge rules store the parameter in x()
    std::vector<double> weights;
    int degree = 0;

    std::size_t size() const { return weights.size(); }
};

namespace detail {

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w)
{
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 1; j <= n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16)
                break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
}

} // namespace detail

/// Gauss-Legendre rule on [0,1], exact up to `degree`.
inline QuadratureRule edge_rule(int degree)
{
    int n = std::max(1, (degree + 2) / 2);
    std::vector<double> x, w;
    detail::gauss_legendre(n, x, w);
    QuadratureRule q;
    q.degree = 2 * n - 1;
    for (int i = 0; i < n; ++i) {
        q.points.emplace_back(0.5 * (x[i] + 1.0), 0.0);
        q.weights.push_back(0.5 * w[i]);
    }
    return q;
}

/// Collapsed (Duffy) tensor Gauss rule on the reference triangle, exact up to `degree`.
inline QuadratureRule triangle_rule(int degree)
{
    int n = std::max(1, (degree + 3) / 2);
    std::vector<double> x, w;
    detail::gauss_legendre(n, x, w);
    QuadratureRule q;
    q.degree = 2 * n - 2;
    for (int i = 0; i < n; ++i) {
        double a = 0.5 * (x[i] + 1.0);
        for (int j = 0; j < n; ++j) {
            double b = 0.5 * (x[j] + 1.0);
            q.points.emplace_back(a * (1.0 - b), b);
            q.weights.push_back(0.25 * w[i] * w[j] * (1.0 - b));
        }
    }
    return q;
}

/// Orthonormal shifted Legendre polynomial on [0,1]; L_j(1-s) = (-1)^j L_j(s).
inline double legendre01(int j, double s)
{
    double t = 2.0 * s - 1.0;
    double p0 = 1.0, p1 = t;
    double p = (j == 0) ? p0 : p1;
    for (int m = 2; m <= j; ++m) {
        p = ((2.0 * m - 1.0) * t * p1 - (m - 1.0) * p0) / m;
        p0 = p1;
        p1 = p;
    }
    return std::sqrt(2.0 * j + 1.0) * p;
}

} // namespace ndtns
