#pragma once

#include "ndtns/common.hpp"
#include "ndtns/elements.hpp"
#include "ndtns/geometry.hpp"
#include "ndtns/polynomials.hpp"
#include "ndtns/quadrature.hpp"

#include <functional>
#include <set>
#include <string>
#include <vector>

namespace ndtns {

using VectorField = std::function<Vec2(const Vec2&)>;
using ScalarField = std::function<double(const Vec2&)>;

/// Element-local DoF layout: [u facet | u~ | u interior | F | P | p].
/// The first `coupling` entries are shared between elements, the rest are element-local.
struct LocalLayout {
    int k = 2;
    bool reduced = true;
    int n_rt_facet = 0, n_lam = 0, n_rt_int = 0, n_F = 0, n_P = 0, n_p = 0;
    int rt_facet = 0, lam = 0, rt_int = 0, F = 0, P = 0, p = 0, total = 0, coupling = 0;

    static LocalLayout make(int k, bool reduced)
    {
        check_order(k);
        LocalLayout l;
        l.k = k;
        l.reduced = reduced;
        const int nm = num_monomials(k);
        l.n_rt_facet = 3 * (k + 1);
        l.n_lam = 3 * (k + 1);
        l.n_rt_int = k * (k + 1);
        l.n_F = l.n_P = (reduced ? 3 : 4) * nm;
        l.n_p = nm;
        l.rt_facet = 0;
        l.lam = l.n_rt_facet;
        l.rt_int = l.lam + l.n_lam;
        l.F = l.rt_int + l.n_rt_int;
        l.P = l.F + l.n_F;
        l.p = l.P + l.n_P;
        l.total = l.p + l.n_p;
        l.coupling = l.n_rt_facet + l.n_lam;
        return l;
    }

    int n_internal() const { return total - coupling; }
    int n_rt() const { return n_rt_facet + n_rt_int; }

    /// Local index of RT reference function i.
    int rt_index(int i) const { return i < n_rt_facet ? rt_facet + i : rt_int + (i - n_rt_facet); }
};

/// Boundary prescription, with data given at full load (scaled by the load fraction).
struct BoundaryConditions {
    std::set<std::string> normal_dirichlet;     // u . N prescribed
    std::set<std::string> tangential_dirichlet; // tangential displacement prescribed
    VectorField displacement;                   // empty: zero
    std::map<std::string, VectorField> traction;
    VectorField body_force;                     // empty: none
};

/// Global numbering of the coupling DoFs (RT facet moments, then facet tangential moments).
struct DofMap {
    LocalLayout layout;
    int num_facets = 0;
    int num_global = 0;
    std::vector<std::vector<int>> global;   // per element: coupling local index -> global
    std::vector<std::vector<double>> sign;  // orientation factor local = sign * global
    std::vector<char> essential;
    VecX essential_value;                   // at full load

    int k() const { return layout.k; }
    int rt_dof(int facet, int j) const { return facet * (k() + 1) + j; }
    int lambda_dof(int facet, int j) const { return (num_facets + facet) * (k() + 1) + j; }
    int num_essential() const
    {
        int n = 0;
        for (char c : essential)
            n += c;
        return n;
    }
    int num_free() const { return num_global - num_essential(); }
};

/// Orientation factor of moment j seen from the second adjacent element.
inline double reversed_sign_rt(int j) { return (j % 2 == 0) ? -1.0 : 1.0; }
inline double reversed_sign_tn(int j) { return (j % 2 == 0) ? 1.0 : -1.0; }

inline void validate_markers(const Triangulation& mesh, const BoundaryConditions& bc)
{
    std::set<std::string> present;
    for (const auto& f : mesh.facets)
        if (!f.marker.empty())
            present.insert(f.marker);
    auto check = [&](const std::string& m) {
        if (!present.count(m))
            throw InvalidInput("boundary marker '" + m + "' references no facet");
    };
    for (const auto& m : bc.normal_dirichlet)
        check(m);
    for (const auto& m : bc.tangential_dirichlet)
        check(m);
    for (const auto& [m, f] : bc.traction) {
        check(m);
        if (bc.normal_dirichlet.count(m) && bc.tangential_dirichlet.count(m))
            throw InvalidInput("traction prescribed on fully clamped boundary '" + m + "'");
    }
}

/// Facet moments int_0^1 g(X(s), tau(s), nu(s)) L_j(s) ds along a boundary facet, where tau is
/// the unnormalized counter-clockwise tangent and nu = rot_cw(tau).
template <class G>
VecX facet_moments(const Triangulation& mesh, int facet, int k, G&& g, int degree = 8)
{
    const Facet& f = mesh.facets[facet];
    ElementGeometry geo(mesh, f.elements[0]);
    const int le = f.local_edge[0];
    auto rule = edge_rule(degree);
    VecX m = VecX::Zero(k + 1);
    for (std::size_t q = 0; q < rule.size(); ++q) {
        double s = rule.points[q].x();
        Vec2 xh = ElementGeometry::edge_point(le, s);
        Vec2 tau = geo.jacobian(xh) * ElementGeometry::edge_tangent(le);
        double v = g(geo.map(xh), tau, Vec2(rot_cw(tau)));
        for (int j = 0; j <= k; ++j)
            m(j) += rule.weights[q] * v * legendre01(j, s);
    }
    return m;
}

inline DofMap build_dofmap(const Triangulation& mesh, int k, bool reduced, const BoundaryConditions& bc)
{
    validate_markers(mesh, bc);
    DofMap d;
    d.layout = LocalLayout::make(k, reduced);
    d.num_facets = mesh.num_facets();
    d.num_global = 2 * d.num_facets * (k + 1);
    d.global.resize(mesh.num_elements());
    d.sign.resize(mesh.num_elements());
    for (int e = 0; e < mesh.num_elements(); ++e) {
        auto& g = d.global[e];
        auto& s = d.sign[e];
        g.resize(d.layout.coupling);
        s.resize(d.layout.coupling);
        for (int le = 0; le < 3; ++le) {
            int f = mesh.element_facets[e][le];
            bool first = mesh.facets[f].elements[0] == e;
            for (int j = 0; j <= k; ++j) {
                int a = d.layout.rt_facet + le * (k + 1) + j;
                int b = d.layout.lam + le * (k + 1) + j;
                g[a] = d.rt_dof(f, j);
                g[b] = d.lambda_dof(f, j);
                s[a] = first ? 1.0 : reversed_sign_rt(j);
                s[b] = first ? 1.0 : reversed_sign_rt(j);
            }
        }
    }

    d.essential.assign(d.num_global, 0);
    d.essential_value = VecX::Zero(d.num_global);
    for (int f = 0; f < mesh.num_facets(); ++f) {
        const Facet& fc = mesh.facets[f];
        if (!fc.is_boundary())
            continue;
        bool dn = bc.normal_dirichlet.count(fc.marker) > 0;
        bool dt = bc.tangential_dirichlet.count(fc.marker) > 0;
        if (dn) {
            VecX m = VecX::Zero(k + 1);
            if (bc.displacement)
                m = facet_moments(mesh, f, k, [&](const Vec2& x, const Vec2&, const Vec2& nu) {
                    return bc.displacement(x).dot(nu);
                });
            for (int j = 0; j <= k; ++j) {
                d.essential[d.rt_dof(f, j)] = 1;
                d.essential_value(d.rt_dof(f, j)) = m(j);
            }
        }
        if (dt) {
            VecX m = VecX::Zero(k + 1);
            if (bc.displacement)
                m = facet_moments(mesh, f, k, [&](const Vec2& x, const Vec2& tau, const Vec2&) {
                    return bc.displacement(x).dot(tau);
                });
            for (int j = 0; j <= k; ++j) {
                d.essential[d.lambda_dof(f, j)] = 1;
                d.essential_value(d.lambda_dof(f, j)) = m(j);
            }
        }
    }
    return d;
}

} // namespace ndtns
