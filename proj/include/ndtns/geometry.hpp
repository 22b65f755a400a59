#pragma once

#include "ndtns/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ndtns {

/// Local edge i of a triangle is opposite vertex i and traversed counter-clockwise.
inline constexpr std::array<std::array<int, 2>, 3> kLocalEdges{{{1, 2}, {2, 0}, {0, 1}}};

struct Facet {
    std::array<int, 2> v{-1, -1};          // counter-clockwise w.r.t. elements[0]
    std::array<int, 2> elements{-1, -1};
    std::array<int, 2> local_edge{-1, -1};
    std::string marker;                    // empty on interior facets

    bool is_boundary() const { return elements[1] < 0; }
};

struct Circle {
    Vec2 center = Vec2::Zero();
    double radius = 1.0;

    Vec2 project(const Vec2& x) const
    {
        Vec2 d = x - center;
        return center + radius * d / d.norm();
    }
};

/// Conforming triangulation with optional quadratic boundary edges.
///
/// Facet normals are fixed as the outward normal of the first adjacent element,
/// which is the outer normal on the boundary.
struct Triangulation {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Facet> facets;
    std::vector<std::array<int, 3>> element_facets;
    std::map<int, Vec2> curved_edges;                 // facet -> quadratic control point
    std::map<std::string, Circle> boundary_curves;    // exact geometry used by refinement
    std::map<std::string, int> tagged_vertices;
    int curve_order = 1;

    int num_elements() const { return static_cast<int>(triangles.size()); }
    int num_facets() const { return static_cast<int>(facets.size()); }

    std::vector<int> facets_with_marker(const std::string& name) const
    {
        std::vector<int> out;
        for (int f = 0; f < num_facets(); ++f)
            if (facets[f].marker == name)
                out.push_back(f);
        return out;
    }

    bool is_curved(int element) const
    {
        for (int f : element_facets[element])
            if (curved_edges.count(f))
                return true;
        return false;
    }
};

namespace detail {

inline std::pair<int, int> edge_key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

} // namespace detail

/// Builds facets and adjacency. `edge_markers` and `controls` are keyed by sorted vertex pairs.
inline Triangulation make_triangulation(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
                                        const std::map<std::pair<int, int>, std::string>& edge_markers,
                                        const std::map<std::pair<int, int>, Vec2>& controls = {})
{
    Triangulation mesh;
    mesh.vertices = std::move(vertices);
    mesh.triangles = std::move(triangles);
    mesh.element_facets.resize(mesh.triangles.size());

    std::map<std::pair<int, int>, int> lookup;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const auto& t = mesh.triangles[e];
        for (int v : t)
            if (v < 0 || v >= static_cast<int>(mesh.vertices.size()))
                throw InvalidInput("triangle references a missing vertex");
        const Vec2& a = mesh.vertices[t[0]];
        if (cross2(mesh.vertices[t[1]] - a, mesh.vertices[t[2]] - a) <= 0.0)
            throw DegenerateGeometry("triangle " + std::to_string(e) + " is not positively oriented");
        for (int i = 0; i < 3; ++i) {
            int va = t[kLocalEdges[i][0]], vb = t[kLocalEdges[i][1]];
            auto key = detail::edge_key(va, vb);
            auto it = lookup.find(key);
            if (it == lookup.end()) {
                Facet f;
                f.v = {va, vb};
                f.elements[0] = e;
                f.local_edge[0] = i;
                lookup[key] = mesh.num_facets();
                mesh.element_facets[e][i] = mesh.num_facets();
                mesh.facets.push_back(f);
            } else {
                Facet& f = mesh.facets[it->second];
                if (f.elements[1] >= 0)
                    throw InvalidInput("facet shared by more than two triangles");
                f.elements[1] = e;
                f.local_edge[1] = i;
                mesh.element_facets[e][i] = it->second;
            }
        }
    }
    for (const auto& [key, name] : edge_markers) {
        auto it = lookup.find(key);
        if (it == lookup.end())
            throw InvalidInput("marker '" + name + "' references an edge that is not in the mesh");
        mesh.facets[it->second].marker = name;
    }
    for (const auto& [key, c] : controls) {
        auto it = lookup.find(key);
        if (it == lookup.end())
            throw InvalidInput("curved edge is not in the mesh");
        mesh.curved_edges[it->second] = c;
    }
    if (!controls.empty())
        mesh.curve_order = 2;
    return mesh;
}

/// Reference-to-physical map of one element, affine or with quadratic edges.
class ElementGeometry {
public:
    ElementGeometry(const Triangulation& mesh, int element) : element_(element)
    {
        const auto& t = mesh.triangles[element];
        for (int i = 0; i < 3; ++i)
            x_[i] = mesh.vertices[t[i]];
        b_.col(0) = x_[1] - x_[0];
        b_.col(1) = x_[2] - x_[0];
        for (int i = 0; i < 3; ++i) {
            auto it = mesh.curved_edges.find(mesh.element_facets[element][i]);
            if (it != mesh.curved_edges.end()) {
                const auto [a, b] = kLocalEdges[i];
                bubble_[i] = it->second - 0.5 * (x_[a] + x_[b]);
                curved_ = true;
            }
        }
    }

    bool curved() const { return curved_; }
    int element() const { return element_; }
    const Vec2& vertex(int i) const { return x_[i]; }

    Vec2 map(const Vec2& xh) const
    {
        Vec2 x = x_[0] + b_ * xh;
        if (curved_) {
            auto lam = barycentric(xh);
            for (int i = 0; i < 3; ++i)
                if (bubble_[i]) {
                    const auto [a, b] = kLocalEdges[i];
                    x += 4.0 * lam[a] * lam[b] * *bubble_[i];
                }
        }
        return x;
    }

    Mat2 jacobian(const Vec2& xh) const
    {
        Mat2 g = b_;
        if (curved_) {
            auto lam = barycentric(xh);
            for (int i = 0; i < 3; ++i)
                if (bubble_[i]) {
                    const auto [a, b] = kLocalEdges[i];
                    Vec2 grad = lam[a] * kGradLambda[b] + lam[b] * kGradLambda[a];
                    g += 4.0 * *bubble_[i] * grad.transpose();
                }
        }
        return g;
    }

    /// d G / d xhat_l, constant for the quadratic map.
    Mat2 jacobian_derivative(int l) const
    {
        Mat2 d = Mat2::Zero();
        if (!curved_)
            return d;
        for (int i = 0; i < 3; ++i)
            if (bubble_[i]) {
                const auto [a, b] = kLocalEdges[i];
                Vec2 h = kGradLambda[a] * kGradLambda[b](l) + kGradLambda[b] * kGradLambda[a](l);
                d += 4.0 * *bubble_[i] * h.transpose();
            }
        return d;
    }

    static std::array<double, 3> barycentric(const Vec2& xh) { return {1.0 - xh.x() - xh.y(), xh.x(), xh.y()}; }

    /// Reference point on local edge i at parameter s in [0,1] (counter-clockwise).
    static Vec2 edge_point(int i, double s)
    {
        const auto [a, b] = kLocalEdges[i];
        return (1.0 - s) * kRefVertices[a] + s * kRefVertices[b];
    }

    static Vec2 edge_tangent(int i)
    {
        const auto [a, b] = kLocalEdges[i];
        return kRefVertices[b] - kRefVertices[a];
    }

    static inline const std::array<Vec2, 3> kRefVertices{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
    static inline const std::array<Vec2, 3> kGradLambda{Vec2(-1, -1), Vec2(1, 0), Vec2(0, 1)};

private:
    int element_;
    std::array<Vec2, 3> x_;
    Mat2 b_;
    std::array<std::optional<Vec2>, 3> bubble_;
    bool curved_ = false;
};

struct GeometryPoint {
    Vec2 x;
    Mat2 g;
    double det = 0.0;
};

/// Physical point, Jacobian and its determinant at each reference point.
inline std::vector<GeometryPoint> geometry_at(const Triangulation& mesh, int element, const std::vector<Vec2>& ref_points)
{
    ElementGeometry geo(mesh, element);
    std::vector<GeometryPoint> out;
    out.reserve(ref_points.size());
    for (const auto& xh : ref_points) {
        GeometryPoint gp{geo.map(xh), geo.jacobian(xh), 0.0};
        gp.det = gp.g.determinant();
        if (!(gp.det > 0.0))
            throw DegenerateGeometry("non-positive Jacobian determinant in element " + std::to_string(element));
        out.push_back(gp);
    }
    return out;
}

struct FacetFrame {
    Vec2 normal;                      // fixed facet normal N_F
    Vec2 tangent;                     // N_F rotated by +90 degrees
    std::array<int, 2> signs{1, -1};  // +1 where the element normal equals N_F
    int num_elements = 2;
};

/// Fixed facet frame, evaluated at the facet midpoint for curved facets.
inline FacetFrame facet_frame(const Triangulation& mesh, int facet)
{
    const Facet& f = mesh.facets.at(facet);
    ElementGeometry geo(mesh, f.elements[0]);
    int le = f.local_edge[0];
    Vec2 tau = geo.jacobian(ElementGeometry::edge_point(le, 0.5)) * ElementGeometry::edge_tangent(le);
    FacetFrame fr;
    fr.normal = rot_cw(tau).normalized();
    fr.tangent = rot_ccw(fr.normal);
    fr.num_elements = f.is_boundary() ? 1 : 2;
    fr.signs = {1, f.is_boundary() ? 0 : -1};
    return fr;
}

inline double element_diameter(const Triangulation& mesh, int element)
{
    const auto& t = mesh.triangles[element];
    double h = 0.0;
    for (auto [a, b] : kLocalEdges)
        h = std::max(h, (mesh.vertices[t[a]] - mesh.vertices[t[b]]).norm());
    return h;
}

/// Local mesh size sqrt(2 |T|) from the area of the straight triangle through the vertices.
inline double element_size(const Triangulation& mesh, int element)
{
    const auto& t = mesh.triangles[element];
    Vec2 a = mesh.vertices[t[1]] - mesh.vertices[t[0]], b = mesh.vertices[t[2]] - mesh.vertices[t[0]];
    return std::sqrt(std::abs(cross2(a, b)));
}

/// Height of element e over its local edge le: 2 |T| / |F| (straight-sided).
inline double facet_height(const Triangulation& mesh, int element, int le)
{
    const auto& t = mesh.triangles[element];
    const auto [a, b] = kLocalEdges[le];
    double len = (mesh.vertices[t[b]] - mesh.vertices[t[a]]).norm();
    return element_size(mesh, element) * element_size(mesh, element) / len;
}

inline double max_edge_length(const Triangulation& mesh)
{
    double h = 0.0;
    for (const auto& f : mesh.facets)
        h = std::max(h, (mesh.vertices[f.v[0]] - mesh.vertices[f.v[1]]).norm());
    return h;
}

/// Red refinement: every triangle is split into four. New vertices on marked circular
/// boundaries are projected onto the circle; quadratic control points are regenerated.
inline Triangulation uniform_refine(const Triangulation& mesh)
{
    std::vector<Vec2> verts = mesh.vertices;
    std::vector<int> mid(mesh.facets.size(), -1);
    for (int f = 0; f < mesh.num_facets(); ++f) {
        const Facet& fc = mesh.facets[f];
        Vec2 m = 0.5 * (mesh.vertices[fc.v[0]] + mesh.vertices[fc.v[1]]);
        auto it = mesh.boundary_curves.find(fc.marker);
        if (fc.is_boundary() && it != mesh.boundary_curves.end())
            m = it->second.project(m);
        else if (auto c = mesh.curved_edges.find(f); c != mesh.curved_edges.end())
            m = c->second;
        mid[f] = static_cast<int>(verts.size());
        verts.push_back(m);
    }

    std::vector<std::array<int, 3>> tris;
    tris.reserve(4 * mesh.triangles.size());
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const auto& t = mesh.triangles[e];
        const auto& ef = mesh.element_facets[e];
        int m0 = mid[ef[0]], m1 = mid[ef[1]], m2 = mid[ef[2]];
        tris.push_back({t[0], m2, m1});
        tris.push_back({m2, t[1], m0});
        tris.push_back({m1, m0, t[2]});
        tris.push_back({m0, m1, m2});
    }

    std::map<std::pair<int, int>, std::string> markers;
    std::map<std::pair<int, int>, Vec2> controls;
    for (int f = 0; f < mesh.num_facets(); ++f) {
        const Facet& fc = mesh.facets[f];
        if (fc.marker.empty())
            continue;
        for (int a : {fc.v[0], fc.v[1]}) {
            auto key = detail::edge_key(a, mid[f]);
            markers[key] = fc.marker;
            if (mesh.curve_order == 2 && fc.is_boundary()) {
                auto it = mesh.boundary_curves.find(fc.marker);
                if (it != mesh.boundary_curves.end())
                    controls[key] = it->second.project(0.5 * (verts[a] + verts[mid[f]]));
            }
        }
    }
    Triangulation out = make_triangulation(std::move(verts), std::move(tris), markers, controls);
    out.boundary_curves = mesh.boundary_curves;
    out.tagged_vertices = mesh.tagged_vertices;
    out.curve_order = mesh.curve_order;
    return out;
}

struct AnnulusLayout {
    int radial = 2;    // element layers between the circles at level 0
    int angular = 5;   // sectors along the quarter circle at level 0
};

/// Quarter annulus in the first quadrant.
///
/// Markers: "inner", "outer", "sym_x" (facets on the x axis), "sym_y" (facets on the y axis).
inline Triangulation build_quarter_annulus(double r_in, double r_out, int level, int curve_order,
                                           AnnulusLayout layout = {})
{
    if (!(r_in > 0.0 && r_out > r_in))
        throw InvalidInput("quarter annulus requires 0 < r_in < r_out");
    if (level < 0 || (curve_order != 1 && curve_order != 2))
        throw InvalidInput("invalid refinement level or curve order");

    const int nr = layout.radial, nt = layout.angular;
    auto id = [&](int i, int j) { return j * (nr + 1) + i; };
    std::vector<Vec2> verts;
    for (int j = 0; j <= nt; ++j) {
        double th = 0.5 * std::numbers::pi * j / nt;
        for (int i = 0; i <= nr; ++i) {
            double r = r_in + (r_out - r_in) * i / nr;
            verts.emplace_back(r * std::cos(th), r * std::sin(th));
        }
    }
    // exact axis coordinates for the symmetry sides
    for (int i = 0; i <= nr; ++i) {
        verts[id(i, 0)].y() = 0.0;
        verts[id(i, nt)].x() = 0.0;
    }
    std::vector<std::array<int, 3>> tris;
    for (int j = 0; j < nt; ++j)
        for (int i = 0; i < nr; ++i) {
            int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            tris.push_back({a, b, c});
            tris.push_back({a, c, d});
        }
    std::map<std::pair<int, int>, std::string> markers;
    std::map<std::pair<int, int>, Vec2> controls;
    const Circle inner{Vec2::Zero(), r_in}, outer{Vec2::Zero(), r_out};
    for (int j = 0; j < nt; ++j) {
        auto ki = detail::edge_key(id(0, j), id(0, j + 1));
        auto ko = detail::edge_key(id(nr, j), id(nr, j + 1));
        markers[ki] = "inner";
        markers[ko] = "outer";
        if (curve_order == 2) {
            controls[ki] = inner.project(0.5 * (verts[id(0, j)] + verts[id(0, j + 1)]));
            controls[ko] = outer.project(0.5 * (verts[id(nr, j)] + verts[id(nr, j + 1)]));
        }
    }
    for (int i = 0; i < nr; ++i) {
        markers[detail::edge_key(id(i, 0), id(i + 1, 0))] = "sym_x";
        markers[detail::edge_key(id(i, nt), id(i + 1, nt))] = "sym_y";
    }
    Triangulation mesh = make_triangulation(std::move(verts), std::move(tris), markers, controls);
    mesh.boundary_curves["inner"] = inner;
    mesh.boundary_curves["outer"] = outer;
    mesh.curve_order = curve_order;
    for (int l = 0; l < level; ++l)
        mesh = uniform_refine(mesh);
    return mesh;
}

/// Diagonal used to split the quadrilaterals of structured meshes.
enum class QuadSplit {
    Falling,  // (i+1, j) to (i, j+1)
    Rising,   // (i, j) to (i+1, j+1)
};

/// Structured Cook membrane, corners (0,0), (48,44), (48,60), (0,44) times `scale`.
///
/// Each of the n x n quadrilaterals is split into two triangles along `split`.
/// Markers: "left", "right", "bottom", "top"; vertex "A" is the upper right corner.
inline Triangulation build_cook_mesh(int n, double scale = 1.0, QuadSplit split = QuadSplit::Falling)
{
    if (n < 1)
        throw InvalidInput("Cook mesh needs n >= 1");
    if (!(scale > 0.0))
        throw InvalidInput("Cook mesh scale must be positive");
    auto id = [&](int i, int j) { return j * (n + 1) + i; };
    std::vector<Vec2> verts;
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) {
            double xi = static_cast<double>(i) / n, eta = static_cast<double>(j) / n;
            verts.emplace_back(scale * 48.0 * xi, scale * (44.0 * xi + eta * (44.0 - 28.0 * xi)));
        }
    std::vector<std::array<int, 3>> tris;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            if (split == QuadSplit::Falling) {
                tris.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
                tris.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
            } else {
                tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
                tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
            }
        }
    std::map<std::pair<int, int>, std::string> markers;
    for (int k = 0; k < n; ++k) {
        markers[detail::edge_key(id(0, k), id(0, k + 1))] = "left";
        markers[detail::edge_key(id(n, k), id(n, k + 1))] = "right";
        markers[detail::edge_key(id(k, 0), id(k + 1, 0))] = "bottom";
        markers[detail::edge_key(id(k, n), id(k + 1, n))] = "top";
    }
    Triangulation mesh = make_triangulation(std::move(verts), std::move(tris), markers);
    mesh.tagged_vertices["A"] = id(n, n);
    return mesh;
}

/// Unit square split into two triangles along (1,0)-(0,1), refined `level` times.
/// All boundary facets carry the marker "boundary".
inline Triangulation build_unit_square(int level)
{
    if (level < 0)
        throw InvalidInput("refinement level must be non-negative");
    std::vector<Vec2> verts{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
    std::vector<std::array<int, 3>> tris{{0, 1, 3}, {1, 2, 3}};
    std::map<std::pair<int, int>, std::string> markers;
    for (int i = 0; i < 4; ++i)
        markers[detail::edge_key(i, (i + 1) % 4)] = "boundary";
    Triangulation mesh = make_triangulation(std::move(verts), std::move(tris), markers);
    for (int l = 0; l < level; ++l)
        mesh = uniform_refine(mesh);
    return mesh;
}

} // namespace ndtns
