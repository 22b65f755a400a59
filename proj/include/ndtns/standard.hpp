#pragma once

#include "ndtns/dofmap.hpp"
#include "ndtns/elements.hpp"
#include "ndtns/geometry.hpp"
#include "ndtns/material.hpp"
#include "ndtns/postproc.hpp"
#include "ndtns/quadrature.hpp"
#include "ndtns/solver.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <limits>
#include <vector>

namespace ndtns {

struct StandardOptions {
    int order = 2;          // 2: Taylor-Hood P2/P1, 1: MINI (P1 + bubble)/P1
    MaterialParams material;
};

/// Displacement-pressure comparison method with continuous Lagrange spaces on the
/// (isoparametric) element map, F = I + Grad u.
class StandardProblem {
public:
    struct State {
        VecX x;  // [u (2 per node, node-major) | p (one per vertex)]
    };

    StandardProblem(const Triangulation& mesh, StandardOptions opt, BoundaryConditions bc)
        : mesh_(mesh), opt_(opt), bc_(std::move(bc))
    {
        check_order(opt_.order);
        opt_.material.validate();
        validate_markers(mesh_, bc_);
        const int nv = static_cast<int>(mesh_.vertices.size());
        n_nodes_ = nv + (opt_.order == 2 ? mesh_.num_facets() : mesh_.num_elements());
        n_u_ = 2 * n_nodes_;
        n_ = n_u_ + nv;
        build_element_data();
        build_essential();
        build_loads();
    }

    int num_dofs() const { return n_; }
    int num_free() const
    {
        int n = 0;
        for (char c : essential_)
            n += !c;
        return n;
    }
    const Triangulation& mesh() const { return mesh_; }

    State initial_state() const
    {
        State s;
        s.x = VecX::Zero(n_);
        s.x.tail(n_ - n_u_).setConstant(opt_.material.mu);
        return s;
    }

    double assemble(const State& s, double xi, const NewtonConfig& cfg)
    {
        std::vector<Eigen::Triplet<double>> trip;
        r_ = -xi * load_;
        const MaterialParams& m = opt_.material;
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            const auto& ed = elems_[e];
            const auto dofs = element_dofs(e);
            const int nu = static_cast<int>(ed.nodes.size()), nl = static_cast<int>(dofs.size());
            VecX c(nl);
            for (int i = 0; i < nl; ++i)
                c(i) = s.x(dofs[i]);
            VecX re = VecX::Zero(nl);
            MatX ke = MatX::Zero(nl, nl);
            for (std::size_t q = 0; q < ed.w.size(); ++q) {
                const MatX& dn = ed.dn[q];
                const VecX& np = ed.np[q];
                Mat2 f = Mat2::Identity();
                for (int a = 0; a < nu; ++a)
                    for (int comp = 0; comp < 2; ++comp)
                        f.row(comp) += c(2 * a + comp) * dn.row(a);
                double p = np.dot(c.tail(3));
                ConstraintValues cv;
                try {
                    cv = constraint(f.determinant(), m.kind);
                } catch (const ConstitutiveDomainError& ex) {
                    throw ConstitutiveDomainError(ex.what(), e);
                }
                Mat2 stress = piola_stress({f, p}, m);
                Mat2 dcof = cv.dc * cof(f);
                Tangent4 a4 = material_tangent({f, p}, m);
                if (cfg.use_shift)
                    a4 = shifted_tangent(a4, m).a;
                const double w = ed.w[q];
                // B maps local u coefficients to flattened Grad u
                MatX b = MatX::Zero(4, 2 * nu);
                for (int a = 0; a < nu; ++a)
                    for (int comp = 0; comp < 2; ++comp) {
                        b(comp * 2 + 0, 2 * a + comp) = dn(a, 0);
                        b(comp * 2 + 1, 2 * a + comp) = dn(a, 1);
                    }
                re.head(2 * nu) += w * b.transpose() * flatten(stress);
                re.tail(3) -= w * cv.c * np;
                ke.topLeftCorner(2 * nu, 2 * nu) += w * b.transpose() * a4 * b;
                MatX kup = -w * (b.transpose() * flatten(dcof)) * np.transpose();
                ke.topRightCorner(2 * nu, 3) += kup;
                ke.bottomLeftCorner(3, 2 * nu) += kup.transpose();
                ke.bottomRightCorner(3, 3) -= w * cfg.eps_p * np * np.transpose();
            }
            for (int i = 0; i < nl; ++i) {
                r_(dofs[i]) += re(i);
                for (int j = 0; j < nl; ++j)
                    trip.emplace_back(dofs[i], dofs[j], ke(i, j));
            }
        }
        k_.resize(n_, n_);
        k_.setFromTriplets(trip.begin(), trip.end());
        double r2 = 0.0;
        for (int i = 0; i < n_; ++i)
            if (!essential_[i])
                r2 += r_(i) * r_(i);
        return std::sqrt(r2);
    }

    /// Residual and tangent of the last assembly, over all DoFs.
    const VecX& residual() const { return r_; }
    const SparseMatrix& matrix() const { return k_; }

    bool dirichlet_satisfied(const State& s, double xi) const
    {
        for (int i = 0; i < n_; ++i)
            if (essential_[i]) {
                double target = xi * essential_value_(i);
                if (std::abs(s.x(i) - target) > 1e-12 * (1.0 + std::abs(target)))
                    return false;
            }
        return true;
    }

    void update(State& s, double xi, double alpha)
    {
        std::vector<int> free_index(n_, -1);
        int nf = 0;
        for (int i = 0; i < n_; ++i)
            if (!essential_[i])
                free_index[i] = nf++;
        VecX delta = VecX::Zero(n_);
        for (int i = 0; i < n_; ++i)
            if (essential_[i])
                delta(i) = xi * essential_value_(i) - s.x(i);
        VecX b(nf);
        for (int i = 0; i < n_; ++i)
            if (free_index[i] >= 0)
                b(free_index[i]) = -r_(i);
        std::vector<Eigen::Triplet<double>> t;
        for (int k = 0; k < k_.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(k_, k); it; ++it) {
                int i = free_index[it.row()], j = free_index[it.col()];
                if (i < 0)
                    continue;
                if (j >= 0)
                    t.emplace_back(i, j, it.value());
                else
                    b(i) -= it.value() * delta(it.col());
            }
        SparseMatrix a(nf, nf);
        a.setFromTriplets(t.begin(), t.end());
        VecX x = solve_sparse_lu(a, b);
        for (int i = 0; i < n_; ++i)
            if (free_index[i] >= 0)
                delta(i) = x(free_index[i]);
        s.x += alpha * delta;
    }

    std::pair<double, double> jacobian_range(const State& s) const
    {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            const auto& ed = elems_[e];
            double jm = 0.0, area = 0.0;
            for (std::size_t q = 0; q < ed.w.size(); ++q) {
                jm += ed.w[q] * gradient(s, e, q).determinant();
                area += ed.w[q];
            }
            lo = std::min(lo, jm / area);
            hi = std::max(hi, jm / area);
        }
        return {lo, hi};
    }

    /// Nodal displacement at mesh vertex v.
    Vec2 vertex_displacement(const State& s, int v) const { return Vec2(s.x(2 * v), s.x(2 * v + 1)); }

    /// L2 errors against exact fields (quadrature degree 2k+4).
    ErrorRow l2_errors(const State& s, const ExactSolution& ex) const
    {
        ErrorRow r;
        r.h = max_edge_length(mesh_);
        auto rule = triangle_rule(2 * opt_.order + 4);
        double eu = 0, ep = 0, ef = 0, eP = 0;
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            auto pts = evaluate(s, e, rule);
            for (const auto& fv : pts) {
                eu += fv.w * (fv.u - ex.u(fv.x)).squaredNorm();
                ep += fv.w * std::pow(fv.p - ex.p(fv.x), 2);
                ef += fv.w * (fv.F - ex.F(fv.x)).squaredNorm();
                eP += fv.w * (fv.P - ex.P(fv.x)).squaredNorm();
            }
        }
        r.err_u = std::sqrt(eu);
        r.err_p = std::sqrt(ep);
        r.err_F = std::sqrt(ef);
        r.err_P = std::sqrt(eP);
        return r;
    }

    /// Fields of element e at the points of `rule`.
    std::vector<FieldValues> evaluate(const State& s, int e, const QuadratureRule& rule) const
    {
        ElementGeometry geo(mesh_, e);
        const auto dofs = element_dofs(e);
        std::vector<FieldValues> out;
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Vec2& xh = rule.points[q];
            Mat2 g = geo.jacobian(xh);
            auto [nv, dn] = shape_functions(xh, g);
            FieldValues fv;
            fv.x = geo.map(xh);
            fv.w = rule.weights[q] * g.determinant();
            fv.u = Vec2::Zero();
            fv.F = Mat2::Identity();
            for (int a = 0; a < nv.size(); ++a)
                for (int comp = 0; comp < 2; ++comp) {
                    double c = s.x(dofs[2 * a + comp]);
                    fv.u(comp) += c * nv(a);
                    fv.F.row(comp) += c * dn.row(a);
                }
            auto lam = ElementGeometry::barycentric(xh);
            fv.p = 0.0;
            for (int i = 0; i < 3; ++i)
                fv.p += lam[i] * s.x(dofs[2 * nv.size() + i]);
            fv.P = piola_stress({fv.F, fv.p}, opt_.material);
            out.push_back(fv);
        }
        return out;
    }

private:
    struct ElementData {
        std::vector<int> nodes;
        std::vector<double> w;
        std::vector<MatX> dn;  // nodes x 2 physical gradients
        std::vector<VecX> np;  // 3 pressure shape values
    };

    /// Values and physical gradients of the displacement shape functions.
    std::pair<VecX, MatX> shape_functions(const Vec2& xh, const Mat2& g) const
    {
        const auto& lb = reference_basis({SpaceKind::LagrangeH1, opt_.order == 2 ? 2 : 1});
        MatX v = lb.poly.values(xh);
        auto [gx, gy] = lb.poly.derivatives(xh);
        int n = static_cast<int>(v.rows()) + (opt_.order == 1 ? 1 : 0);
        VecX val(n);
        MatX ref(n, 2);
        val.head(v.rows()) = v.col(0);
        ref.topRows(v.rows()) << gx.col(0), gy.col(0);
        if (opt_.order == 1) {
            const auto& bb = reference_basis({SpaceKind::L2VectorBubble, 1});
            auto [bx, by] = bb.poly.derivatives(xh);
            val(n - 1) = bb.poly.values(xh)(0, 0);
            ref(n - 1, 0) = bx(0, 0);
            ref(n - 1, 1) = by(0, 0);
        }
        MatX phys = ref * g.inverse();
        return {val, phys};
    }

    std::vector<int> element_dofs(int e) const
    {
        const auto& nodes = elems_[e].nodes;
        std::vector<int> d;
        for (int a : nodes) {
            d.push_back(2 * a);
            d.push_back(2 * a + 1);
        }
        for (int v : mesh_.triangles[e])
            d.push_back(n_u_ + v);
        return d;
    }

    Mat2 gradient(const State& s, int e, std::size_t q) const
    {
        const auto& ed = elems_[e];
        Mat2 f = Mat2::Identity();
        for (std::size_t a = 0; a < ed.nodes.size(); ++a)
            for (int comp = 0; comp < 2; ++comp)
                f.row(comp) += s.x(2 * ed.nodes[a] + comp) * ed.dn[q].row(a);
        return f;
    }

    void build_element_data()
    {
        const int nv = static_cast<int>(mesh_.vertices.size());
        elems_.resize(mesh_.num_elements());
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            auto& ed = elems_[e];
            for (int v : mesh_.triangles[e])
                ed.nodes.push_back(v);
            if (opt_.order == 2)
                for (int le = 0; le < 3; ++le)
                    ed.nodes.push_back(nv + mesh_.element_facets[e][le]);
            else
                ed.nodes.push_back(nv + e);
            ElementGeometry geo(mesh_, e);
            auto rule = triangle_rule(2 * opt_.order + 2 + (mesh_.is_curved(e) ? 2 : 0));
            for (std::size_t q = 0; q < rule.size(); ++q) {
                const Vec2& xh = rule.points[q];
                Mat2 g = geo.jacobian(xh);
                double j = g.determinant();
                if (!(j > 0.0))
                    throw DegenerateGeometry("non-positive Jacobian determinant in element " + std::to_string(e));
                auto [val, dn] = shape_functions(xh, g);
                auto lam = ElementGeometry::barycentric(xh);
                ed.w.push_back(rule.weights[q] * j);
                ed.dn.push_back(dn);
                ed.np.push_back(Eigen::Vector3d(lam[0], lam[1], lam[2]));
            }
        }
    }

    /// Physical position of node `node` of element e (local node index).
    Vec2 node_position(int e, int local) const
    {
        ElementGeometry geo(mesh_, e);
        if (local < 3)
            return mesh_.vertices[mesh_.triangles[e][local]];
        if (opt_.order == 2)
            return geo.map(ElementGeometry::edge_point(local - 3, 0.5));
        return geo.map(Vec2(1.0 / 3, 1.0 / 3));
    }

    void build_essential()
    {
        essential_.assign(n_, 0);
        essential_value_ = VecX::Zero(n_);
        for (int f = 0; f < mesh_.num_facets(); ++f) {
            const Facet& fc = mesh_.facets[f];
            if (!fc.is_boundary())
                continue;
            bool dn = bc_.normal_dirichlet.count(fc.marker) > 0;
            bool dt = bc_.tangential_dirichlet.count(fc.marker) > 0;
            if (!dn && !dt)
                continue;
            std::vector<int> comps;
            if (dn && dt) {
                comps = {0, 1};
            } else {
                Vec2 n = facet_frame(mesh_, f).normal;
                Vec2 dir = dn ? n : rot_ccw(n);
                if (std::abs(std::abs(dir.x()) - 1.0) < 1e-12)
                    comps = {0};
                else if (std::abs(std::abs(dir.y()) - 1.0) < 1e-12)
                    comps = {1};
                else
                    throw InvalidInput("component-wise constraints need an axis-aligned boundary '" + fc.marker + "'");
            }
            const int e = fc.elements[0], le = fc.local_edge[0];
            std::vector<int> locals{kLocalEdges[le][0], kLocalEdges[le][1]};
            if (opt_.order == 2)
                locals.push_back(3 + le);
            for (int loc : locals) {
                int node = elems_[e].nodes[loc];
                Vec2 value = bc_.displacement ? bc_.displacement(node_position(e, loc)) : Vec2::Zero();
                for (int comp : comps) {
                    essential_[2 * node + comp] = 1;
                    essential_value_(2 * node + comp) = value(comp);
                }
            }
        }
    }

    void build_loads()
    {
        load_ = VecX::Zero(n_);
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            ElementGeometry geo(mesh_, e);
            const auto dofs = element_dofs(e);
            const int nu = static_cast<int>(elems_[e].nodes.size());
            if (bc_.body_force) {
                auto rule = triangle_rule(2 * opt_.order + 2 + (mesh_.is_curved(e) ? 2 : 0));
                for (std::size_t q = 0; q < rule.size(); ++q) {
                    Mat2 g = geo.jacobian(rule.points[q]);
                    auto [val, dn] = shape_functions(rule.points[q], g);
                    Vec2 b = bc_.body_force(geo.map(rule.points[q]));
                    double w = rule.weights[q] * g.determinant();
                    for (int a = 0; a < nu; ++a)
                        for (int comp = 0; comp < 2; ++comp)
                            load_(dofs[2 * a + comp]) += w * b(comp) * val(a);
                }
            }
            for (int le = 0; le < 3; ++le) {
                const Facet& f = mesh_.facets[mesh_.element_facets[e][le]];
                if (!f.is_boundary())
                    continue;
                auto it = bc_.traction.find(f.marker);
                if (it == bc_.traction.end())
                    continue;
                auto rule = edge_rule(2 * opt_.order + 3);
                for (std::size_t q = 0; q < rule.size(); ++q) {
                    Vec2 xh = ElementGeometry::edge_point(le, rule.points[q].x());
                    Mat2 g = geo.jacobian(xh);
                    auto [val, dn] = shape_functions(xh, g);
                    double da = (g * ElementGeometry::edge_tangent(le)).norm() * rule.weights[q];
                    Vec2 t = it->second(geo.map(xh));
                    for (int a = 0; a < nu; ++a)
                        for (int comp = 0; comp < 2; ++comp)
                            load_(dofs[2 * a + comp]) += da * t(comp) * val(a);
                }
            }
        }
    }

    Triangulation mesh_;
    StandardOptions opt_;
    BoundaryConditions bc_;
    int n_nodes_ = 0, n_u_ = 0, n_ = 0;
    std::vector<ElementData> elems_;
    std::vector<char> essential_;
    VecX essential_value_;
    VecX load_;
    VecX r_;
    SparseMatrix k_;
};

} // namespace ndtns
