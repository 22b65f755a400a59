#pragma once

#include "ndtns/common.hpp"
#include "ndtns/dofmap.hpp"
#include "ndtns/elements.hpp"
#include "ndtns/geometry.hpp"
#include "ndtns/material.hpp"
#include "ndtns/quadrature.hpp"

#include <Eigen/LU>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace ndtns {

inline int element_quadrature_degree(int k, bool curved) { return 2 * k + 2 + (curved ? 2 : 0); }
inline int facet_quadrature_degree(int k, bool curved) { return 2 * k + 2 + (curved ? 2 : 0); }

/// Physical basis values of the NDTNS spaces at one volume quadrature point.
struct VolumePoint {
    Vec2 x;
    double w = 0.0;  // reference weight times det G
    MatX u;          // n_rt x 2
    MatX grad_u;     // n_rt x 4
    VecX div_u;      // n_rt
    MatX F;          // n_F x 4
    MatX P;          // n_P x 4
    VecX p;          // n_p
};

/// Physical traces on one facet quadrature point of local edge `edge`.
struct FacetPoint {
    int edge = 0;
    double s = 0.0;
    double w = 0.0;   // reference edge weight
    Vec2 x;
    Vec2 tau;         // unnormalized tangent, |tau| ds = dA
    VecX u_tau;       // RT functions: u . tau
    VecX u_nu;        // RT functions: u . nu
    VecX p_tn;        // stress functions: tau^T P nu
    VecX lambda;      // L_j(s)
};

/// Evaluates all element spaces at quadrature points in physical form.
inline std::vector<VolumePoint> volume_points(const Triangulation& mesh, int e, const LocalLayout& l,
                                              const QuadratureRule& rule)
{
    ElementGeometry geo(mesh, e);
    const auto& rt = reference_basis({SpaceKind::RT, l.k});
    const auto& fb = reference_basis({SpaceKind::FGrad, l.k, l.reduced});
    const auto& pb = reference_basis({SpaceKind::SigmaDC, l.k, l.reduced});
    const auto& qb = reference_basis({SpaceKind::L2Scalar, l.k});
    std::array<Mat2, 2> dg{geo.jacobian_derivative(0), geo.jacobian_derivative(1)};
    std::vector<VolumePoint> out(rule.size());
    for (std::size_t q = 0; q < rule.size(); ++q) {
        const Vec2& xh = rule.points[q];
        Mat2 g = geo.jacobian(xh);
        double j = g.determinant();
        if (!(j > 0.0))
            throw DegenerateGeometry("non-positive Jacobian determinant in element " + std::to_string(e));
        VolumePoint& vp = out[q];
        vp.x = geo.map(xh);
        vp.w = rule.weights[q] * j;

        MatX v = rt.poly.values(xh);
        auto [gx, gy] = rt.poly.derivatives(xh);
        const int nrt = rt.size();
        vp.u.resize(nrt, 2);
        vp.grad_u.resize(nrt, 4);
        vp.div_u.resize(nrt);
        for (int i = 0; i < nrt; ++i) {
            Vec2 uh = v.row(i).transpose();
            Mat2 gr;
            gr << gx(i, 0), gy(i, 0), gx(i, 1), gy(i, 1);
            vp.u.row(i) = push_rt(g, j, uh).transpose();
            vp.grad_u.row(i) = flatten(push_rt_grad(g, j, dg, uh, gr)).transpose();
            vp.div_u(i) = (gx(i, 0) + gy(i, 1)) / j;
        }
        MatX fv = fb.poly.values(xh);
        vp.F.resize(fv.rows(), 4);
        for (int i = 0; i < fv.rows(); ++i)
            vp.F.row(i) = flatten(push_fgrad(g, j, unflatten(fv.row(i).transpose()))).transpose();
        MatX pv = pb.poly.values(xh);
        vp.P.resize(pv.rows(), 4);
        for (int i = 0; i < pv.rows(); ++i)
            vp.P.row(i) = flatten(push_sigma(g, j, unflatten(pv.row(i).transpose()))).transpose();
        vp.p = qb.poly.values(xh).col(0);
    }
    return out;
}

inline std::vector<VolumePoint> volume_points(const Triangulation& mesh, int e, const LocalLayout& l, int degree)
{
    return volume_points(mesh, e, l, triangle_rule(degree));
}

inline std::vector<FacetPoint> facet_points(const Triangulation& mesh, int e, const LocalLayout& l, int degree)
{
    ElementGeometry geo(mesh, e);
    const auto& rt = reference_basis({SpaceKind::RT, l.k});
    const auto& pb = reference_basis({SpaceKind::SigmaDC, l.k, l.reduced});
    auto rule = edge_rule(degree);
    std::vector<FacetPoint> out;
    for (int le = 0; le < 3; ++le) {
        Vec2 th = ElementGeometry::edge_tangent(le);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            FacetPoint fp;
            fp.edge = le;
            fp.s = rule.points[q].x();
            fp.w = rule.weights[q];
            Vec2 xh = ElementGeometry::edge_point(le, fp.s);
            Mat2 g = geo.jacobian(xh);
            double j = g.determinant();
            fp.x = geo.map(xh);
            fp.tau = g * th;
            Vec2 nu = rot_cw(fp.tau);
            MatX v = rt.poly.values(xh);
            fp.u_tau.resize(v.rows());
            fp.u_nu.resize(v.rows());
            for (int i = 0; i < v.rows(); ++i) {
                Vec2 u = push_rt(g, j, v.row(i).transpose());
                fp.u_tau(i) = u.dot(fp.tau);
                fp.u_nu(i) = u.dot(nu);
            }
            MatX pv = pb.poly.values(xh);
            fp.p_tn.resize(pv.rows());
            for (int i = 0; i < pv.rows(); ++i)
                fp.p_tn(i) = fp.tau.dot(push_sigma(g, j, unflatten(pv.row(i).transpose())) * nu);
            fp.lambda.resize(l.k + 1);
            for (int jj = 0; jj <= l.k; ++jj)
                fp.lambda(jj) = legendre01(jj, fp.s);
            out.push_back(std::move(fp));
        }
    }
    return out;
}

/// State-independent element data: the Hessian of the bilinear part of the Lagrangian, the
/// linear map from local coefficients to F - I at every quadrature point, and the loads.
struct ElementOperators {
    MatX k_lin;
    MatX mass_p;
    std::vector<int> f_cols;
    std::vector<MatX> bf;      // 4 x f_cols.size()
    std::vector<VecX> bp;      // n_p
    std::vector<double> w;
    VecX load;                 // external load vector at full load
    double area = 0.0;
};

/// Row map from local coefficients to flattened F - I at a volume point (full local width).
inline MatX f_map(const VolumePoint& vp, const LocalLayout& l)
{
    MatX b = MatX::Zero(4, l.total);
    b.middleCols(l.F, l.n_F) = vp.F.transpose();
    if (l.reduced) {
        for (int i = 0; i < l.n_rt(); ++i) {
            int c = l.rt_index(i);
            b(0, c) += 0.5 * vp.div_u(i);
            b(3, c) += 0.5 * vp.div_u(i);
        }
    }
    return b;
}

inline MatX grad_u_map(const VolumePoint& vp, const LocalLayout& l)
{
    MatX b = MatX::Zero(4, l.total);
    for (int i = 0; i < l.n_rt(); ++i)
        b.col(l.rt_index(i)) = vp.grad_u.row(i).transpose();
    return b;
}

inline MatX stress_map(const VolumePoint& vp, const LocalLayout& l)
{
    MatX b = MatX::Zero(4, l.total);
    b.middleCols(l.P, l.n_P) = vp.P.transpose();
    return b;
}

/// Row of (u - u~) . tau on a facet point, over the full local width.
inline VecX tangential_mismatch_row(const FacetPoint& fp, const LocalLayout& l)
{
    VecX d = VecX::Zero(l.total);
    for (int i = 0; i < l.n_rt(); ++i)
        d(l.rt_index(i)) = fp.u_tau(i);
    for (int j = 0; j <= l.k; ++j)
        d(l.lam + fp.edge * (l.k + 1) + j) -= fp.lambda(j);
    return d;
}

inline VecX stress_tn_row(const FacetPoint& fp, const LocalLayout& l)
{
    VecX a = VecX::Zero(l.total);
    a.segment(l.P, l.n_P) = fp.p_tn;
    return a;
}

/// Builds the element operators. `tau` holds the stabilization parameter of each local edge.
inline ElementOperators build_element_operators(const Triangulation& mesh, int e, const LocalLayout& l,
                                                const std::array<double, 3>& tau)
{
    const bool curved = mesh.is_curved(e);
    auto vps = volume_points(mesh, e, l, element_quadrature_degree(l.k, curved));
    auto fps = facet_points(mesh, e, l, facet_quadrature_degree(l.k, curved));

    ElementOperators op;
    op.k_lin = MatX::Zero(l.total, l.total);
    op.mass_p = MatX::Zero(l.n_p, l.n_p);
    op.load = VecX::Zero(l.total);
    if (l.reduced)
        for (int i = 0; i < l.n_rt(); ++i)
            op.f_cols.push_back(l.rt_index(i));
    for (int i = 0; i < l.n_F; ++i)
        op.f_cols.push_back(l.F + i);

    for (const auto& vp : vps) {
        MatX bf = f_map(vp, l);
        MatX lift = bf - grad_u_map(vp, l);
        MatX bs = stress_map(vp, l);
        MatX cross = lift.transpose() * bs;
        op.k_lin -= vp.w * (cross + cross.transpose());
        MatX bfc(4, op.f_cols.size());
        for (std::size_t c = 0; c < op.f_cols.size(); ++c)
            bfc.col(c) = bf.col(op.f_cols[c]);
        op.bf.push_back(bfc);
        op.bp.push_back(vp.p);
        op.w.push_back(vp.w);
        op.mass_p += vp.w * vp.p * vp.p.transpose();
        op.area += vp.w;
    }
    for (const auto& fp : fps) {
        VecX d = tangential_mismatch_row(fp, l);
        VecX a = stress_tn_row(fp, l);
        double t2 = fp.tau.squaredNorm(), tn = std::sqrt(t2);
        MatX cross = a * d.transpose();
        op.k_lin -= fp.w / t2 * (cross + cross.transpose());
        if (tau[fp.edge] != 0.0)
            op.k_lin += fp.w * tau[fp.edge] / tn * d * d.transpose();
    }
    return op;
}

/// Adds body force and boundary traction work to the element load vector (full load).
inline void add_element_loads(ElementOperators& op, const Triangulation& mesh, int e, const LocalLayout& l,
                              const BoundaryConditions& bc)
{
    const bool curved = mesh.is_curved(e);
    if (bc.body_force) {
        for (const auto& vp : volume_points(mesh, e, l, element_quadrature_degree(l.k, curved))) {
            Vec2 b = bc.body_force(vp.x);
            for (int i = 0; i < l.n_rt(); ++i)
                op.load(l.rt_index(i)) += vp.w * vp.u.row(i).dot(b);
        }
    }
    for (int le = 0; le < 3; ++le) {
        const Facet& f = mesh.facets[mesh.element_facets[e][le]];
        if (!f.is_boundary())
            continue;
        auto it = bc.traction.find(f.marker);
        if (it == bc.traction.end())
            continue;
        bool normal_free = !bc.normal_dirichlet.count(f.marker);
        bool tangent_free = !bc.tangential_dirichlet.count(f.marker);
        ElementGeometry geo(mesh, e);
        auto rule = edge_rule(facet_quadrature_degree(l.k, curved) + 2);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            double s = rule.points[q].x();
            Vec2 xh = ElementGeometry::edge_point(le, s);
            Vec2 tau = geo.jacobian(xh) * ElementGeometry::edge_tangent(le);
            Vec2 nu = rot_cw(tau);
            Vec2 t = it->second(geo.map(xh));
            for (int j = 0; j <= l.k; ++j) {
                double lj = legendre01(j, s) * rule.weights[q] / tau.norm();
                if (normal_free)
                    op.load(l.rt_facet + le * (l.k + 1) + j) += t.dot(nu) * lj;
                if (tangent_free)
                    op.load(l.lam + le * (l.k + 1) + j) += t.dot(tau) * lj;
            }
        }
    }
}

struct ElementSystem {
    VecX residual;
    MatX tangent;
};

struct TangentOptions {
    bool use_shift = true;
    double eps_p = 0.0;
};

/// Residual (and optionally tangent) of the element Lagrangian at local coefficients c.
/// The pressure regularization and the eigenvalue shift enter the tangent only.
inline ElementSystem evaluate_element(const ElementOperators& op, const LocalLayout& l, const VecX& c,
                                      const MaterialParams& m, double xi, bool want_tangent,
                                      const TangentOptions& topt = {}, int element = -1)
{
    ElementSystem sys;
    sys.residual = op.k_lin * c - xi * op.load;
    if (want_tangent)
        sys.tangent = op.k_lin;
    const int nf = static_cast<int>(op.f_cols.size());
    VecX cf(nf);
    for (int i = 0; i < nf; ++i)
        cf(i) = c(op.f_cols[i]);
    VecX cp = c.segment(l.p, l.n_p);
    VecX rf = VecX::Zero(nf), rp = VecX::Zero(l.n_p);
    MatX kff, kfp, kpp;
    if (want_tangent) {
        kff = MatX::Zero(nf, nf);
        kfp = MatX::Zero(nf, l.n_p);
        kpp = MatX::Zero(l.n_p, l.n_p);
    }
    const Vec4 id(1, 0, 0, 1);
    for (std::size_t q = 0; q < op.w.size(); ++q) {
        Vec4 fv = op.bf[q] * cf + id;
        Mat2 f = unflatten(fv);
        double p = op.bp[q].dot(cp);
        ConstraintValues cv;
        try {
            cv = constraint(f.determinant(), m.kind);
        } catch (const ConstitutiveDomainError& ex) {
            throw ConstitutiveDomainError(ex.what(), element);
        }
        Vec4 cofv = flatten(cof(f));
        Vec4 stress = m.mu * fv - p * cv.dc * cofv;
        double w = op.w[q];
        rf += w * op.bf[q].transpose() * stress;
        rp -= w * cv.c * op.bp[q];
        if (m.kappa > 0.0)
            rp -= w * p / m.kappa * op.bp[q];
        if (want_tangent) {
            MaterialPoint pt{f, p};
            Tangent4 a = material_tangent(pt, m);
            if (topt.use_shift)
                a = shifted_tangent(a, m).a;
            kff += w * op.bf[q].transpose() * a * op.bf[q];
            kfp -= w * (op.bf[q].transpose() * (cv.dc * cofv)) * op.bp[q].transpose();
            if (m.kappa > 0.0)
                kpp -= w / m.kappa * op.bp[q] * op.bp[q].transpose();
        }
    }
    for (int i = 0; i < nf; ++i)
        sys.residual(op.f_cols[i]) += rf(i);
    sys.residual.segment(l.p, l.n_p) += rp;
    if (want_tangent) {
        for (int i = 0; i < nf; ++i) {
            for (int j = 0; j < nf; ++j)
                sys.tangent(op.f_cols[i], op.f_cols[j]) += kff(i, j);
            for (int j = 0; j < l.n_p; ++j) {
                sys.tangent(op.f_cols[i], l.p + j) += kfp(i, j);
                sys.tangent(l.p + j, op.f_cols[i]) += kfp(i, j);
            }
        }
        sys.tangent.block(l.p, l.p, l.n_p, l.n_p) += kpp - topt.eps_p * op.mass_p;
    }
    return sys;
}

inline VecX element_residual(const ElementOperators& op, const LocalLayout& l, const VecX& c, const MaterialParams& m,
                             double xi, int element = -1)
{
    return evaluate_element(op, l, c, m, xi, false, {}, element).residual;
}

inline ElementSystem element_tangent(const ElementOperators& op, const LocalLayout& l, const VecX& c,
                                     const MaterialParams& m, double xi, const TangentOptions& topt, int element = -1)
{
    return evaluate_element(op, l, c, m, xi, true, topt, element);
}

/// Coefficients of the constant pressure `value`.
inline VecX constant_pressure(const ElementOperators& op, double value)
{
    VecX rhs = VecX::Zero(op.mass_p.rows());
    for (std::size_t q = 0; q < op.w.size(); ++q)
        rhs += op.w[q] * value * op.bp[q];
    return op.mass_p.ldlt().solve(rhs);
}

/// Element-mean determinant of F at local coefficients c, with min/max over quadrature points.
struct JacobianStats {
    double mean = 1.0, min = 1.0, max = 1.0;
};

inline JacobianStats element_jacobian(const ElementOperators& op, const VecX& c)
{
    const int nf = static_cast<int>(op.f_cols.size());
    VecX cf(nf);
    for (int i = 0; i < nf; ++i)
        cf(i) = c(op.f_cols[i]);
    JacobianStats s{0.0, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (std::size_t q = 0; q < op.w.size(); ++q) {
        double j = unflatten(op.bf[q] * cf + Vec4(1, 0, 0, 1)).determinant();
        s.mean += op.w[q] * j;
        s.min = std::min(s.min, j);
        s.max = std::max(s.max, j);
    }
    s.mean /= op.area;
    return s;
}

/// Schur complement of the internal block, with the data needed for back-substitution.
struct CondensedSystem {
    MatX s;
    VecX rhs;
    Eigen::PartialPivLU<MatX> kii;
    MatX kic;
    VecX bi;
};

/// Eliminates entries [n_coupling, n) from K x = b.
inline CondensedSystem static_condense(const MatX& k, const VecX& b, int n_coupling, int element = -1)
{
    const int n = static_cast<int>(k.rows()), ni = n - n_coupling;
    CondensedSystem c;
    c.kic = k.bottomLeftCorner(ni, n_coupling);
    c.bi = b.tail(ni);
    if (ni == 0) {
        c.s = k;
        c.rhs = b;
        return c;
    }
    MatX kii = k.bottomRightCorner(ni, ni);
    c.kii.compute(kii);
    const auto pivots = c.kii.matrixLU().diagonal();
    if (!pivots.allFinite() || !(pivots.cwiseAbs().minCoeff() > 0.0))
        throw CondensationFailure(element);
    MatX x = c.kii.solve(c.kic);
    VecX y = c.kii.solve(c.bi);
    MatX kci = k.topRightCorner(n_coupling, ni);
    c.s = k.topLeftCorner(n_coupling, n_coupling) - kci * x;
    c.rhs = b.head(n_coupling) - kci * y;
    return c;
}

inline VecX recover_internal(const CondensedSystem& c, const VecX& coupling_increment)
{
    if (c.bi.size() == 0)
        return VecX();
    return c.kii.solve(c.bi - c.kic * coupling_increment);
}

/// Both sides of the discrete integration-by-parts identity on one affine element:
/// int Div P . u - int_dT P_nn u_n  ==  -int P : Grad u + int_dT P_tn . u_t.
struct DualityPairing {
    double element_div = 0.0, facet_nn = 0.0, element_grad = 0.0, facet_tn = 0.0;
    double divergence_form() const { return element_div - facet_nn; }
    double gradient_form() const { return -element_grad + facet_tn; }
};

/// `p_coeffs` use the full stress basis (k), `u_coeffs` the RT basis (k).
inline DualityPairing duality_pairing_element(const Triangulation& mesh, int e, int k, const VecX& p_coeffs,
                                              const VecX& u_coeffs)
{
    if (mesh.is_curved(e))
        throw InvalidInput("duality pairing check is implemented for affine elements");
    ElementGeometry geo(mesh, e);
    const auto& rt = reference_basis({SpaceKind::RT, k});
    const auto& sb = reference_basis({SpaceKind::SigmaTN, k, false});
    Mat2 g = geo.jacobian(Vec2(1.0 / 3, 1.0 / 3)), gi = g.inverse();
    double j = g.determinant();
    std::array<Mat2, 2> dg{Mat2::Zero(), Mat2::Zero()};
    auto eval_p = [&](const Vec2& xh) { return push_sigma(g, j, unflatten(sb.poly.values(xh).transpose() * p_coeffs)); };
    auto eval_u = [&](const Vec2& xh) { return push_rt(g, j, rt.poly.values(xh).transpose() * u_coeffs); };

    DualityPairing d;
    auto tr = triangle_rule(3 * k + 2);
    for (std::size_t q = 0; q < tr.size(); ++q) {
        const Vec2& xh = tr.points[q];
        double w = tr.weights[q] * j;
        auto [gx, gy] = sb.poly.derivatives(xh);
        std::array<Mat2, 2> dp{push_sigma(g, j, unflatten(gx.transpose() * p_coeffs)),
                               push_sigma(g, j, unflatten(gy.transpose() * p_coeffs))};
        Vec2 div = Vec2::Zero();
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int l = 0; l < 2; ++l)
                    div(a) += dp[l](a, b) * gi(l, b);
        auto [ux, uy] = rt.poly.derivatives(xh);
        Mat2 gr;
        gr.row(0) << ux.col(0).dot(u_coeffs), uy.col(0).dot(u_coeffs);
        gr.row(1) << ux.col(1).dot(u_coeffs), uy.col(1).dot(u_coeffs);
        Vec2 uh = rt.poly.values(xh).transpose() * u_coeffs;
        Mat2 grad = push_rt_grad(g, j, dg, uh, gr);
        Vec2 u = eval_u(xh);
        d.element_div += w * div.dot(u);
        d.element_grad += w * (eval_p(xh).cwiseProduct(grad)).sum();
    }
    auto er = edge_rule(3 * k + 2);
    for (int le = 0; le < 3; ++le)
        for (std::size_t q = 0; q < er.size(); ++q) {
            Vec2 xh = ElementGeometry::edge_point(le, er.points[q].x());
            Vec2 tau = g * ElementGeometry::edge_tangent(le);
            double len = tau.norm();
            Vec2 t = tau / len, n = rot_cw(t);
            Mat2 p = eval_p(xh);
            Vec2 u = eval_u(xh);
            double w = er.weights[q] * len;
            d.facet_nn += w * (n.dot(p * n)) * u.dot(n);
            d.facet_tn += w * (t.dot(p * n)) * u.dot(t);
        }
    return d;
}

} // namespace ndtns
