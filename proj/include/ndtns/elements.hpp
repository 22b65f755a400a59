#pragma once

#include "ndtns/common.hpp"
#include "ndtns/geometry.hpp"
#include "ndtns/polynomials.hpp"
#include "ndtns/quadrature.hpp"

#include <Eigen/SVD>

#include <map>
#include <mutex>
#include <vector>

namespace ndtns {

enum class SpaceKind { RT, SigmaTN, SigmaDC, FGrad, LambdaFacet, L2Scalar, LagrangeH1, L2VectorBubble };

struct SpaceSpec {
    SpaceKind kind = SpaceKind::RT;
    int order = 2;
    bool deviatoric_only = false;
};

enum class DofKind { Facet, Interior, Spherical };

/// Reference-element basis with per-function classification.
///
/// Facet functions come first, ordered by local edge and then Legendre moment index.
struct RefBasis {
    PolyBasis poly;
    int order = 0;
    std::vector<DofKind> kind;
    std::vector<int> edge;        // local edge of facet functions, -1 otherwise
    std::vector<int> moment;      // Legendre index of facet functions, -1 otherwise
    std::vector<bool> deviatoric;

    int size() const { return poly.size(); }
    int count(DofKind k) const
    {
        int n = 0;
        for (auto x : kind)
            n += (x == k);
        return n;
    }
};

inline void check_order(int k)
{
    if (k < 1 || k > 2)
        throw InvalidInput("unsupported polynomial order " + std::to_string(k) + " (supported: 1, 2)");
}

namespace detail {

/// Unnormalized outward normal of reference edge i (tangent rotated clockwise).
inline Vec2 ref_edge_normal(int i) { return rot_cw(ElementGeometry::edge_tangent(i)); }

/// Dual basis of span(gens) for facet moments int_e (w_e . v) L_j ds, j <= k, completed by
/// L2 moments against an orthonormal basis of the facet-free subspace.
inline RefBasis make_dual_basis(int ncomp, int degree, const MatX& gens, int k,
                                const std::vector<VecX>& facet_weights)
{
    const int ngen = static_cast<int>(gens.rows());
    const int nm = num_monomials(degree);
    PolyBasis g{ncomp, degree, gens};

    const int nfacet = facet_weights.empty() ? 0 : 3 * (k + 1);
    MatX e(nfacet, ngen);
    if (nfacet) {
        auto er = edge_rule(degree + k + 1);
        e.setZero();
        for (int i = 0; i < 3; ++i)
            for (std::size_t q = 0; q < er.size(); ++q) {
                double s = er.points[q].x();
                MatX v = g.values(ElementGeometry::edge_point(i, s));
                VecX trace = v * facet_weights[i];
                for (int j = 0; j <= k; ++j)
                    e.row(i * (k + 1) + j) += er.weights[q] * legendre01(j, s) * trace.transpose();
            }
    }

    MatX kernel;
    if (nfacet) {
        Eigen::JacobiSVD<MatX> svd(e, Eigen::ComputeFullV);
        kernel = svd.matrixV().rightCols(ngen - nfacet);
    } else {
        kernel = MatX::Identity(ngen, ngen);
    }
    MatX bubbles = kernel.transpose() * gens;
    PolyBasis b{ncomp, degree, bubbles};

    auto tr = triangle_rule(2 * degree);
    MatX bm = MatX::Zero(kernel.cols(), ngen);
    for (std::size_t q = 0; q < tr.size(); ++q) {
        MatX vb = b.values(tr.points[q]);
        MatX vg = g.values(tr.points[q]);
        bm += tr.weights[q] * vb * vg.transpose();
    }

    MatX d(ngen, ngen);
    if (nfacet)
        d.topRows(nfacet) = e;
    d.bottomRows(ngen - nfacet) = bm;
    Eigen::FullPivLU<MatX> lu(d);
    if (!lu.isInvertible())
        throw Error("reference DoF matrix is singular");
    MatX c = lu.inverse();

    RefBasis r;
    r.order = k;
    r.poly = PolyBasis{ncomp, degree, c.transpose() * gens};
    (void)nm;
    for (int i = 0; i < ngen; ++i) {
        bool facet = i < nfacet;
        r.kind.push_back(facet ? DofKind::Facet : DofKind::Interior);
        r.edge.push_back(facet ? i / (k + 1) : -1);
        r.moment.push_back(facet ? i % (k + 1) : -1);
        r.deviatoric.push_back(false);
    }
    return r;
}

/// Embeds scalar monomial coefficients of degree `from` into a basis of degree `to`.
inline VecX lift_coeffs(const VecX& c, int from, int to)
{
    VecX out = VecX::Zero(num_monomials(to));
    out.head(num_monomials(from)) = c;
    return out;
}

inline int monomial_index(int a, int b)
{
    int d = a + b;
    return num_monomials(d - 1) + (d - a);
}

inline RefBasis build_rt(int k)
{
    const int deg = k + 1, nm = num_monomials(deg);
    const int np = num_monomials(k);
    MatX gens = MatX::Zero(2 * np + (k + 1), 2 * nm);
    for (int m = 0; m < np; ++m) {
        gens(m, m) = 1.0;
        gens(np + m, nm + m) = 1.0;
    }
    for (int a = k; a >= 0; --a) {
        int row = 2 * np + (k - a), b = k - a;
        gens(row, monomial_index(a + 1, b)) = 1.0;
        gens(row, nm + monomial_index(a, b + 1)) = 1.0;
    }
    std::vector<VecX> w;
    for (int i = 0; i < 3; ++i)
        w.push_back(ref_edge_normal(i));
    return make_dual_basis(2, deg, gens, k, w);
}

inline const std::array<Mat2, 3>& deviatoric_generators()
{
    static const std::array<Mat2, 3> g = [] {
        std::array<Mat2, 3> a;
        a[0] << 1, 0, 0, -1;
        a[1] << 0, 1, 0, 0;
        a[2] << 0, 0, 1, 0;
        return a;
    }();
    return g;
}

inline RefBasis build_l2(int k)
{
    const int nm = num_monomials(k);
    return make_dual_basis(1, k, MatX::Identity(nm, nm), k, {});
}

inline RefBasis build_sigma(int k, bool deviatoric_only)
{
    const int nm = num_monomials(k);
    MatX gens = MatX::Zero(3 * nm, 4 * nm);
    const auto& dg = deviatoric_generators();
    for (int a = 0; a < 3; ++a) {
        Vec4 f = flatten(dg[a]);
        for (int m = 0; m < nm; ++m)
            for (int c = 0; c < 4; ++c)
                gens(a * nm + m, c * nm + m) = f(c);
    }
    std::vector<VecX> w;
    for (int i = 0; i < 3; ++i) {
        Vec2 t = ElementGeometry::edge_tangent(i), n = ref_edge_normal(i);
        VecX wi(4);
        wi << t(0) * n(0), t(0) * n(1), t(1) * n(0), t(1) * n(1);
        w.push_back(wi);
    }
    RefBasis r = make_dual_basis(4, k, gens, k, w);
    for (int i = 0; i < r.size(); ++i)
        r.deviatoric[i] = true;
    if (deviatoric_only)
        return r;

    RefBasis l2 = build_l2(k);
    const int ndev = r.size();
    MatX all(ndev + nm, 4 * nm);
    all.topRows(ndev) = r.poly.coeffs;
    all.bottomRows(nm).setZero();
    all.bottomRows(nm).middleCols(0, nm) = l2.poly.coeffs;
    all.bottomRows(nm).middleCols(3 * nm, nm) = l2.poly.coeffs;
    r.poly.coeffs = all;
    for (int i = 0; i < nm; ++i) {
        r.kind.push_back(DofKind::Spherical);
        r.edge.push_back(-1);
        r.moment.push_back(-1);
        r.deviatoric.push_back(false);
    }
    return r;
}

/// Transposes every matrix-valued function (component order 11,12,21,22).
inline RefBasis transpose_basis(RefBasis r)
{
    const int nm = r.poly.nmono();
    MatX c = r.poly.coeffs;
    r.poly.coeffs.middleCols(nm, nm) = c.middleCols(2 * nm, nm);
    r.poly.coeffs.middleCols(2 * nm, nm) = c.middleCols(nm, nm);
    return r;
}

inline RefBasis build_lagrange(int k)
{
    std::vector<Vec2> nodes{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
    if (k == 2)
        for (auto [a, b] : kLocalEdges)
            nodes.push_back(0.5 * (nodes[a] + nodes[b]));
    const int nm = num_monomials(k);
    MatX d(nm, nm);
    for (int i = 0; i < nm; ++i)
        d.row(i) = eval_monomials(k, nodes[i]).v.transpose();
    RefBasis r;
    r.order = k;
    r.poly = PolyBasis{1, k, d.inverse().transpose()};
    for (int i = 0; i < nm; ++i) {
        r.kind.push_back(i < 3 ? DofKind::Interior : DofKind::Facet);
        r.edge.push_back(i < 3 ? -1 : i - 3);
        r.moment.push_back(-1);
        r.deviatoric.push_back(false);
    }
    return r;
}

inline RefBasis build_bubble()
{
    // lambda0 lambda1 lambda2 = xy - x^2 y - x y^2
    RefBasis r;
    r.order = 3;
    r.poly = PolyBasis{1, 3, MatX::Zero(1, num_monomials(3))};
    r.poly.coeffs(0, monomial_index(1, 1)) = 1.0;
    r.poly.coeffs(0, monomial_index(2, 1)) = -1.0;
    r.poly.coeffs(0, monomial_index(1, 2)) = -1.0;
    r.kind = {DofKind::Interior};
    r.edge = {-1};
    r.moment = {-1};
    r.deviatoric = {false};
    return r;
}

} // namespace detail

/// Reference basis of a space, computed once and cached.
inline const RefBasis& reference_basis(const SpaceSpec& spec)
{
    static std::mutex mtx;
    static std::map<std::tuple<int, int, bool>, RefBasis> cache;
    if (spec.kind == SpaceKind::L2VectorBubble) {
        static const RefBasis bubble = detail::build_bubble();
        return bubble;
    }
    if (!(spec.kind == SpaceKind::L2Scalar && spec.order == 0))
        check_order(spec.order);
    if (spec.kind == SpaceKind::LambdaFacet)
        throw InvalidInput("the facet space has no element basis; use eval_lambda_basis");
    bool dev = spec.deviatoric_only && (spec.kind == SpaceKind::SigmaTN || spec.kind == SpaceKind::SigmaDC ||
                                        spec.kind == SpaceKind::FGrad);
    auto key = std::make_tuple(static_cast<int>(spec.kind == SpaceKind::SigmaDC ? SpaceKind::SigmaTN : spec.kind),
                               spec.order, dev);
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(key);
    if (it != cache.end())
        return it->second;
    RefBasis b;
    switch (spec.kind) {
    case SpaceKind::RT: b = detail::build_rt(spec.order); break;
    case SpaceKind::SigmaTN:
    case SpaceKind::SigmaDC: b = detail::build_sigma(spec.order, dev); break;
    case SpaceKind::FGrad: b = detail::transpose_basis(detail::build_sigma(spec.order, dev)); break;
    case SpaceKind::L2Scalar: b = detail::build_l2(spec.order); break;
    case SpaceKind::LagrangeH1: b = detail::build_lagrange(spec.order); break;
    default: throw InvalidInput("unsupported space");
    }
    return cache.emplace(key, std::move(b)).first->second;
}

/// Value and divergence of every RT function at one reference point.
struct RTValues {
    MatX values;  // n x 2
    VecX div;
};

inline std::vector<RTValues> eval_rt_basis(int k, const std::vector<Vec2>& points)
{
    const auto& b = reference_basis({SpaceKind::RT, k});
    std::vector<RTValues> out;
    for (const auto& x : points) {
        auto [gx, gy] = b.poly.derivatives(x);
        out.push_back({b.poly.values(x), gx.col(0) + gy.col(1)});
    }
    return out;
}

/// Matrix values (n x 4, row-major flattened) of the stress basis at each point.
inline std::vector<MatX> eval_sigma_basis(int k, const std::vector<Vec2>& points, bool deviatoric_only = false)
{
    const auto& b = reference_basis({SpaceKind::SigmaTN, k, deviatoric_only});
    std::vector<MatX> out;
    for (const auto& x : points)
        out.push_back(b.poly.values(x));
    return out;
}

/// Facet functions of order k on reference edge `edge`: L_j(s) tau / |tau|^2, so that
/// the tangential moment u . tau equals L_j.
inline std::vector<Vec2> eval_lambda_basis(int k, int edge, double s)
{
    check_order(k);
    Vec2 t = ElementGeometry::edge_tangent(edge);
    std::vector<Vec2> out;
    for (int j = 0; j <= k; ++j)
        out.push_back(legendre01(j, s) * t / t.squaredNorm());
    return out;
}

// Push-forwards from the reference element; J = det G.

inline Vec2 push_rt(const Mat2& g, double j, const Vec2& v) { return g * v / j; }
inline double push_rt_div(double j, double div_ref) { return div_ref / j; }
inline Mat2 push_sigma(const Mat2& g, double j, const Mat2& p) { return g.inverse().transpose() * p * g.transpose() / j; }
inline Mat2 push_fgrad(const Mat2& g, double j, const Mat2& f) { return g * f * g.inverse() / j; }
inline Vec2 push_covariant(const Mat2& g, const Vec2& v) { return g.inverse().transpose() * v; }

/// Gradient of a Piola-mapped RT function; dg[l] = d G / d xhat_l (zero for affine maps).
inline Mat2 push_rt_grad(const Mat2& g, double j, const std::array<Mat2, 2>& dg, const Vec2& v, const Mat2& grad_ref)
{
    Mat2 ginv = g.inverse();
    Mat2 dref; // d u / d xhat
    for (int l = 0; l < 2; ++l) {
        double dj = j * (ginv * dg[l]).trace();
        dref.col(l) = (dg[l] / j - g * dj / (j * j)) * v + g * grad_ref.col(l) / j;
    }
    return dref * ginv;
}

/// Generic push-forward of a flattened reference value (2 or 4 components, or a scalar).
inline VecX push_forward(const SpaceSpec& space, const Mat2& g, const VecX& ref)
{
    double j = g.determinant();
    if (!(std::abs(j) > 0.0))
        throw DegenerateGeometry("singular Jacobian in push-forward");
    switch (space.kind) {
    case SpaceKind::RT: return push_rt(g, j, ref);
    case SpaceKind::SigmaTN:
    case SpaceKind::SigmaDC: return flatten(push_sigma(g, j, unflatten(ref)));
    case SpaceKind::FGrad: return flatten(push_fgrad(g, j, unflatten(ref)));
    case SpaceKind::LambdaFacet: return push_covariant(g, ref);
    default: return ref;
    }
}

} // namespace ndtns
