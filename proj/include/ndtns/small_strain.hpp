#pragma once

#include "ndtns/assembly.hpp"
#include "ndtns/dofmap.hpp"
#include "ndtns/elements.hpp"
#include "ndtns/geometry.hpp"
#include "ndtns/quadrature.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <vector>

namespace ndtns {

struct SmallStrainOptions {
    int order = 2;
    double mu = 1.0;  // C eps = 2 mu dev(eps)
};

/// Local block layout of the small-strain system: [u (RT) | sigma | eps | omega | p].
///
/// u and sigma follow the reference basis order (facet functions first). eps is symmetric,
/// expanded in the scalar L2 basis times {E11, E22, E12 + E21}; omega is the scalar L2 basis
/// of order k - 1 times E12 - E21.
struct SmallStrainLayout {
    int k = 2;
    int n_u = 0, n_sigma = 0, n_eps = 0, n_omega = 0, n_p = 0;
    int u = 0, sigma = 0, eps = 0, omega = 0, p = 0, total = 0;
    int n_u_facet = 0, n_sigma_facet = 0;

    static SmallStrainLayout make(int k)
    {
        check_order(k);
        SmallStrainLayout l;
        l.k = k;
        const int nm = num_monomials(k);
        l.n_u = reference_basis({SpaceKind::RT, k}).size();
        l.n_sigma = reference_basis({SpaceKind::SigmaTN, k, false}).size();
        l.n_eps = 3 * nm;
        l.n_omega = num_monomials(k - 1);
        l.n_p = nm;
        l.n_u_facet = l.n_sigma_facet = 3 * (k + 1);
        l.sigma = l.u + l.n_u;
        l.eps = l.sigma + l.n_sigma;
        l.omega = l.eps + l.n_eps;
        l.p = l.omega + l.n_omega;
        l.total = l.p + l.n_p;
        return l;
    }
};

struct SmallStrainElement {
    MatX k;        // symmetric element matrix
    VecX load;     // body-force work on the u rows
    VecX p_mean;   // int p basis, used by the zero-mean constraint
};

namespace detail {

inline const std::array<Mat2, 3>& symmetric_generators()
{
    static const std::array<Mat2, 3> g = [] {
        std::array<Mat2, 3> a;
        a[0] << 1, 0, 0, 0;
        a[1] << 0, 0, 0, 1;
        a[2] << 0, 1, 1, 0;
        return a;
    }();
    return g;
}

inline Mat2 skew_generator()
{
    Mat2 s;
    s << 0, 1, -1, 0;
    return s;
}

} // namespace detail

/// Element system of the linear small-strain problem
///   int C eps : d_eps + int sigma : d_eps - int p tr d_eps                = 0
///   int eps : d_sigma - <Grad u, d_sigma> + int omega : d_sigma         = 0
///   -<Grad d_u, sigma>                                                   = int B . d_u
///   int d_omega : sigma                                                  = 0
///   -int d_p tr eps                                                      = 0
/// with <Grad u, sigma> = int sigma : Grad u - int_dT (t^T sigma n)(u . t).
inline SmallStrainElement small_strain_element(const Triangulation& mesh, int e, const SmallStrainOptions& opt,
                                               const VectorField& body_force = {})
{
    const auto sl = SmallStrainLayout::make(opt.order);
    const auto hl = LocalLayout::make(opt.order, false);
    const bool curved = mesh.is_curved(e);
    auto rule = triangle_rule(element_quadrature_degree(sl.k, curved));
    auto vps = volume_points(mesh, e, hl, rule);
    auto fps = facet_points(mesh, e, hl, facet_quadrature_degree(sl.k, curved));
    const auto& ob = reference_basis({SpaceKind::L2Scalar, sl.k - 1});
    const auto& sym = detail::symmetric_generators();
    const Mat2 skew = detail::skew_generator();

    SmallStrainElement out;
    out.k = MatX::Zero(sl.total, sl.total);
    out.load = VecX::Zero(sl.total);
    out.p_mean = VecX::Zero(sl.total);
    MatX& a = out.k;

    for (std::size_t q = 0; q < vps.size(); ++q) {
        const auto& vp = vps[q];
        const double w = vp.w;
        const int nm = static_cast<int>(vp.p.size());
        MatX eps(sl.n_eps, 4);
        for (int g = 0; g < 3; ++g)
            for (int m = 0; m < nm; ++m)
                eps.row(g * nm + m) = vp.p(m) * flatten(sym[g]).transpose();
        VecX ov = ob.poly.values(rule.points[q]).col(0);
        MatX omega(sl.n_omega, 4);
        for (int m = 0; m < sl.n_omega; ++m)
            omega.row(m) = ov(m) * flatten(skew).transpose();
        VecX tr_eps = eps.col(0) + eps.col(3);
        MatX dev_eps = eps;
        dev_eps.col(0) -= 0.5 * tr_eps;
        dev_eps.col(3) -= 0.5 * tr_eps;

        a.block(sl.eps, sl.eps, sl.n_eps, sl.n_eps) += w * 2.0 * opt.mu * dev_eps * dev_eps.transpose();
        MatX se = w * eps * vp.P.transpose();
        a.block(sl.eps, sl.sigma, sl.n_eps, sl.n_sigma) += se;
        a.block(sl.sigma, sl.eps, sl.n_sigma, sl.n_eps) += se.transpose();
        MatX pe = -w * tr_eps * vp.p.transpose();
        a.block(sl.eps, sl.p, sl.n_eps, sl.n_p) += pe;
        a.block(sl.p, sl.eps, sl.n_p, sl.n_eps) += pe.transpose();
        MatX su = -w * vp.P * vp.grad_u.transpose();
        a.block(sl.sigma, sl.u, sl.n_sigma, sl.n_u) += su;
        a.block(sl.u, sl.sigma, sl.n_u, sl.n_sigma) += su.transpose();
        MatX so = w * vp.P * omega.transpose();
        a.block(sl.sigma, sl.omega, sl.n_sigma, sl.n_omega) += so;
        a.block(sl.omega, sl.sigma, sl.n_omega, sl.n_sigma) += so.transpose();
        out.p_mean.segment(sl.p, sl.n_p) += w * vp.p;
        if (body_force)
            out.load.segment(sl.u, sl.n_u) += w * vp.u * body_force(vp.x);
    }
    for (const auto& fp : fps) {
        MatX su = fp.w / fp.tau.squaredNorm() * fp.p_tn * fp.u_tau.transpose();
        a.block(sl.sigma, sl.u, sl.n_sigma, sl.n_u) += su;
        a.block(sl.u, sl.sigma, sl.n_u, sl.n_sigma) += su.transpose();
    }
    return out;
}

/// Element-wise L2 projection of a matrix field onto the full stress space.
inline VecX project_stress(const Triangulation& mesh, int e, int k, const std::function<Mat2(const Vec2&)>& f)
{
    const auto hl = LocalLayout::make(k, false);
    auto vps = volume_points(mesh, e, hl, element_quadrature_degree(k, mesh.is_curved(e)) + 2);
    const int n = static_cast<int>(vps.front().P.rows());
    MatX m = MatX::Zero(n, n);
    VecX b = VecX::Zero(n);
    for (const auto& vp : vps) {
        m += vp.w * vp.P * vp.P.transpose();
        b += vp.w * vp.P * flatten(f(vp.x));
    }
    return m.ldlt().solve(b);
}

/// Global linear small-strain problem with u . n = 0 on the whole boundary.
///
/// Unknowns: RT facet moments and symmetric-stress tangential-normal facet moments are shared,
/// every other coefficient is element-owned. A scalar multiplier fixes the pressure mean.
class SmallStrainProblem {
public:
    SmallStrainProblem(const Triangulation& mesh, SmallStrainOptions opt) : mesh_(mesh), opt_(opt)
    {
        if (!(opt_.mu > 0.0))
            throw InvalidInput("shear modulus must be positive");
        layout_ = SmallStrainLayout::make(opt_.order);
        const int k = layout_.k, nf = mesh_.num_facets(), ne = mesh_.num_elements();
        const int per_elem = layout_.total - layout_.n_u_facet - layout_.n_sigma_facet;
        u_facet_ = 0;
        sigma_facet_ = nf * (k + 1);
        elem_ = 2 * nf * (k + 1);
        mean_ = elem_ + ne * per_elem;
        n_ = mean_ + 1;

        global_.resize(ne);
        sign_.resize(ne);
        for (int e = 0; e < ne; ++e) {
            auto& g = global_[e];
            auto& s = sign_[e];
            g.assign(layout_.total, -1);
            s.assign(layout_.total, 1.0);
            int next = elem_ + e * per_elem;
            for (int i = 0; i < layout_.total; ++i) {
                bool u_facet = i >= layout_.u && i < layout_.u + layout_.n_u_facet;
                bool s_facet = i >= layout_.sigma && i < layout_.sigma + layout_.n_sigma_facet;
                if (!u_facet && !s_facet) {
                    g[i] = next++;
                    continue;
                }
                int li = i - (u_facet ? layout_.u : layout_.sigma);
                int le = li / (k + 1), j = li % (k + 1);
                int f = mesh_.element_facets[e][le];
                bool first = mesh_.facets[f].elements[0] == e;
                if (u_facet) {
                    g[i] = u_facet_ + f * (k + 1) + j;
                    s[i] = first ? 1.0 : reversed_sign_rt(j);
                } else {
                    g[i] = sigma_facet_ + f * (k + 1) + j;
                    s[i] = first ? 1.0 : reversed_sign_tn(j);
                }
            }
        }
        essential_.assign(n_, 0);
        for (int f = 0; f < nf; ++f)
            if (mesh_.facets[f].is_boundary())
                for (int j = 0; j <= k; ++j)
                    essential_[u_facet_ + f * (k + 1) + j] = 1;
    }

    int num_dofs() const { return n_; }
    const SmallStrainLayout& layout() const { return layout_; }
    const Triangulation& mesh() const { return mesh_; }

    /// Assembles the system restricted to the free DoFs; `free_index` maps global -> free (-1 if fixed).
    void assemble(const VectorField& body_force, Eigen::SparseMatrix<double>& a, VecX& b,
                  std::vector<int>& free_index) const
    {
        free_index.assign(n_, -1);
        int nfree = 0;
        for (int i = 0; i < n_; ++i)
            if (!essential_[i])
                free_index[i] = nfree++;
        std::vector<Eigen::Triplet<double>> trip;
        b = VecX::Zero(nfree);
        const int mean_row = free_index[mean_];
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            auto el = small_strain_element(mesh_, e, opt_, body_force);
            const auto& g = global_[e];
            const auto& s = sign_[e];
            for (int i = 0; i < layout_.total; ++i) {
                int fi = free_index[g[i]];
                if (fi < 0)
                    continue;
                b(fi) += s[i] * el.load(i);
                if (el.p_mean(i) != 0.0) {
                    trip.emplace_back(fi, mean_row, el.p_mean(i));
                    trip.emplace_back(mean_row, fi, el.p_mean(i));
                }
                for (int j = 0; j < layout_.total; ++j) {
                    int fj = free_index[g[j]];
                    if (fj >= 0 && el.k(i, j) != 0.0)
                        trip.emplace_back(fi, fj, s[i] * s[j] * el.k(i, j));
                }
            }
        }
        a.resize(nfree, nfree);
        a.setFromTriplets(trip.begin(), trip.end());
    }

    /// Solves with body force B; returns all global coefficients (fixed ones are zero).
    VecX solve(const VectorField& body_force) const
    {
        Eigen::SparseMatrix<double> a;
        VecX b;
        std::vector<int> free_index;
        assemble(body_force, a, b, free_index);
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(a);
        if (lu.info() != Eigen::Success)
            throw Error("small-strain system is singular");
        VecX y = lu.solve(b);
        VecX x = VecX::Zero(n_);
        for (int i = 0; i < n_; ++i)
            if (free_index[i] >= 0)
                x(i) = y(free_index[i]);
        return x;
    }

    /// Local coefficients of element e in the layout of SmallStrainLayout.
    VecX local(const VecX& x, int e) const
    {
        VecX c(layout_.total);
        for (int i = 0; i < layout_.total; ++i)
            c(i) = sign_[e][i] * x(global_[e][i]);
        return c;
    }

    double displacement_norm(const VecX& x) const
    {
        double s = 0.0;
        const auto hl = LocalLayout::make(layout_.k, false);
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            VecX c = local(x, e).segment(layout_.u, layout_.n_u);
            for (const auto& vp : volume_points(mesh_, e, hl, 2 * layout_.k + 4))
                s += vp.w * (vp.u.transpose() * c).squaredNorm();
        }
        return std::sqrt(s);
    }

    /// L2 distance between p_h and the element-wise L2 projection of psi onto P^k.
    double pressure_projection_error(const VecX& x, const ScalarField& psi) const
    {
        double s = 0.0;
        const auto hl = LocalLayout::make(layout_.k, false);
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            auto vps = volume_points(mesh_, e, hl, 2 * layout_.k + 6);
            MatX m = MatX::Zero(layout_.n_p, layout_.n_p);
            VecX r = VecX::Zero(layout_.n_p);
            for (const auto& vp : vps) {
                m += vp.w * vp.p * vp.p.transpose();
                r += vp.w * vp.p * psi(vp.x);
            }
            VecX d = local(x, e).segment(layout_.p, layout_.n_p) - m.ldlt().solve(r);
            s += d.dot(m * d);
        }
        return std::sqrt(std::max(s, 0.0));
    }

private:
    Triangulation mesh_;
    SmallStrainOptions opt_;
    SmallStrainLayout layout_;
    int n_ = 0, u_facet_ = 0, sigma_facet_ = 0, elem_ = 0, mean_ = 0;
    std::vector<std::vector<int>> global_;
    std::vector<std::vector<double>> sign_;
    std::vector<char> essential_;
};

} // namespace ndtns
