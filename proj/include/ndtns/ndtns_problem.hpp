#pragma once

#include "ndtns/assembly.hpp"
#include "ndtns/dofmap.hpp"
#include "ndtns/material.hpp"
#include "ndtns/solver.hpp"

#include <Eigen/Sparse>

#include <functional>
#include <limits>
#include <vector>

namespace ndtns {

struct NdtnsOptions {
    int order = 2;
    bool reduced = true;
    MaterialParams material;
};

/// Stabilization parameter for local edge `edge` of `element`.
using TauField = std::function<double(const Triangulation&, int element, int edge)>;

inline TauField constant_tau(double value)
{
    return [value](const Triangulation&, int, int) { return value; };
}

/// Hybridized NDTNS discretization with static condensation onto (u, u~).
class NdtnsProblem {
public:
    struct State {
        VecX coupling;                // global coupling coefficients
        std::vector<VecX> internal;   // per element: [u interior | F | P | p]
    };

    NdtnsProblem(const Triangulation& mesh, NdtnsOptions opt, BoundaryConditions bc, TauField tau = {})
        : mesh_(mesh), opt_(opt), bc_(std::move(bc))
    {
        opt_.material.validate();
        dofs_ = build_dofmap(mesh_, opt_.order, opt_.reduced, bc_);
        const auto& l = dofs_.layout;
        ops_.reserve(mesh_.num_elements());
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            std::array<double, 3> t{0.0, 0.0, 0.0};
            if (tau)
                for (int i = 0; i < 3; ++i)
                    t[i] = tau(mesh_, e, i);
            ops_.push_back(build_element_operators(mesh_, e, l, t));
            add_element_loads(ops_.back(), mesh_, e, l, bc_);
        }
    }

    const Triangulation& mesh() const { return mesh_; }
    const DofMap& dofmap() const { return dofs_; }
    const LocalLayout& layout() const { return dofs_.layout; }
    const NdtnsOptions& options() const { return opt_; }
    const ElementOperators& element_operators(int e) const { return ops_[e]; }

    /// Reference configuration: u = 0, F = I, P = 0, p = mu.
    State initial_state() const
    {
        State s;
        s.coupling = VecX::Zero(dofs_.num_global);
        const auto& l = layout();
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            VecX in = VecX::Zero(l.n_internal());
            in.segment(l.p - l.coupling, l.n_p) = constant_pressure(ops_[e], opt_.material.mu);
            s.internal.push_back(in);
        }
        return s;
    }

    /// Full local coefficient vector of element e (orientation factors applied).
    VecX local_coefficients(const State& s, int e) const
    {
        const auto& l = layout();
        VecX c(l.total);
        for (int i = 0; i < l.coupling; ++i)
            c(i) = dofs_.sign[e][i] * s.coupling(dofs_.global[e][i]);
        c.tail(l.n_internal()) = s.internal[e];
        return c;
    }

    /// Linearizes at `s`, condenses every element and assembles the free coupling system.
    /// Returns the Euclidean norm of the residual over free coupling and all internal entries.
    double assemble(const State& s, double xi, const NewtonConfig& cfg)
    {
        const auto& l = layout();
        const int ng = dofs_.num_global;
        free_index_.assign(ng, -1);
        int nfree = 0;
        for (int g = 0; g < ng; ++g)
            if (!dofs_.essential[g])
                free_index_[g] = nfree++;

        condensed_.clear();
        condensed_.reserve(mesh_.num_elements());
        VecX r_glob = VecX::Zero(ng);
        b_glob_ = VecX::Zero(ng);
        double r_int2 = 0.0;
        std::vector<Eigen::Triplet<double>> trip;
        TangentOptions topt{cfg.use_shift, cfg.eps_p};
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            VecX c = local_coefficients(s, e);
            ElementSystem sys = evaluate_element(ops_[e], l, c, opt_.material, xi, true, topt, e);
            r_int2 += sys.residual.tail(l.n_internal()).squaredNorm();
            VecX b = -sys.residual;
            CondensedSystem cs = static_condense(sys.tangent, b, l.coupling, e);
            const auto& gl = dofs_.global[e];
            const auto& sg = dofs_.sign[e];
            for (int i = 0; i < l.coupling; ++i) {
                r_glob(gl[i]) += sg[i] * sys.residual(i);
                b_glob_(gl[i]) += sg[i] * cs.rhs(i);
                for (int j = 0; j < l.coupling; ++j)
                    trip.emplace_back(gl[i], gl[j], sg[i] * sg[j] * 0.5 * (cs.s(i, j) + cs.s(j, i)));
            }
            condensed_.push_back(std::move(cs));
        }
        k_glob_.resize(ng, ng);
        k_glob_.setFromTriplets(trip.begin(), trip.end());
        double r2 = r_int2;
        for (int g = 0; g < ng; ++g)
            if (!dofs_.essential[g])
                r2 += r_glob(g) * r_glob(g);
        return std::sqrt(r2);
    }

    bool dirichlet_satisfied(const State& s, double xi) const
    {
        for (int g = 0; g < dofs_.num_global; ++g)
            if (dofs_.essential[g]) {
                double target = xi * dofs_.essential_value(g);
                if (std::abs(s.coupling(g) - target) > 1e-12 * (1.0 + std::abs(target)))
                    return false;
            }
        return true;
    }

    /// Free-free block of the last assembled condensed matrix.
    SparseMatrix free_matrix() const
    {
        std::vector<Eigen::Triplet<double>> t;
        for (int k = 0; k < k_glob_.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(k_glob_, k); it; ++it) {
                int i = free_index_[it.row()], j = free_index_[it.col()];
                if (i >= 0 && j >= 0)
                    t.emplace_back(i, j, it.value());
            }
        int nfree = 0;
        for (int v : free_index_)
            nfree += v >= 0;
        SparseMatrix a(nfree, nfree);
        a.setFromTriplets(t.begin(), t.end());
        return a;
    }

    const SparseMatrix& global_matrix() const { return k_glob_; }

    /// Solves the last linearization and adds alpha times the increment.
    void update(State& s, double xi, double alpha)
    {
        const auto& l = layout();
        const int ng = dofs_.num_global;
        VecX delta = VecX::Zero(ng);
        for (int g = 0; g < ng; ++g)
            if (dofs_.essential[g])
                delta(g) = xi * dofs_.essential_value(g) - s.coupling(g);
        VecX bf = VecX::Zero(free_matrix_size());
        for (int g = 0; g < ng; ++g)
            if (free_index_[g] >= 0)
                bf(free_index_[g]) = b_glob_(g);
        // move prescribed increments to the right-hand side
        for (int k = 0; k < k_glob_.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(k_glob_, k); it; ++it) {
                int i = free_index_[it.row()];
                if (i >= 0 && free_index_[it.col()] < 0)
                    bf(i) -= it.value() * delta(it.col());
            }
        VecX x = solve_condensed_linear(free_matrix(), bf);
        for (int g = 0; g < ng; ++g)
            if (free_index_[g] >= 0)
                delta(g) = x(free_index_[g]);
        s.coupling += alpha * delta;
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            VecX dc(l.coupling);
            for (int i = 0; i < l.coupling; ++i)
                dc(i) = dofs_.sign[e][i] * delta(dofs_.global[e][i]);
            s.internal[e] += alpha * recover_internal(condensed_[e], dc);
        }
    }

    /// Element-mean Jacobian determinants J0.
    std::vector<JacobianStats> jacobian_stats(const State& s) const
    {
        std::vector<JacobianStats> out;
        for (int e = 0; e < mesh_.num_elements(); ++e)
            out.push_back(element_jacobian(ops_[e], local_coefficients(s, e)));
        return out;
    }

    std::pair<double, double> jacobian_range(const State& s) const
    {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& j : jacobian_stats(s)) {
            lo = std::min(lo, j.mean);
            hi = std::max(hi, j.mean);
        }
        return {lo, hi};
    }

    bool volume_positive(const State& s) const { return jacobian_range(s).first > 0.0; }

    /// Moments of the tangential-normal stress jump against the facet functions, per interior
    /// facet moment (the hybridization multiplier equation without stabilization).
    VecX tn_jump_moments(const State& s) const
    {
        const auto& l = layout();
        VecX jump = VecX::Zero(dofs_.num_global);
        std::vector<char> interior(dofs_.num_global, 0);
        for (int f = 0; f < mesh_.num_facets(); ++f)
            if (!mesh_.facets[f].is_boundary())
                for (int j = 0; j <= l.k; ++j)
                    interior[dofs_.lambda_dof(f, j)] = 1;
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            VecX c = local_coefficients(s, e);
            bool curved = mesh_.is_curved(e);
            for (const auto& fp : facet_points(mesh_, e, l, facet_quadrature_degree(l.k, curved))) {
                double ptn = fp.p_tn.dot(c.segment(l.P, l.n_P)) / fp.tau.squaredNorm();
                for (int j = 0; j <= l.k; ++j) {
                    int li = l.lam + fp.edge * (l.k + 1) + j;
                    jump(dofs_.global[e][li]) += dofs_.sign[e][li] * fp.w * ptn * fp.lambda(j);
                }
            }
        }
        std::vector<double> v;
        for (int g = 0; g < dofs_.num_global; ++g)
            if (interior[g])
                v.push_back(jump(g));
        return Eigen::Map<VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
    }

private:
    int free_matrix_size() const
    {
        int n = 0;
        for (int v : free_index_)
            n += v >= 0;
        return n;
    }

    Triangulation mesh_;
    NdtnsOptions opt_;
    BoundaryConditions bc_;
    DofMap dofs_;
    std::vector<ElementOperators> ops_;
    std::vector<CondensedSystem> condensed_;
    std::vector<int> free_index_;
    SparseMatrix k_glob_;
    VecX b_glob_;
};

/// Non-hybridized variant: stress tangential-normal moments are shared between elements,
/// the facet multiplier is fixed to the prescribed tangential displacement (zero inside),
/// and the tangential-normal stress is prescribed on traction boundaries. Solved by dense Newton.
struct MonolithicResult {
    std::vector<VecX> local;   // per element local coefficient vectors
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

inline MonolithicResult solve_monolithic(const Triangulation& mesh, const NdtnsOptions& opt,
                                         const BoundaryConditions& bc, double xi, double tol = 1e-12,
                                         int n_max = 30)
{
    const LocalLayout l = LocalLayout::make(opt.order, opt.reduced);
    const int k = opt.order, nf = mesh.num_facets(), ne = mesh.num_elements();
    DofMap hyb = build_dofmap(mesh, k, opt.reduced, bc);

    const int n_rt = nf * (k + 1), n_tn = nf * (k + 1);
    const int n_elem = l.n_internal() - 3 * (k + 1);  // internal without stress facet moments
    const int n = n_rt + n_tn + ne * n_elem;
    // local -> global map; -1 marks fixed multiplier entries
    std::vector<std::vector<int>> gmap(ne, std::vector<int>(l.total, -1));
    std::vector<std::vector<double>> smap(ne, std::vector<double>(l.total, 1.0));
    VecX fixed_lambda = VecX::Zero(hyb.num_global);
    for (int g = 0; g < hyb.num_global; ++g)
        if (hyb.essential[g] && g >= n_rt)
            fixed_lambda(g) = xi * hyb.essential_value(g);

    std::vector<char> essential(n, 0);
    VecX value = VecX::Zero(n);
    for (int g = 0; g < n_rt; ++g)
        if (hyb.essential[g]) {
            essential[g] = 1;
            value(g) = xi * hyb.essential_value(g);
        }
    for (int f = 0; f < nf; ++f) {
        const Facet& fc = mesh.facets[f];
        if (!fc.is_boundary() || bc.tangential_dirichlet.count(fc.marker))
            continue;
        VecX m = VecX::Zero(k + 1);
        auto it = bc.traction.find(fc.marker);
        if (it != bc.traction.end())
            m = facet_moments(mesh, f, k, [&](const Vec2& x, const Vec2& tau, const Vec2&) {
                return tau.norm() * it->second(x).dot(tau);
            });
        for (int j = 0; j <= k; ++j) {
            essential[n_rt + f * (k + 1) + j] = 1;
            value(n_rt + f * (k + 1) + j) = xi * m(j);
        }
    }

    std::vector<ElementOperators> ops;
    for (int e = 0; e < ne; ++e) {
        ops.push_back(build_element_operators(mesh, e, l, {0.0, 0.0, 0.0}));
        // multiplier rows are not part of this system, so only the normal traction load acts
        add_element_loads(ops.back(), mesh, e, l, bc);
        for (int le = 0; le < 3; ++le) {
            int f = mesh.element_facets[e][le];
            bool first = mesh.facets[f].elements[0] == e;
            for (int j = 0; j <= k; ++j) {
                int a = l.rt_facet + le * (k + 1) + j;
                gmap[e][a] = f * (k + 1) + j;
                smap[e][a] = first ? 1.0 : reversed_sign_rt(j);
                int b = l.P + le * (k + 1) + j;
                gmap[e][b] = n_rt + f * (k + 1) + j;
                smap[e][b] = first ? 1.0 : reversed_sign_tn(j);
            }
        }
        int pos = n_rt + n_tn + e * n_elem;
        for (int i = l.rt_int; i < l.total; ++i) {
            bool stress_facet = i >= l.P && i < l.P + 3 * (k + 1);
            if (!stress_facet)
                gmap[e][i] = pos++;
        }
    }

    auto local = [&](const VecX& x, int e) {
        VecX c(l.total);
        for (int i = 0; i < l.total; ++i) {
            if (gmap[e][i] >= 0)
                c(i) = smap[e][i] * x(gmap[e][i]);
            else
                c(i) = hyb.sign[e][i] * fixed_lambda(hyb.global[e][i]);
        }
        return c;
    };

    VecX x = VecX::Zero(n);
    for (int e = 0; e < ne; ++e) {
        VecX p0 = constant_pressure(ops[e], opt.material.mu);
        for (int i = 0; i < l.n_p; ++i)
            x(gmap[e][l.p + i]) = p0(i);
    }
    for (int g = 0; g < n; ++g)
        if (essential[g])
            x(g) = value(g);

    MonolithicResult res;
    for (int it = 0; it <= n_max; ++it) {
        MatX kg = MatX::Zero(n, n);
        VecX rg = VecX::Zero(n);
        for (int e = 0; e < ne; ++e) {
            ElementSystem sys = evaluate_element(ops[e], l, local(x, e), opt.material, xi, true, {false, 0.0}, e);
            for (int i = 0; i < l.total; ++i) {
                int gi = gmap[e][i];
                if (gi < 0)
                    continue;
                rg(gi) += smap[e][i] * sys.residual(i);
                for (int j = 0; j < l.total; ++j) {
                    int gj = gmap[e][j];
                    if (gj >= 0)
                        kg(gi, gj) += smap[e][i] * smap[e][j] * sys.tangent(i, j);
                }
            }
        }
        for (int g = 0; g < n; ++g)
            if (essential[g]) {
                rg(g) = 0.0;
                kg.row(g).setZero();
                kg.col(g).setZero();
                kg(g, g) = 1.0;
            }
        res.residual = rg.norm();
        if (res.residual <= tol) {
            res.converged = true;
            break;
        }
        if (it == n_max)
            break;
        x -= kg.fullPivLu().solve(rg);
        res.iterations = it + 1;
    }
    for (int e = 0; e < ne; ++e)
        res.local.push_back(local(x, e));
    return res;
}

} // namespace ndtns
