#pragma once

#include "ndtns/common.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace ndtns {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct NewtonConfig {
    double beta = 1.0;           // damping: step n is scaled by min(beta * n, 1)
    double tol_residual = 1e-5;
    int n_max = 40;
    double eps_p = 1e-7;         // pressure regularization (absolute, usually 1e-7 * mu)
    bool use_shift = true;
    double divergence_factor = 1e8;

    void validate() const
    {
        if (!(beta > 0.0 && beta <= 1.0))
            throw InvalidInput("damping parameter must lie in (0, 1]");
        if (!(tol_residual > 0.0))
            throw InvalidInput("residual tolerance must be positive");
        if (n_max < 1)
            throw InvalidInput("n_max must be at least 1");
    }
};

/// Linear solver failure (singular or indefinite factorization).
class LinearSolveFailure : public Error {
public:
    using Error::Error;
};

/// Solves a sparse symmetric positive definite system by sparse LDL^T.
inline VecX solve_condensed_linear(const SparseMatrix& a, const VecX& b)
{
    if (a.rows() != a.cols() || a.rows() != b.size())
        throw InvalidInput("dimension mismatch in linear solve");
    if (a.rows() == 0)
        return VecX();
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(a);
    if (ldlt.info() != Eigen::Success)
        throw LinearSolveFailure("LDL^T factorization failed");
    const VecX& d = ldlt.vectorD();
    if (!(d.array().abs().minCoeff() > 0.0) || !d.allFinite())
        throw LinearSolveFailure("singular condensed matrix");
    VecX x = ldlt.solve(b);
    if (!x.allFinite())
        throw LinearSolveFailure("non-finite solution of the condensed system");
    return x;
}

/// Sparse LU for the unsymmetric or indefinite systems of the comparison methods.
inline VecX solve_sparse_lu(const SparseMatrix& a, const VecX& b)
{
    if (a.rows() == 0)
        return VecX();
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success)
        throw LinearSolveFailure("sparse LU factorization failed");
    VecX x = lu.solve(b);
    if (lu.info() != Eigen::Success || !x.allFinite())
        throw LinearSolveFailure("sparse LU solve failed");
    return x;
}

/// Interface of a nonlinear problem driven by the Newton and load-stepping routines.
///
/// assemble() linearizes at the state for load fraction xi and returns the residual norm;
/// update() solves the stored linearization and adds alpha times the increment.
template <class P>
concept NonlinearProblem = requires(P& p, typename P::State& s, const typename P::State& cs, double xi,
                                    const NewtonConfig& cfg) {
    { p.assemble(cs, xi, cfg) } -> std::convertible_to<double>;
    { p.dirichlet_satisfied(cs, xi) } -> std::convertible_to<bool>;
    p.update(s, xi, 1.0);
    { p.jacobian_range(cs) } -> std::convertible_to<std::pair<double, double>>;
};

struct NewtonResult {
    bool converged = false;
    int iterations = 0;
    std::vector<double> residuals;
    std::vector<double> step_factors;
    std::string failure;
};

/// Damped quasi-Newton iteration at fixed load fraction xi.
template <NonlinearProblem Problem>
NewtonResult quasi_newton(Problem& prob, typename Problem::State& state, double xi, const NewtonConfig& cfg)
{
    cfg.validate();
    NewtonResult res;
    double r_ref = -1.0;  // first residual at a state satisfying the essential conditions
    for (int n = 1;; ++n) {
        double r;
        try {
            r = prob.assemble(state, xi, cfg);
        } catch (const Error& ex) {
            res.failure = ex.what();
            return res;
        }
        res.residuals.push_back(r);
        if (!std::isfinite(r)) {
            res.failure = "non-finite residual";
            return res;
        }
        const bool admissible = prob.dirichlet_satisfied(state, xi);
        if (r <= cfg.tol_residual && admissible) {
            res.converged = true;
            return res;
        }
        if (res.iterations >= cfg.n_max) {
            res.failure = "maximum number of iterations reached";
            return res;
        }
        if (admissible && r_ref < 0.0)
            r_ref = std::max(r, cfg.tol_residual);
        if (r_ref > 0.0 && r > cfg.divergence_factor * r_ref) {
            res.failure = "divergence";
            return res;
        }
        double alpha = std::min(cfg.beta * n, 1.0);
        try {
            prob.update(state, xi, alpha);
        } catch (const Error& ex) {
            res.failure = ex.what();
            return res;
        }
        res.step_factors.push_back(alpha);
        ++res.iterations;
    }
}

struct LoadStepConfig {
    double dxi_init = 0.1;
    double tol_inc = 1e-5;
    bool grow_with_min = false;  // use min{1.5 dxi, dxi_init} instead of max
    int fast_iterations = 8;
    int slow_iterations = 20;
    bool shift_fallback = false;  // retry a failed step with the shifted tangent before halving
};

struct LoadStepRecord {
    int step = 0;
    double xi = 0.0, dxi = 0.0;
    int iterations = 0;
    double residual = 0.0;
    double j0_min = 1.0, j0_max = 1.0;
    bool accepted = false;
    bool shifted = false;  // converged only with the shifted tangent
};

struct LoadStepResult {
    bool success = false;
    double xi = 0.0;            // last converged load fraction
    int accepted_steps = 0;
    int rejected_steps = 0;
    std::vector<LoadStepRecord> history;
    std::string message;
};

/// One parseable log line: step xi dxi n_it residual J0_min J0_max.
inline std::string format_step(const LoadStepRecord& r)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d %.6f %.6g %d %.6e %.8f %.8f", r.step, r.xi, r.dxi, r.iterations, r.residual,
                  r.j0_min, r.j0_max);
    return buf;
}

/// Adaptive load stepping around the quasi-Newton iteration. On return `state` holds the last
/// converged solution.
template <NonlinearProblem Problem>
LoadStepResult adaptive_load_stepping(Problem& prob, typename Problem::State& state, const NewtonConfig& cfg,
                                      const LoadStepConfig& lcfg = {}, std::ostream* log = nullptr)
{
    LoadStepResult out;
    double xi = 0.0, dxi = lcfg.dxi_init;
    int n_old = 0, step = 0;
    typename Problem::State converged = state;
    while (xi < 1.0) {
        double xi_try = std::min(xi + dxi, 1.0);
        typename Problem::State trial = converged;
        NewtonResult nr = quasi_newton(prob, trial, xi_try, cfg);
        LoadStepRecord rec;
        if (!nr.converged && lcfg.shift_fallback && !cfg.use_shift) {
            NewtonConfig shifted = cfg;
            shifted.use_shift = true;
            trial = converged;
            nr = quasi_newton(prob, trial, xi_try, shifted);
            rec.shifted = true;
        }
        rec.step = ++step;
        rec.xi = xi_try;
        rec.dxi = dxi;
        rec.iterations = nr.iterations;
        rec.residual = nr.residuals.empty() ? 0.0 : nr.residuals.back();
        bool ok = nr.converged;
        if (ok) {
            auto [jmin, jmax] = prob.jacobian_range(trial);
            rec.j0_min = jmin;
            rec.j0_max = jmax;
            ok = jmin > 0.0;
        } else {
            rec.j0_min = rec.j0_max = std::nan("");
        }
        rec.accepted = ok;
        out.history.push_back(rec);
        if (log)
            *log << format_step(rec) << (rec.shifted ? " shifted" : "") << (ok ? "" : " rejected") << '\n';
        if (ok) {
            xi = xi_try;
            converged = std::move(trial);
            ++out.accepted_steps;
            if (nr.iterations < lcfg.fast_iterations && n_old < lcfg.fast_iterations)
                dxi = lcfg.grow_with_min ? std::min(1.5 * dxi, lcfg.dxi_init) : std::max(1.5 * dxi, lcfg.dxi_init);
            if (nr.iterations > lcfg.slow_iterations && n_old > lcfg.slow_iterations)
                dxi *= 0.8;
            n_old = nr.iterations;
        } else {
            ++out.rejected_steps;
            dxi *= 0.5;
            if (dxi < lcfg.tol_inc) {
                out.message = "Problem cannot be solved";
                break;
            }
        }
    }
    out.success = xi >= 1.0;
    out.xi = xi;
    state = std::move(converged);
    return out;
}

} // namespace ndtns
