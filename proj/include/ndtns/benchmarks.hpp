#pragma once

#include "ndtns/ndtns_problem.hpp"
#include "ndtns/postproc.hpp"
#include "ndtns/small_strain.hpp"
#include "ndtns/solver.hpp"
#include "ndtns/standard.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace ndtns {

/// Closed-form inflation of a cylindrical shell (plane strain, incompressible neo-Hooke).
struct InflationFields {
    Vec2 u;
    double p = 0.0;
    Mat2 F;
    Mat2 P;
};

struct InflationGeometry {
    double r_in = 0.5;
    double r_out = 1.0;
};

inline InflationFields exact_inflation_2d(const Vec2& x, double gamma, double mu, InflationGeometry g = {})
{
    const double rr = x.norm();
    if (!(rr > 0.0))
        throw InvalidInput("exact inflation solution is undefined at the origin");
    const double c = (gamma * gamma - 1.0) * g.r_out * g.r_out;
    const double r = std::sqrt(rr * rr + c);
    const double r_inner = std::sqrt(g.r_in * g.r_in + c);
    InflationFields f;
    f.u = (r / rr - 1.0) * x;
    f.F = (r / rr) * Mat2::Identity() + (rr * rr - r * r) / (r * rr * rr * rr) * x * x.transpose();
    f.p = mu * rr * rr / (r * r) - 0.5 * mu * c * (1.0 / (r_inner * r_inner) - 1.0 / (r * r)) +
          mu * std::log(r * g.r_in / (rr * r_inner));
    f.P = mu * f.F - f.p * cof(f.F);
    return f;
}

inline ExactSolution inflation_exact_solution(double gamma, double mu, InflationGeometry g = {})
{
    ExactSolution ex;
    ex.u = [=](const Vec2& x) { return exact_inflation_2d(x, gamma, mu, g).u; };
    ex.p = [=](const Vec2& x) { return exact_inflation_2d(x, gamma, mu, g).p; };
    ex.F = [=](const Vec2& x) { return exact_inflation_2d(x, gamma, mu, g).F; };
    ex.P = [=](const Vec2& x) { return exact_inflation_2d(x, gamma, mu, g).P; };
    return ex;
}

/// Stabilization choice for the benchmarks.
struct TauPolicy {
    enum class Kind { Zero, Constant, OverH, Cook } kind = Kind::Zero;
    double value = 0.0;
};

/// Parses "zero", "const:<c>", "overh:<c>" or "cook".
inline TauPolicy parse_tau_policy(const std::string& s)
{
    TauPolicy t;
    auto number = [&](std::size_t pos) {
        try {
            std::size_t used = 0;
            double v = std::stod(s.substr(pos), &used);
            if (used != s.size() - pos || !(v >= 0.0))
                throw InvalidInput("");
            return v;
        } catch (const std::exception&) {
            throw InvalidInput("invalid stabilization value in '" + s + "'");
        }
    };
    if (s == "zero")
        return t;
    if (s == "cook") {
        t.kind = TauPolicy::Kind::Cook;
        t.value = 100.0;
        return t;
    }
    if (s.rfind("const:", 0) == 0) {
        t.kind = TauPolicy::Kind::Constant;
        t.value = number(6);
        return t;
    }
    if (s.rfind("overh:", 0) == 0) {
        t.kind = TauPolicy::Kind::OverH;
        t.value = number(6);
        return t;
    }
    throw InvalidInput("unknown stabilization policy '" + s + "'");
}

/// Region of the Cook stabilization: disk around the upper left corner.
struct CookRegion {
    Vec2 center{0.0, 0.44};
    double radius = 0.1;
};

/// Per-facet stabilization field. For the Cook policy, tau = c mu / h_T on facets whose midpoint
/// lies inside `region` and c mu elsewhere.
inline TauField make_tau_field(const TauPolicy& t, double mu, CookRegion region = {})
{
    switch (t.kind) {
    case TauPolicy::Kind::Zero:
        return {};
    case TauPolicy::Kind::Constant:
        return constant_tau(t.value);
    case TauPolicy::Kind::OverH:
        return [c = t.value](const Triangulation& m, int e, int le) { return c / facet_height(m, e, le); };
    case TauPolicy::Kind::Cook:
        return [c = t.value, mu, region](const Triangulation& m, int e, int le) {
            ElementGeometry geo(m, e);
            Vec2 mid = geo.map(ElementGeometry::edge_point(le, 0.5));
            bool inside = (mid - region.center).squaredNorm() < region.radius * region.radius;
            return inside ? c * mu / facet_height(m, e, le) : c * mu;
        };
    }
    return {};
}

enum class Method { Ndtns, Standard, McsSmallStrain };

inline Method parse_method(const std::string& s)
{
    if (s == "ndtns")
        return Method::Ndtns;
    if (s == "std")
        return Method::Standard;
    if (s == "mcs" || s == "mcs_small_strain")
        return Method::McsSmallStrain;
    throw InvalidInput("unknown method '" + s + "'");
}

/// Solver settings shared by the benchmark drivers.
struct SolverSettings {
    NewtonConfig newton;
    LoadStepConfig load;
};

/// Newton runs on the exact tangent; NDTNS retries a failed load step with the shifted tangent.
inline SolverSettings default_solver_settings(double mu, Method method = Method::Ndtns)
{
    SolverSettings s;
    s.newton.eps_p = 1e-7 * mu;
    s.newton.use_shift = false;
    s.load.shift_fallback = method == Method::Ndtns;
    return s;
}

struct InflationConfig {
    int order = 2;
    int levels = 4;
    double gamma = 2.0;
    double mu = 1.0;
    TauPolicy tau;
    InflationGeometry geometry;
    AnnulusLayout layout;
    std::optional<SolverSettings> solver;
};

inline BoundaryConditions inflation_boundary_conditions(double gamma, double mu, InflationGeometry g = {})
{
    BoundaryConditions bc;
    bc.normal_dirichlet = {"outer", "sym_x", "sym_y"};
    bc.tangential_dirichlet = {"outer"};
    bc.displacement = [=](const Vec2& x) { return exact_inflation_2d(x, gamma, mu, g).u; };
    return bc;
}

/// Radial spacing of the level-0 annulus mesh, halved per uniform refinement.
inline double nominal_mesh_size(const InflationConfig& cfg, int level)
{
    return (cfg.geometry.r_out - cfg.geometry.r_in) / cfg.layout.radial / static_cast<double>(1 << level);
}

/// Result of one benchmark level.
struct LevelRun {
    int level = 0;
    int elements = 0;
    int coupling_dofs = 0;
    int total_dofs = 0;
    LoadStepResult load;
};

struct InflationRun {
    ErrorReport report;
    std::vector<LevelRun> levels;
    bool success = true;
};

inline int ndtns_total_dofs(const NdtnsProblem& p)
{
    return p.dofmap().num_global + p.mesh().num_elements() * p.layout().n_internal();
}

inline InflationRun run_inflation2d_ndtns(const InflationConfig& cfg, std::ostream* log = nullptr)
{
    SolverSettings solver = cfg.solver.value_or(default_solver_settings(cfg.mu));
    InflationRun run;
    ExactSolution ex = inflation_exact_solution(cfg.gamma, cfg.mu, cfg.geometry);
    for (int level = 0; level < cfg.levels; ++level) {
        Triangulation mesh = build_quarter_annulus(cfg.geometry.r_in, cfg.geometry.r_out, level, 2, cfg.layout);
        NdtnsOptions opt;
        opt.order = cfg.order;
        opt.material.mu = cfg.mu;
        NdtnsProblem prob(mesh, opt, inflation_boundary_conditions(cfg.gamma, cfg.mu, cfg.geometry),
                          make_tau_field(cfg.tau, cfg.mu));
        auto state = prob.initial_state();
        if (log)
            *log << "# level " << level << '\n';
        LevelRun lr;
        lr.level = level;
        lr.elements = mesh.num_elements();
        lr.coupling_dofs = prob.dofmap().num_free();
        lr.total_dofs = ndtns_total_dofs(prob);
        lr.load = adaptive_load_stepping(prob, state, solver.newton, solver.load, log);
        ErrorRow row;
        if (lr.load.success) {
            auto ustar = postprocess_displacement(prob, state);
            row = l2_errors(prob, state, &ustar, ex);
        } else {
            row.failed = true;
            row.failed_xi = lr.load.xi;
            run.success = false;
        }
        row.h = nominal_mesh_size(cfg, level);
        run.report.rows.push_back(row);
        run.levels.push_back(lr);
    }
    return run;
}

inline InflationRun run_inflation2d_std(const InflationConfig& cfg, std::ostream* log = nullptr)
{
    SolverSettings solver = cfg.solver.value_or(default_solver_settings(cfg.mu, Method::Standard));
    InflationRun run;
    ExactSolution ex = inflation_exact_solution(cfg.gamma, cfg.mu, cfg.geometry);
    for (int level = 0; level < cfg.levels; ++level) {
        Triangulation mesh = build_quarter_annulus(cfg.geometry.r_in, cfg.geometry.r_out, level, 2, cfg.layout);
        StandardOptions opt;
        opt.order = cfg.order;
        opt.material.mu = cfg.mu;
        StandardProblem prob(mesh, opt, inflation_boundary_conditions(cfg.gamma, cfg.mu, cfg.geometry));
        auto state = prob.initial_state();
        if (log)
            *log << "# level " << level << '\n';
        LevelRun lr;
        lr.level = level;
        lr.elements = mesh.num_elements();
        lr.coupling_dofs = prob.num_free();
        lr.total_dofs = prob.num_dofs();
        lr.load = adaptive_load_stepping(prob, state, solver.newton, solver.load, log);
        ErrorRow row;
        if (lr.load.success) {
            row = prob.l2_errors(state, ex);
        } else {
            row.failed = true;
            row.failed_xi = lr.load.xi;
            run.success = false;
        }
        row.h = nominal_mesh_size(cfg, level);
        run.report.rows.push_back(row);
        run.levels.push_back(lr);
    }
    return run;
}

inline InflationRun run_inflation2d(const InflationConfig& cfg, Method method, std::ostream* log = nullptr)
{
    switch (method) {
    case Method::Ndtns: return run_inflation2d_ndtns(cfg, log);
    case Method::Standard: return run_inflation2d_std(cfg, log);
    default: throw InvalidInput("the inflation benchmark supports the ndtns and std methods");
    }
}

/// Averages a postprocessed displacement over the elements adjacent to vertex v.
inline Vec2 vertex_value(const Triangulation& mesh, const PostprocessedDisplacement& pd, int v)
{
    Vec2 sum = Vec2::Zero();
    int n = 0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        for (int a : mesh.triangles[e])
            if (a == v) {
                sum += pd.eval(e, mesh.vertices[v]);
                ++n;
            }
    if (n == 0)
        throw InvalidInput("vertex belongs to no element");
    return sum / n;
}

struct CookConfig {
    int n = 8;
    int order = 2;
    double mu = 1.0;
    double traction = 0.5;
    double scale = 0.01;
    QuadSplit split = QuadSplit::Falling;
    TauPolicy tau{TauPolicy::Kind::Cook, 100.0};
    std::optional<SolverSettings> solver;
};

struct CookRun {
    int n = 0;
    Vec2 deflection = Vec2::Zero();
    LevelRun level;
    bool success = false;
};

inline BoundaryConditions cook_boundary_conditions(double traction)
{
    BoundaryConditions bc;
    bc.normal_dirichlet = {"left"};
    bc.tangential_dirichlet = {"left"};
    if (traction != 0.0)
        bc.traction["right"] = [traction](const Vec2&) { return Vec2(0.0, traction); };
    return bc;
}

inline CookRun run_cook2d_ndtns(const CookConfig& cfg, std::ostream* log = nullptr)
{
    SolverSettings solver = cfg.solver.value_or(default_solver_settings(cfg.mu));
    Triangulation mesh = build_cook_mesh(cfg.n, cfg.scale, cfg.split);
    NdtnsOptions opt;
    opt.order = cfg.order;
    opt.material.mu = cfg.mu;
    CookRegion region{Vec2(0.0, 44.0 * cfg.scale), 10.0 * cfg.scale};
    NdtnsProblem prob(mesh, opt, cook_boundary_conditions(cfg.traction), make_tau_field(cfg.tau, cfg.mu, region));
    auto state = prob.initial_state();
    CookRun run;
    run.n = cfg.n;
    run.level.elements = mesh.num_elements();
    run.level.coupling_dofs = prob.dofmap().num_free();
    run.level.total_dofs = ndtns_total_dofs(prob);
    run.level.load = adaptive_load_stepping(prob, state, solver.newton, solver.load, log);
    run.success = run.level.load.success;
    if (run.success) {
        auto ustar = postprocess_displacement(prob, state);
        run.deflection = vertex_value(mesh, ustar, mesh.tagged_vertices.at("A"));
    }
    return run;
}

inline CookRun run_cook2d_std(const CookConfig& cfg, std::ostream* log = nullptr)
{
    SolverSettings solver = cfg.solver.value_or(default_solver_settings(cfg.mu, Method::Standard));
    Triangulation mesh = build_cook_mesh(cfg.n, cfg.scale, cfg.split);
    StandardOptions opt;
    opt.order = cfg.order;
    opt.material.mu = cfg.mu;
    StandardProblem prob(mesh, opt, cook_boundary_conditions(cfg.traction));
    auto state = prob.initial_state();
    CookRun run;
    run.n = cfg.n;
    run.level.elements = mesh.num_elements();
    run.level.coupling_dofs = prob.num_free();
    run.level.total_dofs = prob.num_dofs();
    run.level.load = adaptive_load_stepping(prob, state, solver.newton, solver.load, log);
    run.success = run.level.load.success;
    if (run.success)
        run.deflection = prob.vertex_displacement(state, mesh.tagged_vertices.at("A"));
    return run;
}

inline CookRun run_cook2d(const CookConfig& cfg, Method method, std::ostream* log = nullptr)
{
    switch (method) {
    case Method::Ndtns: return run_cook2d_ndtns(cfg, log);
    case Method::Standard: return run_cook2d_std(cfg, log);
    default: throw InvalidInput("the Cook benchmark supports the ndtns and std methods");
    }
}

/// Gradient-field load test of the small-strain system on the refined unit square.
/// Default potential: psi = x^2 y - 1/6 (zero mean).
struct PressureRobustConfig {
    int order = 2;
    int levels = 2;
    double mu = 1.0;
    ScalarField psi = [](const Vec2& x) { return x.x() * x.x() * x.y() - 1.0 / 6.0; };
    VectorField grad_psi = [](const Vec2& x) { return Vec2(2.0 * x.x() * x.y(), x.x() * x.x()); };
};

struct PressureRobustRun {
    double u_norm = 0.0;
    double p_error = 0.0;   // |p_h - P_k psi|
    int elements = 0;
    int total_dofs = 0;
};

inline PressureRobustRun run_pressure_robustness(const PressureRobustConfig& cfg)
{
    Triangulation mesh = build_unit_square(cfg.levels);
    SmallStrainProblem prob(mesh, {cfg.order, cfg.mu});
    VecX x = prob.solve(cfg.grad_psi);
    PressureRobustRun run;
    run.u_norm = prob.displacement_norm(x);
    run.p_error = prob.pressure_projection_error(x, cfg.psi);
    run.elements = mesh.num_elements();
    run.total_dofs = prob.num_dofs();
    return run;
}

inline void emit_cook(const std::vector<CookRun>& runs, ReportFormat format, std::ostream& os)
{
    auto cell = [](double v) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(5) << v;
        return c.str();
    };
    auto row = [&](const CookRun& r) -> std::array<std::string, 3> {
        if (!r.success)
            return {detail::failed_cell(r.level.load.xi), "-", std::to_string(r.level.total_dofs)};
        return {cell(r.deflection.x()), cell(r.deflection.y()), std::to_string(r.level.total_dofs)};
    };
    if (format == ReportFormat::Csv) {
        os << "n,ux_A,uy_A,dofs\n";
        for (const auto& r : runs) {
            auto c = row(r);
            os << r.n << ',' << c[0] << ',' << c[1] << ',' << c[2] << '\n';
        }
    } else {
        os << std::setw(6) << "n" << std::setw(12) << "u_x(A)" << std::setw(12) << "u_y(A)" << std::setw(10) << "dofs"
           << '\n';
        for (const auto& r : runs) {
            auto c = row(r);
            os << std::setw(6) << r.n << std::setw(12) << c[0] << std::setw(12) << c[1] << std::setw(10) << c[2] << '\n';
        }
    }
    if (!os)
        throw Error("failed to write results");
}

inline void emit_pressure_robust(const PressureRobustRun& r, ReportFormat format, std::ostream& os)
{
    if (format == ReportFormat::Csv)
        os << "elements,dofs,u_norm,p_error\n"
           << r.elements << ',' << r.total_dofs << ',' << detail::fmt_sci(r.u_norm) << ',' << detail::fmt_sci(r.p_error)
           << '\n';
    else
        os << std::setw(10) << "elements" << std::setw(10) << "dofs" << std::setw(12) << "|u_h|" << std::setw(14)
           << "|p_h-P psi|" << '\n'
           << std::setw(10) << r.elements << std::setw(10) << r.total_dofs << std::setw(12)
           << detail::fmt_sci(r.u_norm) << std::setw(14) << detail::fmt_sci(r.p_error) << '\n';
    if (!os)
        throw Error("failed to write results");
}

} // namespace ndtns
