#pragma once

#include "ndtns/assembly.hpp"
#include "ndtns/material.hpp"
#include "ndtns/ndtns_problem.hpp"
#include "ndtns/polynomials.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace ndtns {

/// Closed-form fields used as reference in error norms.
struct ExactSolution {
    std::function<Vec2(const Vec2&)> u;
    std::function<double(const Vec2&)> p;
    std::function<Mat2(const Vec2&)> F;
    std::function<Mat2(const Vec2&)> P;
};

/// Discrete fields of an NDTNS state at one point.
struct FieldValues {
    Vec2 x;
    double w = 0.0;
    Vec2 u;
    Mat2 F;
    Mat2 P;      // full stress, spherical part recovered in the reduced layout
    double p = 0.0;
};

/// Spherical stress part (1/2) tr(mu F - p C'(J) cof F) I.
inline Mat2 spherical_stress(const Mat2& f, double p, const MaterialParams& m)
{
    Mat2 full = piola_stress({f, p}, m);
    return 0.5 * full.trace() * Mat2::Identity();
}

/// Evaluates u, F, P and p of element e at the points of `rule`.
inline std::vector<FieldValues> evaluate_fields(const NdtnsProblem& prob, const NdtnsProblem::State& s, int e,
                                                const QuadratureRule& rule)
{
    const auto& l = prob.layout();
    VecX c = prob.local_coefficients(s, e);
    std::vector<FieldValues> out;
    for (const auto& vp : volume_points(prob.mesh(), e, l, rule)) {
        FieldValues fv;
        fv.x = vp.x;
        fv.w = vp.w;
        fv.u = Vec2::Zero();
        for (int i = 0; i < l.n_rt(); ++i)
            fv.u += c(l.rt_index(i)) * vp.u.row(i).transpose();
        fv.F = unflatten(f_map(vp, l) * c + Vec4(1, 0, 0, 1));
        fv.P = unflatten(vp.P.transpose() * c.segment(l.P, l.n_P));
        fv.p = vp.p.dot(c.segment(l.p, l.n_p));
        if (l.reduced)
            fv.P += spherical_stress(fv.F, fv.p, prob.options().material);
        out.push_back(fv);
    }
    return out;
}

/// Full stress P_dev + P_sph at the element quadrature points.
inline std::vector<Mat2> recover_spherical_stress(const NdtnsProblem& prob, const NdtnsProblem::State& s, int e)
{
    bool curved = prob.mesh().is_curved(e);
    std::vector<Mat2> out;
    for (const auto& fv : evaluate_fields(prob, s, e, triangle_rule(element_quadrature_degree(prob.layout().k, curved))))
        out.push_back(fv.P);
    return out;
}

/// Element-wise polynomial of degree k+1 in scaled physical coordinates.
struct PostprocessedDisplacement {
    int degree = 3;
    std::vector<Vec2> center;
    std::vector<double> scale;
    std::vector<MatX> coeffs; // per element: nmono x 2

    Vec2 eval(int e, const Vec2& x) const
    {
        auto m = eval_monomials(degree, (x - center[e]) / scale[e]);
        return coeffs[e].transpose() * m.v;
    }
};

/// Local solve: int Grad u* : Grad v = int (F_h - I) : Grad v for v in P^{k+1}, int u* = int u_h.
inline PostprocessedDisplacement postprocess_displacement(const NdtnsProblem& prob, const NdtnsProblem::State& s)
{
    const Triangulation& mesh = prob.mesh();
    const int k = prob.layout().k;
    PostprocessedDisplacement pd;
    pd.degree = k + 1;
    const int nm = num_monomials(pd.degree);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        Vec2 c = Vec2::Zero();
        for (int v : mesh.triangles[e])
            c += mesh.vertices[v] / 3.0;
        double h = element_diameter(mesh, e);
        bool curved = mesh.is_curved(e);
        auto fields = evaluate_fields(prob, s, e, triangle_rule(2 * k + 2 + (curved ? 2 : 0)));
        MatX a = MatX::Zero(nm + 1, nm + 1);
        MatX rhs = MatX::Zero(nm + 1, 2);
        for (const auto& fv : fields) {
            auto m = eval_monomials(pd.degree, (fv.x - c) / h);
            MatX grad(nm, 2);
            grad.col(0) = m.dx / h;
            grad.col(1) = m.dy / h;
            a.topLeftCorner(nm, nm) += fv.w * grad * grad.transpose();
            a.block(0, nm, nm, 1) += fv.w * m.v;
            a.block(nm, 0, 1, nm) += fv.w * m.v.transpose();
            Mat2 g = fv.F - Mat2::Identity();
            for (int comp = 0; comp < 2; ++comp) {
                rhs.block(0, comp, nm, 1) += fv.w * grad * g.row(comp).transpose();
                rhs(nm, comp) += fv.w * fv.u(comp);
            }
        }
        Eigen::FullPivLU<MatX> lu(a);
        if (!lu.isInvertible())
            throw Error("singular postprocessing system in element " + std::to_string(e));
        MatX x = lu.solve(rhs);
        pd.center.push_back(c);
        pd.scale.push_back(h);
        pd.coeffs.push_back(x.topRows(nm));
    }
    return pd;
}

/// One row of a convergence table.
struct ErrorRow {
    double h = 0.0;
    double err_u = 0.0, err_p = 0.0, err_F = 0.0, err_P = 0.0, err_ustar = std::nan("");
    bool failed = false;
    double failed_xi = 0.0;
};

struct ErrorReport {
    std::vector<ErrorRow> rows;
};

inline double eoc(double e_prev, double e, double h_prev, double h) { return std::log(e_prev / e) / std::log(h_prev / h); }

/// L2 errors of an NDTNS state against the exact fields (quadrature degree 2k+4).
inline ErrorRow l2_errors(const NdtnsProblem& prob, const NdtnsProblem::State& s, const PostprocessedDisplacement* ustar,
                          const ExactSolution& ex)
{
    const Triangulation& mesh = prob.mesh();
    const int k = prob.layout().k;
    auto rule = triangle_rule(2 * k + 4);
    ErrorRow r;
    r.h = max_edge_length(mesh);
    double eu = 0, ep = 0, ef = 0, eP = 0, es = 0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        for (const auto& fv : evaluate_fields(prob, s, e, rule)) {
            eu += fv.w * (fv.u - ex.u(fv.x)).squaredNorm();
            ep += fv.w * std::pow(fv.p - ex.p(fv.x), 2);
            ef += fv.w * (fv.F - ex.F(fv.x)).squaredNorm();
            eP += fv.w * (fv.P - ex.P(fv.x)).squaredNorm();
            if (ustar)
                es += fv.w * (ustar->eval(e, fv.x) - ex.u(fv.x)).squaredNorm();
        }
    r.err_u = std::sqrt(eu);
    r.err_p = std::sqrt(ep);
    r.err_F = std::sqrt(ef);
    r.err_P = std::sqrt(eP);
    r.err_ustar = ustar ? std::sqrt(es) : std::nan("");
    return r;
}

/// L2 norm of a scalar field over the mesh geometry (quadrature degree `degree`).
inline double l2_norm(const Triangulation& mesh, const std::function<double(const Vec2&)>& f, int degree = 8)
{
    auto rule = triangle_rule(degree);
    double sum = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        ElementGeometry geo(mesh, e);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            double w = rule.weights[q] * geo.jacobian(rule.points[q]).determinant();
            sum += w * std::pow(f(geo.map(rule.points[q])), 2);
        }
    }
    return std::sqrt(sum);
}

struct JacobianReport {
    double j_min = 1.0, j_max = 1.0, j0_min = 1.0, j0_max = 1.0;
};

inline JacobianReport jacobian_report(const NdtnsProblem& prob, const NdtnsProblem::State& s)
{
    JacobianReport r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                     std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& j : prob.jacobian_stats(s)) {
        r.j_min = std::min(r.j_min, j.min);
        r.j_max = std::max(r.j_max, j.max);
        r.j0_min = std::min(r.j0_min, j.mean);
        r.j0_max = std::max(r.j0_max, j.mean);
    }
    return r;
}

namespace detail {

inline std::string fmt_sci(double v)
{
    if (std::isnan(v))
        return "";
    std::ostringstream os;
    os << std::scientific << std::setprecision(3) << v;
    return os.str();
}

inline std::string fmt_eoc(double v)
{
    if (std::isnan(v))
        return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

inline std::string failed_cell(double xi)
{
    std::ostringstream os;
    os << "F " << std::fixed << std::setprecision(2) << xi;
    return os.str();
}

/// Cells in CSV column order after h: error, e.o.c. for each of the five quantities.
inline std::vector<std::string> row_cells(const ErrorReport& rep, std::size_t i)
{
    const ErrorRow& r = rep.rows[i];
    std::vector<std::string> cells;
    auto errs = [](const ErrorRow& x) {
        return std::array<double, 5>{x.err_u, x.err_p, x.err_F, x.err_P, x.err_ustar};
    };
    auto cur = errs(r);
    for (int q = 0; q < 5; ++q) {
        if (r.failed) {
            cells.push_back(failed_cell(r.failed_xi));
            cells.push_back("-");
            continue;
        }
        cells.push_back(fmt_sci(cur[q]));
        double o = std::nan("");
        if (i > 0 && !rep.rows[i - 1].failed) {
            auto prev = errs(rep.rows[i - 1]);
            if (prev[q] > 0 && cur[q] > 0)
                o = eoc(prev[q], cur[q], rep.rows[i - 1].h, r.h);
        }
        cells.push_back(std::isnan(cur[q]) ? "" : fmt_eoc(o));
    }
    return cells;
}

} // namespace detail

inline constexpr const char* kErrorCsvHeader = "h,err_u,eoc_u,err_p,eoc_p,err_F,eoc_F,err_P,eoc_P,err_ustar,eoc_ustar";

enum class ReportFormat { Csv, Table };

inline void emit_results(const ErrorReport& rep, ReportFormat format, std::ostream& os)
{
    if (format == ReportFormat::Csv) {
        os << kErrorCsvHeader << '\n';
        for (std::size_t i = 0; i < rep.rows.size(); ++i) {
            std::ostringstream h;
            h << std::setprecision(6) << rep.rows[i].h;
            os << h.str();
            for (const auto& c : detail::row_cells(rep, i))
                os << ',' << c;
            os << '\n';
        }
    } else {
        const char* heads[] = {"h", "|u-u_h|", "e.o.c", "|p-p_h|", "e.o.c", "|F-F_h|", "e.o.c",
                               "|P-P_h|", "e.o.c", "|u-u*|", "e.o.c"};
        for (auto* hd : heads)
            os << std::setw(11) << hd;
        os << '\n';
        for (std::size_t i = 0; i < rep.rows.size(); ++i) {
            std::ostringstream h;
            h << std::setprecision(4) << rep.rows[i].h;
            os << std::setw(11) << h.str();
            for (const auto& c : detail::row_cells(rep, i))
                os << std::setw(11) << c;
            os << '\n';
        }
    }
    if (!os)
        throw Error("failed to write results");
}

} // namespace ndtns
