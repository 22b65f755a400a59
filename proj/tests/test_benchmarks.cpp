#include "ndtns/benchmarks.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <sys/wait.h>

using namespace ndtns;

namespace {

Vec2 random_annulus_point(std::mt19937& rng, double r_in = 0.5, double r_out = 1.0)
{
    std::uniform_real_distribution<double> rad(r_in, r_out), ang(0.0, 0.5 * std::numbers::pi);
    double r = rad(rng), a = ang(rng);
    return r * Vec2(std::cos(a), std::sin(a));
}

Vec2 fd_divergence(const Vec2& x, double gamma, double mu, double step)
{
    Vec2 div = Vec2::Zero();
    for (int j = 0; j < 2; ++j) {
        Vec2 d = Vec2::Zero();
        d(j) = step;
        Mat2 dp = (exact_inflation_2d(x + d, gamma, mu).P - exact_inflation_2d(x - d, gamma, mu).P) / (2.0 * step);
        div += dp.col(j);
    }
    return div;
}

std::string csv_of(const InflationRun& run)
{
    std::ostringstream os;
    emit_results(run.report, ReportFormat::Csv, os);
    return os.str();
}

int run_bench(const std::string& args, const std::string& out = "")
{
    std::string cmd = std::string(NDTNS_BENCH_EXE) + " " + args + " > " + (out.empty() ? "/dev/null" : out) +
                      " 2>/dev/null";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const std::string& path)
{
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

// ---------------------------------------------------------------- exact inflation solution

TEST(ExactInflation, GammaOneIsTheReferenceState)
{
    std::mt19937 rng(1);
    for (int i = 0; i < 20; ++i) {
        auto f = exact_inflation_2d(random_annulus_point(rng), 1.0, 1.0);
        EXPECT_LT(f.u.norm(), 1e-15);
        EXPECT_LT((f.F - Mat2::Identity()).norm(), 1e-15);
        EXPECT_NEAR(f.p, 1.0, 1e-15);
        EXPECT_LT(f.P.norm(), 1e-15);
    }
}

TEST(ExactInflation, OuterBoundaryMapsToGammaRadius)
{
    for (double a : {0.0, 0.3, 1.0, 0.5 * std::numbers::pi}) {
        Vec2 x(std::cos(a), std::sin(a));
        EXPECT_NEAR((x + exact_inflation_2d(x, 2.0, 1.0).u).norm(), 2.0, 1e-14);
    }
}

TEST(ExactInflation, InnerRadiusValue)
{
    Vec2 x(0.5, 0.0);
    EXPECT_NEAR((x + exact_inflation_2d(x, 2.0, 1.0).u).norm(), std::sqrt(3.25), 1e-14);
    EXPECT_NEAR(std::sqrt(3.25), 1.802776, 1e-6);
}

TEST(ExactInflation, IncompressibleConsistentAndInEquilibrium)
{
    std::mt19937 rng(2);
    for (double mu : {1.0, 3.0})
        for (int i = 0; i < 20; ++i) {
            Vec2 x = random_annulus_point(rng);
            auto f = exact_inflation_2d(x, 2.0, mu);
            EXPECT_NEAR(f.F.determinant(), 1.0, 1e-12);
            Mat2 p_law = mu * f.F - f.p * f.F.inverse().transpose() * f.F.determinant();
            EXPECT_LT((f.P - p_law).norm(), 1e-12);
            EXPECT_LT(fd_divergence(x, 2.0, mu, 1e-5).norm(), 1e-4 * mu);
        }
}

TEST(ExactInflation, DeformationGradientMatchesDisplacementGradient)
{
    std::mt19937 rng(3);
    const double step = 1e-6;
    for (int i = 0; i < 20; ++i) {
        Vec2 x = random_annulus_point(rng);
        Mat2 grad;
        for (int j = 0; j < 2; ++j) {
            Vec2 d = Vec2::Zero();
            d(j) = step;
            grad.col(j) = (exact_inflation_2d(x + d, 2.0, 1.0).u - exact_inflation_2d(x - d, 2.0, 1.0).u) / (2 * step);
        }
        EXPECT_LT((Mat2::Identity() + grad - exact_inflation_2d(x, 2.0, 1.0).F).norm(), 1e-8);
    }
}

TEST(ExactInflation, InnerBoundaryIsTractionFree)
{
    for (double a : {0.0, 0.7, 0.5 * std::numbers::pi}) {
        Vec2 n(std::cos(a), std::sin(a));
        EXPECT_LT((exact_inflation_2d(0.5 * n, 2.0, 1.0).P * n).norm(), 1e-13);
    }
}

TEST(ExactInflation, OriginIsRejected)
{
    EXPECT_THROW(exact_inflation_2d(Vec2::Zero(), 2.0, 1.0), InvalidInput);
}

// ---------------------------------------------------------------- configuration parsing

TEST(BenchmarkConfig, TauPolicies)
{
    EXPECT_EQ(parse_tau_policy("zero").kind, TauPolicy::Kind::Zero);
    auto c = parse_tau_policy("const:100");
    EXPECT_EQ(c.kind, TauPolicy::Kind::Constant);
    EXPECT_DOUBLE_EQ(c.value, 100.0);
    auto h = parse_tau_policy("overh:2.5");
    EXPECT_EQ(h.kind, TauPolicy::Kind::OverH);
    EXPECT_DOUBLE_EQ(h.value, 2.5);
    EXPECT_EQ(parse_tau_policy("cook").kind, TauPolicy::Kind::Cook);
    for (const char* bad : {"", "const:", "const:abc", "const:-1", "overh:1x", "huge", "Zero"})
        EXPECT_THROW(parse_tau_policy(bad), InvalidInput) << bad;
}

TEST(BenchmarkConfig, Methods)
{
    EXPECT_EQ(parse_method("ndtns"), Method::Ndtns);
    EXPECT_EQ(parse_method("std"), Method::Standard);
    EXPECT_EQ(parse_method("mcs"), Method::McsSmallStrain);
    EXPECT_EQ(parse_method("mcs_small_strain"), Method::McsSmallStrain);
    EXPECT_THROW(parse_method("csmfem"), InvalidInput);
}

TEST(BenchmarkConfig, IncompatibleMethodsAreRejected)
{
    InflationConfig cfg;
    cfg.levels = 1;
    EXPECT_THROW(run_inflation2d(cfg, Method::McsSmallStrain), InvalidInput);
    EXPECT_THROW(run_cook2d(CookConfig{}, Method::McsSmallStrain), InvalidInput);
}

TEST(BenchmarkConfig, CookTauField)
{
    Triangulation mesh = build_cook_mesh(4, 0.01, QuadSplit::Falling);
    CookRegion region{Vec2(0.0, 0.44), 0.1};
    TauField tau = make_tau_field(parse_tau_policy("cook"), 2.0, region);
    int inside = 0, outside = 0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        for (int le = 0; le < 3; ++le) {
            ElementGeometry geo(mesh, e);
            Vec2 mid = geo.map(ElementGeometry::edge_point(le, 0.5));
            double v = tau(mesh, e, le);
            if ((mid - region.center).norm() < region.radius) {
                EXPECT_DOUBLE_EQ(v, 200.0 / facet_height(mesh, e, le));
                ++inside;
            } else {
                EXPECT_DOUBLE_EQ(v, 200.0);
                ++outside;
            }
        }
    EXPECT_GT(inside, 0);
    EXPECT_GT(outside, inside);
}

// ---------------------------------------------------------------- result emission

TEST(Emission, OneRowCsv)
{
    ErrorReport rep;
    ErrorRow r;
    r.h = 0.25;
    r.err_u = 7.43e-4;
    r.err_p = 1.74e-3;
    r.err_F = 5.46e-3;
    r.err_P = 7.99e-3;
    r.err_ustar = 1.11e-4;
    rep.rows.push_back(r);
    std::ostringstream os;
    emit_results(rep, ReportFormat::Csv, os);
    EXPECT_EQ(os.str(), std::string(kErrorCsvHeader) + "\n0.25,7.430e-04,-,1.740e-03,-,5.460e-03,-,7.990e-03,-,1.110e-04,-\n");
}

TEST(Emission, EocColumns)
{
    ErrorReport rep;
    for (int i = 0; i < 2; ++i) {
        ErrorRow r;
        r.h = 0.25 / (1 << i);
        r.err_u = r.err_p = r.err_F = r.err_P = std::pow(r.h, 3);
        r.err_ustar = std::pow(r.h, 4);
        rep.rows.push_back(r);
    }
    std::ostringstream os;
    emit_results(rep, ReportFormat::Csv, os);
    std::string line = os.str().substr(os.str().rfind("0.125"));
    EXPECT_EQ(line, "0.125,1.953e-03,3.00,1.953e-03,3.00,1.953e-03,3.00,1.953e-03,3.00,2.441e-04,4.00\n");
}

TEST(Emission, FailedRunCell)
{
    ErrorReport rep;
    ErrorRow r;
    r.h = 0.125;
    r.failed = true;
    r.failed_xi = 0.73;
    rep.rows.push_back(r);
    std::ostringstream csv, table;
    emit_results(rep, ReportFormat::Csv, csv);
    emit_results(rep, ReportFormat::Table, table);
    EXPECT_NE(csv.str().find(",F 0.73,"), std::string::npos);
    EXPECT_NE(table.str().find("F 0.73"), std::string::npos);

    CookRun c;
    c.n = 32;
    c.level.load.xi = 0.95;
    std::ostringstream cook;
    emit_cook({c}, ReportFormat::Csv, cook);
    EXPECT_NE(cook.str().find("32,F 0.95,-"), std::string::npos);
}

TEST(Emission, TableColumnOrder)
{
    std::ostringstream os;
    emit_results(ErrorReport{}, ReportFormat::Table, os);
    std::string head = os.str();
    std::size_t last = 0;
    for (const char* col : {"h", "|u-u_h|", "|p-p_h|", "|F-F_h|", "|P-P_h|", "|u-u*|"}) {
        std::size_t at = head.find(col, last);
        ASSERT_NE(at, std::string::npos) << col;
        last = at;
    }
}

// ---------------------------------------------------------------- benchmark drivers

TEST(InflationBenchmark, NearReferenceStretchHasNegligibleErrors)
{
    // Errors vanish with the load and scale linearly with it.
    auto errors = [](double stretch) {
        InflationConfig cfg;
        cfg.levels = 2;
        cfg.gamma = std::sqrt(1.0 + stretch);
        auto run = run_inflation2d(cfg, Method::Ndtns);
        EXPECT_TRUE(run.success);
        return run.report.rows;
    };
    auto a = errors(1e-6), b = errors(2e-6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_LT(a[i].err_u, 1e-8);
        EXPECT_LT(a[i].err_ustar, 1e-8);
        EXPECT_LT(a[i].err_p, 1e-7);
        EXPECT_NEAR(b[i].err_u / a[i].err_u, 2.0, 1e-3);
        EXPECT_NEAR(b[i].err_p / a[i].err_p, 2.0, 1e-3);
        EXPECT_NEAR(b[i].err_F / a[i].err_F, 2.0, 1e-3);
    }
}

TEST(InflationBenchmark, CoarsestLevelMatchesReference)
{
    InflationConfig cfg;
    cfg.levels = 1;
    auto run = run_inflation2d(cfg, Method::Ndtns);
    ASSERT_TRUE(run.success);
    EXPECT_NEAR(run.report.rows[0].h, 0.25, 1e-15);
    EXPECT_NEAR(run.report.rows[0].err_u, 7.43e-4, 0.25 * 7.43e-4);
}

TEST(InflationBenchmark, Deterministic)
{
    InflationConfig cfg;
    cfg.levels = 2;
    EXPECT_EQ(csv_of(run_inflation2d(cfg, Method::Ndtns)), csv_of(run_inflation2d(cfg, Method::Ndtns)));
    EXPECT_EQ(csv_of(run_inflation2d(cfg, Method::Standard)), csv_of(run_inflation2d(cfg, Method::Standard)));
}

TEST(CookBenchmark, ZeroTractionGivesZeroDeflection)
{
    for (Method m : {Method::Ndtns, Method::Standard}) {
        CookConfig cfg;
        cfg.n = 4;
        cfg.traction = 0.0;
        auto run = run_cook2d(cfg, m);
        ASSERT_TRUE(run.success);
        EXPECT_LT(run.deflection.norm(), 1e-12);
    }
}

TEST(CookBenchmark, CoarseMeshDeflections)
{
    CookConfig cfg;
    cfg.n = 4;
    auto ndtns = run_cook2d(cfg, Method::Ndtns);
    auto std_ = run_cook2d(cfg, Method::Standard);
    ASSERT_TRUE(ndtns.success && std_.success);
    EXPECT_NEAR(ndtns.deflection.x(), -0.24939, 2e-3);
    EXPECT_NEAR(ndtns.deflection.y(), 0.24071, 2e-3);
    EXPECT_NEAR(std_.deflection.x(), -0.25264, 2e-3);
    EXPECT_NEAR(std_.deflection.y(), 0.24172, 2e-3);
}

TEST(PressureRobustness, GradientLoadIsAbsorbedByPressure)
{
    auto run = run_pressure_robustness(PressureRobustConfig{});
    EXPECT_LT(run.u_norm, 1e-10);
    EXPECT_LT(run.p_error, 1e-10);
    EXPECT_GT(run.elements, 0);
}

TEST(PressureRobustness, ZeroPotential)
{
    PressureRobustConfig cfg;
    cfg.psi = [](const Vec2&) { return 0.0; };
    cfg.grad_psi = [](const Vec2&) { return Vec2::Zero(); };
    auto run = run_pressure_robustness(cfg);
    EXPECT_EQ(run.u_norm, 0.0);
    EXPECT_EQ(run.p_error, 0.0);
}

TEST(PressureRobustness, PotentialOfOrderKIsReproduced)
{
    PressureRobustConfig cfg;
    cfg.psi = [](const Vec2& x) { return x.x() * x.y() - 0.25; };
    cfg.grad_psi = [](const Vec2& x) { return Vec2(x.y(), x.x()); };
    auto run = run_pressure_robustness(cfg);
    EXPECT_LT(run.u_norm, 1e-10);
    EXPECT_LT(run.p_error, 1e-10);
}

// ---------------------------------------------------------------- command line

TEST(BenchCli, UsageErrors)
{
    EXPECT_EQ(run_bench(""), 1);
    EXPECT_EQ(run_bench("unknown"), 1);
    EXPECT_EQ(run_bench("inflate2d --tau bogus"), 1);
    EXPECT_EQ(run_bench("inflate2d --method mcs"), 1);
    EXPECT_EQ(run_bench("pressure_robust --method ndtns"), 1);
    EXPECT_EQ(run_bench("inflate2d --mu -1"), 1);
    EXPECT_EQ(run_bench("inflate2d --order 5"), 1);
    EXPECT_EQ(run_bench("cook2d --method std --tau const:1"), 1);
    EXPECT_EQ(run_bench("inflate2d --out /nonexistent/dir/out.csv"), 1);
    EXPECT_EQ(run_bench("--help"), 0);
}

TEST(BenchCli, WritesCsv)
{
    auto dir = std::filesystem::temp_directory_path();
    std::string out = (dir / "ndtns_bench_inflation.csv").string();
    std::string dofs = (dir / "ndtns_bench_dofs.txt").string();
    std::remove(out.c_str());
    ASSERT_EQ(run_bench("inflate2d --levels 1 --out " + out + " --report-dofs", dofs), 0);
    std::string csv = read_file(out);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), kErrorCsvHeader);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    EXPECT_NE(read_file(dofs).find("# level elements coupling_dofs total_dofs"), std::string::npos);

    std::string pr = (dir / "ndtns_bench_pr.csv").string();
    ASSERT_EQ(run_bench("pressure_robust --method mcs --out " + pr), 0);
    EXPECT_EQ(read_file(pr).rfind("elements,dofs,u_norm,p_error\n", 0), 0u);
}
