#include "ndtns/benchmarks.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>

namespace {

enum Exit { kOk = 0, kUsage = 1, kSolverFailure = 2 };

struct Options {
    std::string problem;
    std::string method = "ndtns";
    int order = 2;
    int levels = 4;
    double gamma = 2.0;
    std::string tau;
    double mu = 1.0;
    std::string out;
    std::string format = "csv";
    bool report_dofs = false;
    bool seed_log = false;
};

void report_dofs(std::ostream& os, const std::vector<ndtns::LevelRun>& levels)
{
    os << "# level elements coupling_dofs total_dofs\n";
    for (const auto& l : levels)
        os << "# " << l.level << ' ' << l.elements << ' ' << l.coupling_dofs << ' ' << l.total_dofs << '\n';
}

} // namespace

int main(int argc, char** argv)
{
    Options o;
    CLI::App app{"Benchmarks for mixed finite elements in incompressible finite elasticity"};
    app.add_option("problem", o.problem, "inflate2d | cook2d | pressure_robust")
        ->required()
        ->check(CLI::IsMember({"inflate2d", "cook2d", "pressure_robust"}));
    app.add_option("--method", o.method, "ndtns | std | mcs")->capture_default_str();
    app.add_option("--order", o.order, "polynomial order k")->capture_default_str()->check(CLI::Range(1, 2));
    app.add_option("--levels", o.levels, "number of meshes (refinements, or Cook n = 4, 8, ...)")
        ->capture_default_str()
        ->check(CLI::Range(1, 8));
    app.add_option("--gamma", o.gamma, "outer radius stretch of the inflation")->capture_default_str();
    app.add_option("--tau", o.tau, "zero | const:<c> | overh:<c> | cook (default: zero, cook for cook2d)");
    app.add_option("--mu", o.mu, "shear modulus")->capture_default_str();
    app.add_option("--out", o.out, "output file (default: stdout)");
    app.add_option("--format", o.format, "csv | table")->capture_default_str()->check(CLI::IsMember({"csv", "table"}));
    app.add_flag("--report-dofs", o.report_dofs, "print element and DoF counts per mesh");
    app.add_flag("--seed-log", o.seed_log, "echo the configuration and solver step log to stderr");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    ndtns::Method method;
    ndtns::TauPolicy tau;
    try {
        method = ndtns::parse_method(o.method);
        if (!o.tau.empty())
            tau = ndtns::parse_tau_policy(o.tau);
        else if (o.problem == "cook2d")
            tau = ndtns::parse_tau_policy("cook");
        if (!(o.mu > 0.0) || !(o.gamma > 0.0))
            throw ndtns::InvalidInput("mu and gamma must be positive");
        if (o.problem == "pressure_robust" && method != ndtns::Method::McsSmallStrain)
            throw ndtns::InvalidInput("pressure_robust requires --method mcs");
        if (o.problem != "pressure_robust" && method == ndtns::Method::McsSmallStrain)
            throw ndtns::InvalidInput(o.problem + " supports the ndtns and std methods");
        if (method == ndtns::Method::Standard && tau.kind != ndtns::TauPolicy::Kind::Zero && !o.tau.empty())
            throw ndtns::InvalidInput("--tau applies to the ndtns method only");
    } catch (const ndtns::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }

    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!o.out.empty()) {
        file.open(o.out);
        if (!file) {
            std::cerr << "error: cannot open '" << o.out << "' for writing\n";
            return kUsage;
        }
        os = &file;
    }
    const auto format = o.format == "csv" ? ndtns::ReportFormat::Csv : ndtns::ReportFormat::Table;
    std::ostream* log = o.seed_log ? &std::cerr : nullptr;
    if (log) {
        *log << "# problem=" << o.problem << " method=" << o.method << " order=" << o.order << " levels=" << o.levels
             << " gamma=" << o.gamma << " tau=" << (o.tau.empty() ? "default" : o.tau) << " mu=" << o.mu << '\n';
        *log << "# step xi dxi n_it residual J0_min J0_max\n";
    }

    try {
        if (o.problem == "inflate2d") {
            ndtns::InflationConfig cfg;
            cfg.order = o.order;
            cfg.levels = o.levels;
            cfg.gamma = o.gamma;
            cfg.mu = o.mu;
            cfg.tau = tau;
            auto run = ndtns::run_inflation2d(cfg, method, log);
            ndtns::emit_results(run.report, format, *os);
            if (o.report_dofs)
                report_dofs(std::cout, run.levels);
            return run.success ? kOk : kSolverFailure;
        }
        if (o.problem == "cook2d") {
            std::vector<ndtns::CookRun> runs;
            bool ok = true;
            for (int l = 0; l < o.levels && ok; ++l) {
                ndtns::CookConfig cfg;
                cfg.n = 4 << l;
                cfg.order = o.order;
                cfg.mu = o.mu;
                cfg.tau = tau;
                if (log)
                    *log << "# n " << cfg.n << '\n';
                runs.push_back(ndtns::run_cook2d(cfg, method, log));
                runs.back().level.level = l;
                ok = runs.back().success;
            }
            ndtns::emit_cook(runs, format, *os);
            if (o.report_dofs) {
                std::vector<ndtns::LevelRun> levels;
                for (const auto& r : runs)
                    levels.push_back(r.level);
                report_dofs(std::cout, levels);
            }
            return ok ? kOk : kSolverFailure;
        }
        ndtns::PressureRobustConfig cfg;
        cfg.order = o.order;
        cfg.levels = o.levels;
        cfg.mu = o.mu;
        auto run = ndtns::run_pressure_robustness(cfg);
        ndtns::emit_pressure_robust(run, format, *os);
        if (o.report_dofs)
            std::cout << "# elements " << run.elements << " total_dofs " << run.total_dofs << '\n';
        return kOk;
    } catch (const ndtns::InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ndtns::Error& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return kSolverFailure;
    }
}
