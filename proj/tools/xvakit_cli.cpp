#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "xvakit/scenario.hpp"
#include "xvakit/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kBadInput = 2;
constexpr int kNotConverged = 3;

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Wall-clock and provenance live here so the report files stay byte-identical
/// across reruns of the same scenario and seed.
void write_meta(const std::filesystem::path& dir, const std::string& scenario, double elapsed) {
    nlohmann::ordered_json meta;
    meta["generated_at"] = utc_now();
    meta["elapsed_seconds"] = elapsed;
    if (!scenario.empty()) meta["scenario"] = scenario;
    write_file(dir / "meta.json", meta.dump(2) + "\n");
}

int run_verify(const std::filesystem::path& dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const xvakit::VerifySummary summary = xvakit::run_acceptance(&std::cout);
    write_file(dir / "verify_report.json", xvakit::verify_to_json(summary));
    write_meta(dir, "", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::cout << "wrote " << (dir / "verify_report.json").string() << std::endl;
    return summary.all_passed() ? kOk : kNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Valuation of collateralized bilateral contracts under differential funding rates"};
    app.get_formatter()->column_width(28);

    std::string scenario_path, out_dir = ".", format = "json";
    std::string mode, solver;
    std::uint64_t paths = 0, steps = 0, seed = 0, workers = 0;
    bool verify = false;

    app.add_option("--scenario", scenario_path, "Scenario JSON file")->check(CLI::ExistingFile);
    app.add_option("--mode", mode, "Override run.mode (linear|nonlinear|incomplete|verify)")
        ->check(CLI::IsMember({"linear", "nonlinear", "incomplete", "verify"}));
    app.add_option("--solver", solver, "Override run.solver for nonlinear mode (picard|bsde)")
        ->check(CLI::IsMember({"picard", "bsde"}));
    auto* opt_paths = app.add_option("--paths", paths, "Override run.paths");
    auto* opt_steps = app.add_option("--steps", steps, "Override run.steps");
    auto* opt_seed = app.add_option("--seed", seed, "Override run.seed");
    auto* opt_workers = app.add_option("--workers", workers, "Override run.workers (0: XVAKIT_WORKERS or all cores)");
    app.add_option("--out", out_dir, "Output directory (created if absent)");
    app.add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "csv", "both"}));
    app.add_flag("--verify", verify, "Run the acceptance matrix and write verify_report.json");

    CLI11_PARSE(app, argc, argv);

    try {
        const std::filesystem::path dir(out_dir);
        std::filesystem::create_directories(dir);

        if (verify || mode == "verify") return run_verify(dir);

        if (scenario_path.empty()) {
            std::cerr << "error: --scenario is required unless --verify is given" << std::endl;
            return kBadInput;
        }

        xvakit::Scenario sc = xvakit::load_scenario(scenario_path);
        if (!mode.empty()) sc.mode = mode;
        if (!solver.empty()) sc.nonlinear_solver = solver;
        if (*opt_paths) sc.run.paths = paths;
        if (*opt_steps) sc.run.steps = steps;
        if (*opt_seed) sc.run.seed = seed;
        if (*opt_workers) sc.run.workers = workers;
        if (sc.run.paths == 0 || sc.run.steps == 0) {
            std::cerr << "error: paths and steps must be positive" << std::endl;
            return kBadInput;
        }
        if (sc.mode == "verify") return run_verify(dir);

        const auto t0 = std::chrono::steady_clock::now();
        const xvakit::ValuationReport rep = xvakit::run_scenario(sc);
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        for (const std::string& w : rep.warnings) std::cerr << "warning: " << w << std::endl;

        if (format == "json" || format == "both") write_file(dir / "report.json", xvakit::report_to_json(rep));
        if (format == "csv" || format == "both") write_file(dir / "report.csv", xvakit::report_to_csv(rep));
        write_meta(dir, scenario_path, elapsed);

        std::cout << "mode " << rep.mode << " (" << rep.measure << "), " << rep.paths << " paths, "
                  << rep.grid_cells << " cells" << std::endl;
        std::cout << "price " << rep.price.value << " (se " << rep.price.se << ")" << std::endl;
        std::cout << "wrote " << (dir / (format == "csv" ? "report.csv" : "report.json")).string()
                  << std::endl;
        if (!rep.converged) {
            std::cerr << "error: iteration did not converge; report written for inspection" << std::endl;
            return kNotConverged;
        }
        return kOk;
    } catch (const xvakit::ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << std::endl;
        return kBadInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kBadInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kBadInput;
    }
}
