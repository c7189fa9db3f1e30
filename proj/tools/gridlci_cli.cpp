// gridlci: command-line front end for case validation, power flow, stress
// sweeps and scenario analysis of the local computation index.

#include "gridlci/gridlci.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;
using namespace gridlci;

namespace
{

enum Exit : int
{
    Ok = 0,
    Usage = 1,
    Input = 2,
    Numerical = 3,
    Internal = 4
};

class UsageError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

int exit_code(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::InvalidArgument:
        return Usage;
    case ErrorKind::Diverged:
    case ErrorKind::SingularJacobian:
    case ErrorKind::BaseCaseDiverged:
    case ErrorKind::NotConverged:
    case ErrorKind::ImaginaryRadius:
    case ErrorKind::NoIntersection:
    case ErrorKind::ConcentricCircles:
    case ErrorKind::DegenerateLine:
    case ErrorKind::BothLinear:
    case ErrorKind::ZeroSusceptance:
        return Numerical;
    default:
        return Input;
    }
}

bool verbose = false;

void log(const std::string& message) { std::cerr << "gridlci: " << message << '\n'; }

void debug(const std::string& message)
{
    if (verbose) {
        log(message);
    }
}

void write_output(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path);
    }
    out << text;
    if (!out) {
        throw Error(ErrorKind::InvalidArgument, "failed writing " + path);
    }
}

struct Common
{
    std::string case_path;
    std::vector<int> buses;
    double tol = 1e-8;
    int max_iter = 30;
    bool enforce_q_limits = false;
    std::string out;
    std::string format = "csv";

    SolveOptions solve_options() const
    {
        SolveOptions o;
        o.tol = tol;
        o.max_iter = max_iter;
        o.enforce_q_limits = enforce_q_limits;
        return o;
    }
};

std::vector<int> check_buses(const GridCase& grid, const std::vector<int>& buses)
{
    const auto index = make_bus_index(grid);
    for (int b : buses) {
        if (!index->contains(b)) {
            throw Error(ErrorKind::UnknownBus, "bus " + std::to_string(b) + " is not in the case");
        }
    }
    return buses_of_interest(grid, buses);
}

// ---------------------------------------------------------------------------

int cmd_validate(const Common& c)
{
    const GridCase grid = load_case(c.case_path);
    auto problems = diagnose(grid);
    if (problems.empty()) {
        try {
            const auto y = build_ybus(grid);
            for (const auto& bus : grid.buses) {
                if (bus.kind == BusKind::PQ && y.row(y.buses().at(bus.id)).empty()) {
                    problems.push_back("PQ bus " + std::to_string(bus.id) + " has no branches");
                }
            }
        } catch (const Error& e) {
            problems.push_back(e.what());
        }
    }
    std::size_t pv = 0;
    std::size_t pq = 0;
    for (const auto& bus : grid.buses) {
        pv += bus.kind == BusKind::PV;
        pq += bus.kind == BusKind::PQ;
    }
    std::cout << c.case_path << ": " << grid.buses.size() << " buses (" << pv << " PV, " << pq << " PQ), "
              << grid.branches.size() << " branches, " << grid.generators.size() << " generators\n";
    for (const auto& p : problems) {
        std::cout << "  problem: " << p << '\n';
    }
    if (!problems.empty()) {
        log(std::to_string(problems.size()) + " problem(s)");
        return Input;
    }
    std::cout << "  ok\n";
    return Ok;
}

int cmd_solve(const Common& c, double lambda)
{
    const GridCase grid = scale_case(load_case(c.case_path), lambda);
    validate(grid);
    const auto result = solve(grid, c.solve_options());
    debug("converged in " + std::to_string(result.iterations) + " iterations, mismatch " +
          format_double(result.max_mismatch));
    auto snap = result.snapshot;
    snap.time = lambda;
    SnapshotSeries series{c.case_path, "solve", {std::move(snap)}};
    write_output(c.out, write_snapshot_csv(series));
    return Ok;
}

struct SweepOptions
{
    double lambda_start = 1.0;
    double step = 0.05;
    double min_step = 1e-4;
    std::string snapshots_out;
    bool sigma = false;
};

int cmd_sweep(const Common& c, const SweepOptions& s)
{
    if (!(s.min_step > 0.0) || !(s.step > s.min_step)) {
        throw UsageError("--step must exceed --min-step and --min-step must be positive");
    }
    const GridCase grid = load_case(c.case_path);
    validate(grid);
    const auto buses = check_buses(grid, c.buses);
    const auto y = build_ybus(grid);

    const auto sweep = stress_sweep(grid, s.lambda_start, s.step, s.min_step, c.solve_options());
    debug(std::to_string(sweep.points.size()) + " converged points");

    std::vector<NeighborView> views;
    for (int b : buses) {
        views.push_back(neighbor_view(y, b));
    }
    struct Row
    {
        double lambda;
        double load_mw;
        double sigma;
        std::vector<LciValue> values;
    };
    std::vector<Row> rows;
    for (const auto& point : sweep.points) {
        Row row{point.lambda, total_load(scale_case(grid, point.lambda)) * grid.base_mva,
                std::numeric_limits<double>::quiet_NaN(), {}};
        if (s.sigma) {
            row.sigma = smallest_singular_values(jacobian(scale_case(grid, point.lambda), point.snapshot), 1).front();
        }
        for (const auto& v : views) {
            row.values.push_back(lci(v, point.snapshot));
        }
        rows.push_back(std::move(row));
    }

    const auto& last = rows.back();
    std::size_t arg = 0;
    for (std::size_t i = 1; i < last.values.size(); ++i) {
        if (last.values[i].lci < last.values[arg].lci) {
            arg = i;
        }
    }
    const int critical_bus = last.values.empty() ? 0 : buses[arg];
    const double critical_lci = last.values.empty() ? 0.0 : last.values[arg].lci;

    std::string text;
    if (c.format == "json") {
        nlohmann::json doc;
        doc["case"] = c.case_path;
        doc["lambda_max"] = sweep.lambda_max;
        doc["max_load_mw"] = last.load_mw;
        doc["critical_bus"] = critical_bus;
        doc["critical_lci"] = critical_lci;
        doc["points"] = nlohmann::json::array();
        for (const auto& row : rows) {
            nlohmann::json p{{"lambda", row.lambda}, {"total_load_mw", row.load_mw}};
            if (s.sigma) {
                p["sigma_min"] = row.sigma;
            }
            nlohmann::json values = nlohmann::json::object();
            for (std::size_t i = 0; i < buses.size(); ++i) {
                values[std::to_string(buses[i])] = row.values[i].lci;
            }
            p["lci"] = std::move(values);
            doc["points"].push_back(std::move(p));
        }
        text = canonical_json(doc);
    } else {
        text = "lambda,total_load_mw";
        if (s.sigma) {
            text += ",sigma_min";
        }
        for (int b : buses) {
            text += ",lci_" + std::to_string(b);
        }
        text += '\n';
        for (const auto& row : rows) {
            text += format_double(row.lambda) + "," + format_double(row.load_mw);
            if (s.sigma) {
                text += "," + format_double(row.sigma);
            }
            for (const auto& v : row.values) {
                text += "," + format_double(v.lci);
            }
            text += '\n';
        }
    }
    write_output(c.out, text);

    if (!s.snapshots_out.empty()) {
        SnapshotSeries series{c.case_path, "sweep", {}};
        for (const auto& point : sweep.points) {
            series.snapshots.push_back(point.snapshot);
        }
        write_output(s.snapshots_out, write_snapshot_csv(series));
    }

    char summary[256];
    std::snprintf(summary, sizeof summary, "lambda_max %.6f (%.2f MW), critical bus %d (lci %.6f)\n",
                  sweep.lambda_max, last.load_mw, critical_bus, critical_lci);
    if (c.out.empty() || c.out == "-") {
        std::cerr << summary;
    } else {
        std::cout << summary;
    }
    return Ok;
}

struct VslaOptions
{
    std::vector<std::string> snapshots;
    double zmin = -2.0;
    bool sample_std = false;
    unsigned jobs = 1;
    std::string stats_out;
    std::string histogram_out;
    std::size_t bins = 20;
};

std::vector<fs::path> snapshot_files(const std::vector<std::string>& inputs)
{
    std::vector<fs::path> files;
    for (const auto& input : inputs) {
        const fs::path p(input);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& entry : fs::directory_iterator(p)) {
                if (entry.is_regular_file() && entry.path().extension() == ".csv") {
                    found.push_back(entry.path());
                }
            }
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else if (fs::is_regular_file(p)) {
            files.push_back(p);
        } else {
            throw Error(ErrorKind::InvalidCase, "no such snapshot file or directory: " + input);
        }
    }
    if (files.empty()) {
        throw Error(ErrorKind::EmptyInput, "no snapshot CSV files found");
    }
    return files;
}

int cmd_vsla(const Common& c, const VslaOptions& v)
{
    const GridCase grid = load_case(c.case_path);
    validate(grid);
    check_buses(grid, c.buses);
    const auto y = build_ybus(grid);
    const auto files = snapshot_files(v.snapshots);

    ReportOptions opts;
    opts.z_threshold = v.zmin;
    opts.std_kind = v.sample_std ? StdKind::Sample : StdKind::Population;
    opts.bus_filter = c.buses;

    std::vector<std::optional<ScenarioReport>> reports(files.size());
    std::vector<std::exception_ptr> failures(files.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < files.size(); i = next++) {
            try {
                auto series = read_snapshot_csv(read_file(files[i].string()), grid, c.case_path,
                                                files[i].stem().string());
                reports[i] = analyze_scenario(y, grid, series, opts);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    const unsigned jobs = std::max(1u, std::min<unsigned>(v.jobs, static_cast<unsigned>(files.size())));
    std::vector<std::thread> pool;
    for (unsigned j = 1; j < jobs; ++j) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (failures[i]) {
            try {
                std::rethrow_exception(failures[i]);
            } catch (const Error& e) {
                throw Error(e.kind(), files[i].string() + ": " + e.what());
            }
        }
    }

    std::vector<ScenarioReport> done;
    for (auto& r : reports) {
        done.push_back(std::move(*r));
    }
    std::stable_sort(done.begin(), done.end(),
                     [](const ScenarioReport& a, const ScenarioReport& b) { return a.scenario_id < b.scenario_id; });
    for (std::size_t i = 1; i < done.size(); ++i) {
        if (done[i].scenario_id == done[i - 1].scenario_id) {
            throw Error(ErrorKind::SemanticError, "duplicate scenario id " + done[i].scenario_id);
        }
    }
    const ScenarioReport agg = aggregate_scenarios(done);
    for (const auto& r : done) {
        for (const auto& w : r.warnings) {
            log(r.scenario_id + ": " + w);
        }
    }

    if (c.format == "json") {
        nlohmann::json doc{{"case", c.case_path}, {"aggregate", report_to_json(agg)}};
        doc["scenarios"] = nlohmann::json::array();
        for (const auto& r : done) {
            doc["scenarios"].push_back(report_to_json(r));
        }
        write_output(c.out, canonical_json(doc));
    } else {
        auto all = done;
        all.push_back(agg);
        write_output(c.out, reports_to_csv(all));
    }
    if (!v.stats_out.empty()) {
        write_output(v.stats_out, stats_to_csv(agg));
    }
    if (!v.histogram_out.empty()) {
        std::vector<double> values;
        for (const auto& r : done) {
            for (const auto& [bus, crit] : r.per_bus_critical) {
                values.push_back(crit.lci);
            }
        }
        write_output(v.histogram_out, histogram_to_tsv(histogram(values, v.bins)));
    }
    log("system critical " + format_double(agg.system_critical) + " at bus " + std::to_string(agg.critical_location) +
        " over " + std::to_string(done.size()) + " scenario(s); " + std::to_string(agg.critical_set.size()) +
        " critical bus(es)");
    return Ok;
}

void add_solver_flags(CLI::App* cmd, Common& c)
{
    cmd->add_option("--tol", c.tol, "Newton mismatch tolerance (per unit)")->check(CLI::PositiveNumber);
    cmd->add_option("--max-iter", c.max_iter, "Newton iteration limit")->check(CLI::PositiveNumber);
    cmd->add_flag("--enforce-q-limits", c.enforce_q_limits, "Switch generators to PQ at reactive limits");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Voltage-stability location analysis with the local computation index"};
    app.require_subcommand(1);
    app.add_flag("-v,--verbose", verbose, "Log progress to standard error");

    Common common;
    SweepOptions sweep_opts;
    VslaOptions vsla_opts;
    double lambda = 1.0;

    auto* validate_cmd = app.add_subcommand("validate", "Parse a case and report invariant violations");
    validate_cmd->add_option("--case", common.case_path, "MATPOWER .m or native .json case")->required();

    auto* solve_cmd = app.add_subcommand("solve", "Solve the power flow and write a snapshot CSV");
    solve_cmd->add_option("--case", common.case_path, "Case file")->required();
    solve_cmd->add_option("--lambda", lambda, "Load and generation multiplier")->check(CLI::NonNegativeNumber);
    solve_cmd->add_option("--out", common.out, "Output file (default: standard output)");
    add_solver_flags(solve_cmd, common);

    auto* sweep_cmd = app.add_subcommand("sweep", "Stress the case to the last converged load level");
    sweep_cmd->add_option("--case", common.case_path, "Case file")->required();
    sweep_cmd->add_option("--lambda-start", sweep_opts.lambda_start, "Initial multiplier")
        ->check(CLI::NonNegativeNumber);
    sweep_cmd->add_option("--step", sweep_opts.step, "Initial multiplier step");
    sweep_cmd->add_option("--min-step", sweep_opts.min_step, "Stop once the halved step falls below this");
    sweep_cmd->add_option("--buses", common.buses, "Buses to report (default: all PQ buses)")->delimiter(',');
    sweep_cmd->add_option("--out", common.out, "Output file (default: standard output)");
    sweep_cmd->add_option("--format", common.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sweep_cmd->add_option("--snapshots-out", sweep_opts.snapshots_out, "Also write the sweep as a snapshot CSV");
    sweep_cmd->add_flag("--sigma", sweep_opts.sigma, "Add the smallest Jacobian singular value per step");
    add_solver_flags(sweep_cmd, common);

    auto* vsla_cmd = app.add_subcommand("vsla", "Critical buses across snapshot scenarios");
    vsla_cmd->add_option("--case", common.case_path, "Case file")->required();
    vsla_cmd->add_option("--snapshots", vsla_opts.snapshots, "Snapshot CSV files or directories, one per scenario")
        ->required();
    vsla_cmd->add_option("--buses", common.buses, "Buses of interest (default: all PQ buses)")->delimiter(',');
    vsla_cmd->add_option("--zmin", vsla_opts.zmin, "z-score selection threshold");
    vsla_cmd->add_flag("--sample-std", vsla_opts.sample_std, "Use the sample standard deviation");
    vsla_cmd->add_option("--jobs", vsla_opts.jobs, "Scenarios processed in parallel")->check(CLI::PositiveNumber);
    vsla_cmd->add_option("--out", common.out, "Report file (default: standard output)");
    vsla_cmd->add_option("--format", common.format, "json or csv")->check(CLI::IsMember({"csv", "json"}));
    vsla_cmd->add_option("--stats", vsla_opts.stats_out, "Write aggregate box statistics as CSV");
    vsla_cmd->add_option("--histogram", vsla_opts.histogram_out, "Write a histogram of bus critical values as TSV");
    vsla_cmd->add_option("--bins", vsla_opts.bins, "Histogram bins")->check(CLI::PositiveNumber);
    vsla_cmd->callback([&] {
        if (vsla_cmd->count("--format") == 0) {
            common.format = "json";
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Ok : Usage;
    }

    try {
        if (*validate_cmd) {
            return cmd_validate(common);
        }
        if (*solve_cmd) {
            return cmd_solve(common, lambda);
        }
        if (*sweep_cmd) {
            return cmd_sweep(common, sweep_opts);
        }
        if (*vsla_cmd) {
            return cmd_vsla(common, vsla_opts);
        }
    } catch (const UsageError& e) {
        log(std::string("usage: ") + e.what());
        return Usage;
    } catch (const DivergedError& e) {
        log(e.what());
        return Numerical;
    } catch (const Error& e) {
        log(e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        log(std::string("internal error: ") + e.what());
        return Internal;
    }
    return Internal;
}
