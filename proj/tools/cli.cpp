#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "fusedgroup/io.hpp"
#include "fusedgroup/simulation.hpp"
#include "fusedgroup/solver.hpp"

namespace fusedgroup::cli {

namespace {

struct FitArgs
{
    std::string data;
    std::string response;
    std::string group_map;
    std::string loss = "ls";
    double tau = 0.5;
    int q = 2;
    std::optional<double> lambda;
    bool auto_lambda = false;
    std::optional<double> pilot_lambda;
    bool adaptive = false;
    double gamma = 1.0;
    double fusion_tol = kDefaultFusionTol;
    bool standardize = false;
    int max_iter = 10000;
    std::string out;
};

struct SimulateArgs
{
    std::string config;
    std::optional<int> runs;
    std::string out;
    std::optional<unsigned> threads;
};

struct PlotArgs
{
    std::string input;
    std::string out;
    std::string boundaries;
};

struct SynthArgs
{
    std::string out;
    std::string group_map;
    std::uint64_t seed = 7;
    int days = 357;
};

void write_json(const nlohmann::json& doc, const std::string& path, std::ostream& out)
{
    if (path.empty() || path == "-") {
        out << doc.dump(2) << '\n';
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError(path + ": cannot write");
    f << doc.dump(2) << '\n';
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err)
{
    if (a.lambda && a.auto_lambda) throw InputError("--lambda and --auto-lambda are exclusive");
    if (!a.lambda && !a.auto_lambda) throw InputError("one of --lambda or --auto-lambda is required");

    const CsvTable table = read_csv_file(a.data);
    const GroupMap groups =
        a.group_map.empty() ? infer_group_map(table.header, a.response) : read_group_map_file(a.group_map);
    const Dataset data = load_dataset(table, a.data, a.response, groups, a.standardize);
    const Index n = data.design.observations();

    const LossKind loss = a.loss == "quantile" ? LossKind{QuantileLoss{a.tau}} : LossKind{LeastSquaresLoss{}};
    SolverConfig cfg;
    cfg.max_iter = a.max_iter;
    cfg.fusion_tol = a.fusion_tol;

    FitMetadata meta;
    meta.loss = a.loss;
    meta.tau = a.tau;
    meta.q = a.q;
    meta.auto_lambda = a.auto_lambda;
    meta.adaptive = a.adaptive;
    meta.gamma = a.gamma;
    meta.fusion_tol = a.fusion_tol;
    meta.input = a.data;

    std::optional<FitResult> pilot;
    FitResult result;
    if (a.adaptive) {
        const double pilot_lambda =
            a.pilot_lambda ? *a.pilot_lambda
                           : (a.auto_lambda ? default_schedules(n, Stage::Fused).lambda : *a.lambda);
        const double lambda = a.auto_lambda ? default_schedules(n, Stage::AdaptiveFused).lambda : *a.lambda;
        TwoStageResult two = fit_two_stage(data.design, loss, a.q, pilot_lambda, lambda, a.gamma, cfg);
        meta.lambda = lambda;
        meta.pilot_lambda = pilot_lambda;
        pilot = std::move(two.pilot);
        result = std::move(two.adaptive);
    } else {
        meta.lambda = a.auto_lambda ? default_schedules(n, Stage::Fused).lambda : *a.lambda;
        result = fit(data.design, ProblemSpec{loss, a.q, meta.lambda, UniformWeights{}}, cfg);
    }

    const nlohmann::json doc = fit_to_json(result, data, meta, pilot);
    write_json(doc, a.out, out);

    std::ostream& log = a.out.empty() || a.out == "-" ? err : out;
    const auto segs = segments_from(result.detected_set, static_cast<int>(data.design.groups()));
    log << "segments:";
    for (const Segment& s : segs) log << ' ' << s.first << '-' << s.last;
    log << "\nobjective " << std::setprecision(10) << result.objective() << ", " << result.iterations
        << " iterations, " << (result.converged ? "converged" : "NOT converged") << '\n';
    if (pilot && !pilot->converged) log << "warning: pilot fit did not converge\n";
    return result.converged ? kOk : kNotConverged;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err)
{
    std::vector<ScenarioSpec> scenarios = read_scenarios_file(a.config);
    if (a.runs) {
        if (*a.runs < 1) throw InputError("--runs must be >= 1");
        for (ScenarioSpec& s : scenarios) s.M = *a.runs;
    }
    McOptions opts;
    opts.threads = a.threads.value_or(threads_from_env());

    std::vector<McReport> reports;
    for (const ScenarioSpec& s : scenarios) {
        reports.push_back(run_monte_carlo(s, opts));
        err << s.name << ": " << s.M << " runs in " << std::fixed << std::setprecision(1)
            << reports.back().elapsed_seconds << " s\n"
            << std::defaultfloat;
    }

    if (!a.out.empty()) {
        std::filesystem::create_directories(a.out);
        const std::filesystem::path dir(a.out);
        std::ofstream csv(dir / "report.csv", std::ios::binary);
        if (!csv) throw InputError((dir / "report.csv").string() + ": cannot write");
        write_report_csv(csv, reports);
        write_json(report_to_json(reports), (dir / "report.json").string(), out);
    }
    write_report_table(out, reports);
    return kOk;
}

int cmd_plotdata(const PlotArgs& a, std::ostream& out)
{
    std::ifstream in(a.input, std::ios::binary);
    if (!in) throw InputError(a.input + ": cannot open file");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(a.input + ": " + e.what());
    }
    const PlotData data = plot_data_from_json(doc);
    if (a.out.empty()) {
        write_plot_csv(out, data);
        out << "\r\n";
        write_boundary_csv(out, data);
        return kOk;
    }
    std::ofstream est(a.out, std::ios::binary);
    if (!est) throw InputError(a.out + ": cannot write");
    write_plot_csv(est, data);
    std::string bpath = a.boundaries;
    if (bpath.empty()) {
        std::filesystem::path p(a.out);
        bpath = (p.parent_path() / (p.stem().string() + "_boundaries.csv")).string();
    }
    std::ofstream bnd(bpath, std::ios::binary);
    if (!bnd) throw InputError(bpath + ": cannot write");
    write_boundary_csv(bnd, data);
    return kOk;
}

// Daily benzene maxima against hourly temperature and humidity profiles;
// five daytime regimes with shared coefficients.
int cmd_synth(const SynthArgs& a, std::ostream& out)
{
    if (a.days < 2) throw InputError("--days must be >= 2");
    constexpr int kHours = 24;
    const std::vector<std::pair<int, std::array<double, 2>>> regimes{
        {6, {0.02, 0.01}}, {10, {-0.12, 0.05}}, {16, {0.10, -0.03}}, {21, {-0.08, 0.06}}, {24, {0.02, 0.01}}};
    std::array<std::array<double, 2>, kHours> beta{};
    for (int h = 1, r = 0; h <= kHours; ++h) {
        while (h > regimes[static_cast<std::size_t>(r)].first) ++r;
        beta[static_cast<std::size_t>(h - 1)] = regimes[static_cast<std::size_t>(r)].second;
    }

    std::mt19937_64 rng(a.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::student_t_distribution<double> noise(3.0);

    std::vector<std::string> header;
    for (const char* var : {"temperature", "humidity"})
        for (int h = 1; h <= kHours; ++h) header.push_back(std::string(var) + "_" + std::to_string(h));
    header.push_back("benzene_max");

    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw InputError(a.out + ": cannot write");
    write_csv_row(f, header);
    for (int d = 0; d < a.days; ++d) {
        // seasonal level, warmest mid-afternoon, humidity moving against temperature
        const double level = 18.0 + 8.0 * std::sin(6.283185307179586 * d / 365.0) + 2.0 * normal(rng);
        const double damp = 60.0 + 8.0 * normal(rng);
        std::vector<std::string> row;
        std::array<std::vector<double>, 2> x;
        for (int h = 1; h <= kHours; ++h) {
            const double cycle = 5.0 * std::sin(6.283185307179586 * (h - 9) / 24.0);
            const double t = level + cycle + normal(rng);
            x[0].push_back(t);
            x[1].push_back(std::clamp(damp - 2.5 * cycle + 4.0 * normal(rng), 5.0, 100.0));
        }
        double y = 0.0;
        for (int h = 0; h < kHours; ++h)
            for (int v = 0; v < 2; ++v)
                y += beta[static_cast<std::size_t>(h)][static_cast<std::size_t>(v)] *
                     x[static_cast<std::size_t>(v)][static_cast<std::size_t>(h)];
        y += 0.5 * noise(rng);
        for (int v = 0; v < 2; ++v)
            for (double value : x[static_cast<std::size_t>(v)]) row.push_back(format_double(value));
        row.push_back(format_double(y));
        write_csv_row(f, row);
    }

    if (!a.group_map.empty()) {
        nlohmann::json map = nlohmann::json::array();
        for (int h = 1; h <= kHours; ++h) map.push_back({"temperature_" + std::to_string(h), "humidity_" + std::to_string(h)});
        write_json(map, a.group_map, out);
    }
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Fused and adaptive-fused group regression (least squares and quantile)", "fusedgroup"};
    app.require_subcommand(1);

    FitArgs fa;
    auto* fit_cmd = app.add_subcommand("fit", "fit a model to a CSV dataset and write the result as JSON");
    fit_cmd->add_option("data", fa.data, "CSV file with a header row")->required();
    fit_cmd->add_option("--response,-y", fa.response, "response column")->required();
    fit_cmd->add_option("--groups", fa.group_map, "JSON group map (default: <var>_<group> column names)");
    fit_cmd->add_option("--loss", fa.loss)->check(CLI::IsMember({"ls", "quantile"}))->capture_default_str();
    fit_cmd->add_option("--tau", fa.tau, "quantile level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    fit_cmd->add_option("--q", fa.q, "norm of the fused differences")->check(CLI::IsMember({1, 2}))->capture_default_str();
    fit_cmd->add_option("--lambda", fa.lambda, "penalty level")->check(CLI::NonNegativeNumber);
    fit_cmd->add_flag("--auto-lambda", fa.auto_lambda, "use the default log(n)-based schedules");
    fit_cmd->add_option("--pilot-lambda", fa.pilot_lambda, "penalty of the pilot fit (with --adaptive)")
        ->check(CLI::NonNegativeNumber);
    fit_cmd->add_flag("--adaptive", fa.adaptive, "pilot fused fit, then refit with adaptive weights");
    fit_cmd->add_option("--gamma", fa.gamma, "adaptive weight exponent")->check(CLI::PositiveNumber)->capture_default_str();
    fit_cmd->add_option("--fusion-tol", fa.fusion_tol)->check(CLI::NonNegativeNumber)->capture_default_str();
    fit_cmd->add_flag("--standardize", fa.standardize, "center and scale covariate columns");
    fit_cmd->add_option("--max-iter", fa.max_iter)->check(CLI::PositiveNumber)->capture_default_str();
    fit_cmd->add_option("--out,-o", fa.out, "output JSON (default stdout)");

    SimulateArgs sa;
    auto* sim_cmd = app.add_subcommand("simulate", "run Monte Carlo scenarios from an INI config");
    sim_cmd->add_option("config", sa.config)->required();
    sim_cmd->add_option("--runs", sa.runs, "override M for every scenario");
    sim_cmd->add_option("--out,-o", sa.out, "directory for report.csv and report.json");
    sim_cmd->add_option("--threads", sa.threads, "worker threads (default FUSEDGROUP_THREADS or 1)")
        ->check(CLI::PositiveNumber);

    PlotArgs pa;
    auto* plot_cmd = app.add_subcommand("plotdata", "per-group estimates and segment boundaries from a fit JSON");
    plot_cmd->add_option("fit", pa.input)->required();
    plot_cmd->add_option("--out,-o", pa.out, "estimates CSV (default stdout)");
    plot_cmd->add_option("--boundaries", pa.boundaries, "boundaries CSV (default <out>_boundaries.csv)");

    SynthArgs ya;
    auto* synth_cmd = app.add_subcommand("synth-airquality", "write a synthetic 24-hour x 2-covariate dataset");
    synth_cmd->add_option("--out,-o", ya.out)->required();
    synth_cmd->add_option("--group-map", ya.group_map, "also write the matching JSON group map");
    synth_cmd->add_option("--seed", ya.seed)->capture_default_str();
    synth_cmd->add_option("--days", ya.days)->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    }

    try {
        if (fit_cmd->parsed()) return cmd_fit(fa, out, err);
        if (sim_cmd->parsed()) return cmd_simulate(sa, out, err);
        if (plot_cmd->parsed()) return cmd_plotdata(pa, out);
        if (synth_cmd->parsed()) return cmd_synth(ya, out);
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const SpecError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << '\n';
        return kBadInput;
    }
    return kBadInput;
}

} // namespace fusedgroup::cli
