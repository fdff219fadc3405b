#pragma once

// File formats: CSV datasets and reports, group maps, scenario configs,
// JSON fit results.

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fusedgroup/simulation.hpp"
#include "fusedgroup/solver.hpp"

namespace fusedgroup {

/// Malformed input file; the message carries the source and line.
class InputError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;

struct CsvTable
{
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> row_lines; // 1-based line where each row starts
};

/// RFC-4180 reader: quoted fields may hold commas, quotes ("") and newlines.
CsvTable read_csv(std::istream& in, const std::string& source);
CsvTable read_csv_file(const std::string& path);

std::string csv_escape(const std::string& field);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest decimal that round-trips the double.
std::string format_double(double v);

/// Ordered groups of column names; adjacent groups are fused.
using GroupMap = std::vector<std::vector<std::string>>;

/// Groups columns named <var>_<index> by index (ascending); every group
/// must hold the same variables.
GroupMap infer_group_map(const std::vector<std::string>& header, const std::string& response);
GroupMap read_group_map_file(const std::string& path);

struct Standardization
{
    std::vector<double> center; // per design column
    std::vector<double> scale;
    double response_center = 0.0; // subtracted from y; the model has no intercept
};

struct Dataset
{
    GroupedDesign design;
    GroupMap groups;
    std::string response;
    std::optional<Standardization> standardization;
};

Dataset load_dataset(const CsvTable& table, const std::string& source, const std::string& response,
                     const GroupMap& groups, bool standardize);

/// Scenario grid from an INI file: one [section] per scenario with keys
/// p, g, errors, changes, M, seed, tau, gamma, q (and optional estimators, schedule).
std::vector<ScenarioSpec> read_scenarios(std::istream& in, const std::string& source);
std::vector<ScenarioSpec> read_scenarios_file(const std::string& path);

struct FitMetadata
{
    std::string loss;
    double tau = 0.5;
    int q = 2;
    double lambda = 0.0;
    bool auto_lambda = false;
    bool adaptive = false;
    double gamma = 1.0;
    std::optional<double> pilot_lambda;
    double fusion_tol = kDefaultFusionTol;
    std::string input;
};

nlohmann::json fit_to_json(const FitResult& fit, const Dataset& data, const FitMetadata& meta,
                           const std::optional<FitResult>& pilot = std::nullopt);

/// Per-group estimates and segment boundaries read back from a fit JSON.
struct PlotData
{
    std::vector<std::vector<double>> blocks;
    std::vector<int> boundaries; // first group (1-based) of every segment after the first
};
PlotData plot_data_from_json(const nlohmann::json& doc);
/// group_index,coordinate_index,estimate,segment
void write_plot_csv(std::ostream& out, const PlotData& data);
/// One "boundary" column: first group of each new segment.
void write_boundary_csv(std::ostream& out, const PlotData& data);

nlohmann::json report_to_json(const std::vector<McReport>& reports);
void write_report_csv(std::ostream& out, const std::vector<McReport>& reports);
/// Text table in the "recovery/overestimation" convention.
void write_report_table(std::ostream& out, const std::vector<McReport>& reports);

} // namespace fusedgroup
