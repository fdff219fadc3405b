#include "fusedgroup/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace fusedgroup {

namespace {

std::string where(const std::string& source, int line)
{
    std::ostringstream s;
    s << source << ":" << line << ": ";
    return s.str();
}

std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path + ": cannot open file");
    return in;
}

bool parse_double(const std::string& text, double& out)
{
    std::size_t a = 0;
    std::size_t b = text.size();
    while (a < b && (text[a] == ' ' || text[a] == '\t')) ++a;
    while (b > a && (text[b - 1] == ' ' || text[b - 1] == '\t')) --b;
    if (a == b) return false;
    const char* first = text.data() + a;
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, text.data() + b, out);
    return ec == std::errc() && ptr == text.data() + b && std::isfinite(out);
}

} // namespace

CsvTable read_csv(std::istream& in, const std::string& source)
{
    CsvTable table;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_quoted = false;
    bool at_record_start = true;
    int line = 1;
    int record_line = 1;

    const auto end_record = [&] {
        record.push_back(field);
        field.clear();
        field_quoted = false;
        // blank lines are skipped
        if (!(record.size() == 1 && record[0].empty())) {
            if (table.header.empty() && table.rows.empty()) {
                table.header = record;
            } else {
                if (record.size() != table.header.size()) {
                    std::ostringstream msg;
                    msg << where(source, record_line) << "expected " << table.header.size() << " fields, found "
                        << record.size();
                    throw InputError(msg.str());
                }
                table.rows.push_back(record);
                table.row_lines.push_back(record_line);
            }
        }
        record.clear();
        at_record_start = true;
    };

    char c = 0;
    while (in.get(c)) {
        if (at_record_start) {
            record_line = line;
            at_record_start = false;
        }
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        if (c == '"') {
            if (!field.empty() || field_quoted)
                throw InputError(where(source, line) + "quote inside an unquoted field");
            in_quotes = true;
            field_quoted = true;
        } else if (c == ',') {
            record.push_back(field);
            field.clear();
            field_quoted = false;
        } else if (c == '\r') {
            if (in.peek() == '\n') continue;
            end_record();
            ++line;
        } else if (c == '\n') {
            end_record();
            ++line;
        } else {
            if (field_quoted) throw InputError(where(source, line) + "text after closing quote");
            field += c;
        }
    }
    if (in_quotes) throw InputError(where(source, record_line) + "unterminated quoted field");
    if (!at_record_start) end_record();
    if (table.header.empty()) throw InputError(source + ": empty file");
    return table;
}

CsvTable read_csv_file(const std::string& path)
{
    std::ifstream in = open_input(path);
    return read_csv(in, path);
}

std::string csv_escape(const std::string& field)
{
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields)
{
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << csv_escape(fields[i]);
    }
    out << "\r\n";
}

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

GroupMap infer_group_map(const std::vector<std::string>& header, const std::string& response)
{
    std::map<long, std::vector<std::pair<std::string, std::string>>> by_index; // index -> (var, column)
    for (const std::string& col : header) {
        if (col == response) continue;
        const auto us = col.rfind('_');
        if (us == std::string::npos || us == 0 || us + 1 == col.size())
            throw InputError("column '" + col + "' does not follow the <var>_<groupindex> naming");
        long idx = 0;
        const char* b = col.data() + us + 1;
        const auto [ptr, ec] = std::from_chars(b, col.data() + col.size(), idx);
        if (ec != std::errc() || ptr != col.data() + col.size())
            throw InputError("column '" + col + "' does not follow the <var>_<groupindex> naming");
        by_index[idx].emplace_back(col.substr(0, us), col);
    }
    if (by_index.empty()) throw InputError("no covariate columns found");

    // variable order follows the first group
    std::vector<std::string> vars;
    for (const auto& vc : by_index.begin()->second) vars.push_back(vc.first);
    GroupMap groups;
    for (const auto& [idx, cols] : by_index) {
        std::vector<std::string> group;
        for (const std::string& v : vars) {
            const auto it = std::find_if(cols.begin(), cols.end(), [&](const auto& vc) { return vc.first == v; });
            if (it == cols.end()) {
                std::ostringstream msg;
                msg << "group " << idx << " has no column for variable '" << v << "'";
                throw InputError(msg.str());
            }
            group.push_back(it->second);
        }
        if (cols.size() != vars.size()) {
            std::ostringstream msg;
            msg << "group " << idx << " has " << cols.size() << " columns, expected " << vars.size();
            throw InputError(msg.str());
        }
        groups.push_back(std::move(group));
    }
    return groups;
}

GroupMap read_group_map_file(const std::string& path)
{
    std::ifstream in = open_input(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
    if (!doc.is_array() || doc.empty()) throw InputError(path + ": group map must be a non-empty list of groups");
    GroupMap groups;
    for (std::size_t j = 0; j < doc.size(); ++j) {
        const auto& grp = doc[j];
        if (!grp.is_array() || grp.empty())
            throw InputError(path + ": group " + std::to_string(j + 1) + " must be a non-empty list of column names");
        std::vector<std::string> cols;
        for (const auto& c : grp) {
            if (!c.is_string())
                throw InputError(path + ": group " + std::to_string(j + 1) + " holds a non-string entry");
            cols.push_back(c.get<std::string>());
        }
        if (!groups.empty() && cols.size() != groups.front().size())
            throw InputError(path + ": group " + std::to_string(j + 1) + " has " + std::to_string(cols.size()) +
                             " columns, expected " + std::to_string(groups.front().size()));
        groups.push_back(std::move(cols));
    }
    return groups;
}

Dataset load_dataset(const CsvTable& table, const std::string& source, const std::string& response,
                     const GroupMap& groups, bool standardize)
{
    std::map<std::string, std::size_t> column;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (!column.emplace(table.header[c], c).second)
            throw InputError(where(source, 1) + "duplicate column '" + table.header[c] + "'");
    }
    const auto find = [&](const std::string& name) {
        const auto it = column.find(name);
        if (it == column.end()) throw InputError(where(source, 1) + "no column named '" + name + "'");
        return it->second;
    };
    if (groups.empty()) throw InputError("group map is empty");
    const std::size_t yc = find(response);
    std::vector<std::size_t> xc;
    for (const auto& grp : groups) {
        if (grp.size() != groups.front().size()) throw InputError("groups differ in size");
        for (const std::string& name : grp) xc.push_back(find(name));
    }

    const Index n = static_cast<Index>(table.rows.size());
    if (n == 0) throw InputError(source + ": no data rows");
    Eigen::MatrixXd X(n, static_cast<Index>(xc.size()));
    Eigen::VectorXd y(n);
    for (Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        const int line = table.row_lines[static_cast<std::size_t>(i)];
        const auto cell = [&](std::size_t c) {
            double v = 0.0;
            if (!parse_double(row[c], v))
                throw InputError(where(source, line) + "column '" + table.header[c] + "': '" + row[c] +
                                 "' is not a finite number");
            return v;
        };
        y(i) = cell(yc);
        for (std::size_t k = 0; k < xc.size(); ++k) X(i, static_cast<Index>(k)) = cell(xc[k]);
    }

    std::optional<Standardization> stdz;
    if (standardize) {
        if (n < 2) throw InputError("standardization needs at least two rows");
        Standardization s;
        for (Index c = 0; c < X.cols(); ++c) {
            const double mean = X.col(c).mean();
            const double sd = std::sqrt((X.col(c).array() - mean).square().sum() / static_cast<double>(n - 1));
            if (!(sd > 0.0)) throw InputError("column '" + table.header[xc[static_cast<std::size_t>(c)]] +
                                              "' is constant and cannot be standardized");
            X.col(c) = (X.col(c).array() - mean) / sd;
            s.center.push_back(mean);
            s.scale.push_back(sd);
        }
        s.response_center = y.mean();
        y.array() -= s.response_center;
        stdz = std::move(s);
    }

    const Index g = static_cast<Index>(groups.size());
    const Index p = static_cast<Index>(groups.front().size());
    return {GroupedDesign(std::move(X), std::move(y), g, p), groups, response, std::move(stdz)};
}

namespace {

ErrorDist parse_errors(const std::string& v, const std::string& where_)
{
    if (v == "gaussian" || v == "normal") return ErrorDist::Gaussian;
    if (v == "cauchy") return ErrorDist::Cauchy;
    throw InputError(where_ + "errors must be gaussian or cauchy, got '" + v + "'");
}

Estimator parse_estimator(const std::string& v, const std::string& where_)
{
    for (Estimator e : kAllEstimators)
        if (v == estimator_name(e)) return e;
    throw InputError(where_ + "unknown estimator '" + v + "'");
}

std::string trim(const std::string& s)
{
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return {};
    return s.substr(a, s.find_last_not_of(" \t") - a + 1);
}

} // namespace

std::vector<ScenarioSpec> read_scenarios(std::istream& in, const std::string& source)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InputError(where(source, static_cast<int>(e.line())) + e.message());
    }

    std::vector<ScenarioSpec> out;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw InputError(source + ": '" + section + "' is not a [section] with keys");
        const std::string at = source + ": [" + section + "] ";
        ScenarioSpec s;
        s.name = section;
        const auto num = [&](const std::string& key, const std::string& text) {
            double v = 0.0;
            if (!parse_double(text, v)) throw InputError(at + key + " = '" + text + "' is not a number");
            return v;
        };
        const auto integer = [&](const std::string& key, const std::string& text) {
            const double v = num(key, text);
            if (v != std::floor(v) || std::abs(v) > 9.0e15) throw InputError(at + key + " must be an integer");
            return static_cast<long long>(v);
        };
        for (const auto& [key, node] : body) {
            const std::string v = trim(node.data());
            if (key == "p") {
                s.p = integer(key, v);
            } else if (key == "g") {
                s.g = integer(key, v);
            } else if (key == "errors") {
                s.errors = parse_errors(v, at);
            } else if (key == "changes") {
                if (!v.empty() && v.back() == '%') {
                    s.changes.reset();
                    s.change_fraction = num(key, v.substr(0, v.size() - 1)) / 100.0;
                } else {
                    s.changes = static_cast<int>(integer(key, v));
                    s.change_fraction.reset();
                }
            } else if (key == "change_fraction") {
                s.changes.reset();
                s.change_fraction = num(key, v);
            } else if (key == "M") {
                s.M = static_cast<int>(integer(key, v));
            } else if (key == "seed") {
                std::uint64_t seed = 0;
                const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), seed);
                if (ec != std::errc() || ptr != v.data() + v.size())
                    throw InputError(at + "seed must be a non-negative 64-bit integer");
                s.seed = seed;
            } else if (key == "tau") {
                s.tau = num(key, v);
            } else if (key == "gamma") {
                s.gamma = num(key, v);
            } else if (key == "q") {
                s.q = static_cast<int>(integer(key, v));
            } else if (key == "jump_min") {
                s.jump_min = num(key, v);
            } else if (key == "jump_max") {
                s.jump_max = num(key, v);
            } else if (key == "schedule") {
                if (v == "fused") s.fused_schedule = Stage::Fused;
                else if (v == "adaptive") s.fused_schedule = Stage::AdaptiveFused;
                else throw InputError(at + "schedule must be fused or adaptive");
            } else if (key == "estimators") {
                s.estimators.clear();
                std::stringstream list(v);
                std::string item;
                while (std::getline(list, item, ',')) s.estimators.push_back(parse_estimator(trim(item), at));
                if (s.estimators.empty()) throw InputError(at + "estimators list is empty");
            } else {
                throw InputError(at + "unknown key '" + key + "'");
            }
        }
        try {
            s.validate();
        } catch (const SpecError& e) {
            throw InputError(at + e.what());
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) throw InputError(source + ": no scenarios");
    return out;
}

std::vector<ScenarioSpec> read_scenarios_file(const std::string& path)
{
    std::ifstream in = open_input(path);
    return read_scenarios(in, path);
}

namespace {

nlohmann::json diagnostics_json(const FitResult& fit)
{
    return {{"converged", fit.converged},
            {"iterations", fit.iterations},
            {"objective", fit.objective()},
            {"primal_residual", fit.primal_residual},
            {"dual_residual", fit.dual_residual},
            {"final_rho", fit.final_rho},
            {"underdetermined", fit.underdetermined}};
}

std::vector<double> to_vector(const Eigen::Ref<const Eigen::VectorXd>& v)
{
    return {v.data(), v.data() + v.size()};
}

} // namespace

nlohmann::json fit_to_json(const FitResult& fit, const Dataset& data, const FitMetadata& meta,
                           const std::optional<FitResult>& pilot)
{
    const Index g = fit.beta.groups();
    const Index p = fit.beta.group_size();
    nlohmann::json model = {{"loss", meta.loss},    {"q", meta.q},           {"lambda", meta.lambda},
                            {"auto_lambda", meta.auto_lambda}, {"adaptive", meta.adaptive},
                            {"fusion_tol", meta.fusion_tol}};
    if (meta.loss == "quantile") model["tau"] = meta.tau;
    if (meta.adaptive) {
        model["gamma"] = meta.gamma;
        if (meta.pilot_lambda) model["pilot_lambda"] = *meta.pilot_lambda;
    }

    // coefficients on the input scale; standardized fits are mapped back
    Eigen::VectorXd coef = fit.beta.flat();
    double offset = 0.0;
    if (data.standardization) {
        offset = data.standardization->response_center;
        for (Index c = 0; c < coef.size(); ++c) {
            coef(c) /= data.standardization->scale[static_cast<std::size_t>(c)];
            offset -= data.standardization->center[static_cast<std::size_t>(c)] * coef(c);
        }
    }

    nlohmann::json groups = nlohmann::json::array();
    for (Index j = 0; j < g; ++j) {
        nlohmann::json grp = {{"index", j + 1},
                              {"columns", data.groups[static_cast<std::size_t>(j)]},
                              {"coefficients", to_vector(coef.segment(j * p, p))}};
        if (data.standardization) grp["standardized_coefficients"] = to_vector(fit.beta.block(j));
        groups.push_back(std::move(grp));
    }

    nlohmann::json segments = nlohmann::json::array();
    for (const Segment& s : segments_from(fit.detected_set, static_cast<int>(g))) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
        for (int j = s.first; j <= s.last; ++j) mean += coef.segment((j - 1) * p, p);
        mean /= static_cast<double>(s.last - s.first + 1);
        segments.push_back({{"first", s.first}, {"last", s.last}, {"coefficients", to_vector(mean)}});
    }

    nlohmann::json doc = {{"schema_version", kSchemaVersion},
                          {"kind", "fit"},
                          {"model", model},
                          {"data",
                           {{"input", meta.input},
                            {"response", data.response},
                            {"n", data.design.observations()},
                            {"g", g},
                            {"p", p}}},
                          {"groups", groups},
                          {"detected_set", fit.detected_set.indices},
                          {"segments", segments},
                          {"diagnostics", diagnostics_json(fit)}};
    if (data.standardization) {
        doc["standardization"] = {{"center", data.standardization->center},
                                  {"scale", data.standardization->scale},
                                  {"response_center", data.standardization->response_center},
                                  {"offset", offset}};
    }
    if (pilot) {
        doc["pilot"] = {{"detected_set", pilot->detected_set.indices}, {"diagnostics", diagnostics_json(*pilot)}};
    }
    return doc;
}

PlotData plot_data_from_json(const nlohmann::json& doc)
{
    PlotData out;
    try {
        if (!doc.is_object() || doc.value("kind", "") != "fit")
            throw InputError("not a fit result (missing \"kind\": \"fit\")");
        const int version = doc.at("schema_version").get<int>();
        if (version < 1 || version > kSchemaVersion)
            throw InputError("unsupported schema_version " + std::to_string(version));
        for (const auto& grp : doc.at("groups")) out.blocks.push_back(grp.at("coefficients").get<std::vector<double>>());
        if (out.blocks.empty()) throw InputError("fit result has no groups");
        const auto& segs = doc.at("segments");
        for (std::size_t s = 1; s < segs.size(); ++s) out.boundaries.push_back(segs[s].at("first").get<int>());
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed fit result: ") + e.what());
    }
    return out;
}

void write_plot_csv(std::ostream& out, const PlotData& data)
{
    write_csv_row(out, {"group_index", "coordinate_index", "estimate", "segment"});
    int segment = 1;
    std::size_t next = 0;
    for (std::size_t j = 0; j < data.blocks.size(); ++j) {
        const int group = static_cast<int>(j) + 1;
        while (next < data.boundaries.size() && data.boundaries[next] <= group) {
            ++segment;
            ++next;
        }
        for (std::size_t k = 0; k < data.blocks[j].size(); ++k)
            write_csv_row(out, {std::to_string(group), std::to_string(k + 1), format_double(data.blocks[j][k]),
                                std::to_string(segment)});
    }
}

void write_boundary_csv(std::ostream& out, const PlotData& data)
{
    write_csv_row(out, {"boundary"});
    for (int b : data.boundaries) write_csv_row(out, {std::to_string(b)});
}

namespace {

nlohmann::json scenario_json(const ScenarioSpec& s)
{
    nlohmann::json j = {{"name", s.name}, {"p", s.p},       {"g", s.g},         {"n", s.n()},
                        {"errors", error_dist_name(s.errors)}, {"changes", s.change_count()},
                        {"tau", s.tau}, {"gamma", s.gamma}, {"q", s.q},         {"M", s.M},
                        {"seed", s.seed}, {"jump_min", s.jump_min}, {"jump_max", s.jump_max},
                        {"schedule", s.fused_schedule == Stage::Fused ? "fused" : "adaptive"}};
    if (s.change_fraction) j["change_fraction"] = *s.change_fraction;
    return j;
}

} // namespace

nlohmann::json report_to_json(const std::vector<McReport>& reports)
{
    nlohmann::json scenarios = nlohmann::json::array();
    for (const McReport& r : reports) {
        nlohmann::json ests = nlohmann::json::array();
        for (const EstimatorSummary& s : r.summaries) {
            if (!s.ran) continue;
            ests.push_back({{"estimator", estimator_name(s.estimator)},
                            {"med", s.med},
                            {"mad", s.mad},
                            {"recovery", s.recovery},
                            {"overestimation", s.overestimation},
                            {"recovery_pair", format_recovery(s.recovery, s.overestimation)},
                            {"misclassified", s.misclassified},
                            {"converged_fraction", s.converged_fraction}});
        }
        nlohmann::json runs = nlohmann::json::array();
        for (std::size_t m = 0; m < r.runs.size(); ++m) {
            nlohmann::json row = {{"replication", m}};
            for (Estimator e : kAllEstimators) {
                const auto& rep = r.runs[m].reports[static_cast<std::size_t>(e)];
                if (!rep) continue;
                row[estimator_name(e)] = {{"med", rep->med},
                                          {"mad", rep->mad},
                                          {"recovery", rep->recovery_rate},
                                          {"overestimation", rep->overestimation_ratio},
                                          {"misclassified", rep->missclassification_count},
                                          {"converged", r.runs[m].converged[static_cast<std::size_t>(e)]}};
            }
            runs.push_back(std::move(row));
        }
        scenarios.push_back({{"scenario", scenario_json(r.scenario)}, {"estimators", ests}, {"runs", runs}});
    }
    return {{"schema_version", kSchemaVersion}, {"kind", "simulation"}, {"scenarios", scenarios}};
}

void write_report_csv(std::ostream& out, const std::vector<McReport>& reports)
{
    write_csv_row(out, {"scenario", "p", "g", "n", "errors", "changes", "tau", "q", "M", "seed", "estimator", "med",
                        "mad", "recovery", "overestimation", "recovery_pair", "misclassified",
                        "converged_fraction"});
    for (const McReport& r : reports) {
        const ScenarioSpec& sc = r.scenario;
        for (const EstimatorSummary& s : r.summaries) {
            if (!s.ran) continue;
            write_csv_row(out, {sc.name, std::to_string(sc.p), std::to_string(sc.g), std::to_string(sc.n()),
                                error_dist_name(sc.errors), std::to_string(sc.change_count()),
                                format_double(sc.tau), std::to_string(sc.q), std::to_string(r.M),
                                std::to_string(sc.seed), estimator_name(s.estimator), format_double(s.med),
                                format_double(s.mad), format_double(s.recovery), format_double(s.overestimation),
                                format_recovery(s.recovery, s.overestimation), format_double(s.misclassified),
                                format_double(s.converged_fraction)});
        }
    }
}

void write_report_table(std::ostream& out, const std::vector<McReport>& reports)
{
    out << std::left << std::setw(24) << "scenario" << std::setw(26) << "estimator" << std::right << std::setw(9)
        << "MED" << std::setw(9) << "MAD" << std::setw(12) << "Recovery" << '\n';
    for (const McReport& r : reports) {
        for (const EstimatorSummary& s : r.summaries) {
            if (!s.ran) continue;
            std::ostringstream med, mad;
            med << std::fixed << std::setprecision(2) << s.med;
            mad << std::fixed << std::setprecision(2) << s.mad;
            out << std::left << std::setw(24) << r.scenario.name << std::setw(26) << estimator_name(s.estimator)
                << std::right << std::setw(9) << med.str() << std::setw(9) << mad.str() << std::setw(12)
                << format_recovery(s.recovery, s.overestimation) << '\n';
        }
    }
}

} // namespace fusedgroup
