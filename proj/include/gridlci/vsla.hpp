#ifndef GRIDLCI_VSLA_HPP
#define GRIDLCI_VSLA_HPP

// Voltage-stability location analysis over snapshot series: per-bus critical
// index over time, the system-wide minimum and its location, z-score based
// critical sets and their statistics across scenarios.

#include "gridlci/case_io.hpp"
#include "gridlci/errors.hpp"
#include "gridlci/grid_model.hpp"
#include "gridlci/lci.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gridlci
{

enum class StdKind
{
    Population,
    Sample
};

struct BusSeries
{
    int bus = 0;
    std::vector<std::pair<std::int64_t, LciValue>> values;
};

struct CriticalValue
{
    double lci = 0.0;
    std::int64_t index = 0;
};

/// Minimum over time; ties go to the earliest index.
inline CriticalValue bus_critical(const BusSeries& series)
{
    if (series.values.empty()) {
        throw Error(ErrorKind::EmptySeries, "bus " + std::to_string(series.bus));
    }
    CriticalValue best{series.values.front().second.lci, series.values.front().first};
    for (const auto& [index, value] : series.values) {
        if (value.lci < best.lci || (value.lci == best.lci && index < best.index)) {
            best = {value.lci, index};
        }
    }
    return best;
}

struct SystemCritical
{
    double value = 0.0;
    int bus = 0;
};

/// Minimum over buses; ties go to the lowest bus id.
inline SystemCritical system_critical(const std::map<int, double>& per_bus)
{
    if (per_bus.empty()) {
        throw Error(ErrorKind::EmptyInput, "no buses");
    }
    SystemCritical best{per_bus.begin()->second, per_bus.begin()->first};
    for (const auto& [bus, value] : per_bus) {
        if (value < best.value) {
            best = {value, bus};
        }
    }
    return best;
}

struct ZScores
{
    std::map<int, double> z;
    std::optional<std::string> warning; ///< set when the spread is degenerate
};

inline ZScores z_scores(const std::map<int, double>& criticals, StdKind kind = StdKind::Population)
{
    ZScores out;
    const std::size_t n = criticals.size();
    if (n < 2 || (kind == StdKind::Sample && n < 2)) {
        out.warning = "z-scores need at least two buses, got " + std::to_string(n);
        return out;
    }
    double mean = 0.0;
    for (const auto& [bus, v] : criticals) {
        mean += v;
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& [bus, v] : criticals) {
        ss += (v - mean) * (v - mean);
    }
    const double denom = kind == StdKind::Population ? static_cast<double>(n) : static_cast<double>(n - 1);
    const double sd = std::sqrt(ss / denom);
    if (!(sd >= 1e-15)) {
        out.warning = "degenerate distribution: standard deviation " + format_double(sd);
        return out;
    }
    for (const auto& [bus, v] : criticals) {
        out.z[bus] = (v - mean) / sd;
    }
    return out;
}

inline std::set<int> select_critical(const std::map<int, double>& z, double threshold = -2.0)
{
    std::set<int> selected;
    for (const auto& [bus, score] : z) {
        if (score <= threshold) {
            selected.insert(bus);
        }
    }
    return selected;
}

inline std::set<int> select_critical(const ZScores& z, double threshold = -2.0)
{
    return select_critical(z.z, threshold);
}

// ---------------------------------------------------------------------------
// box-plot statistics

enum class Skew
{
    Left,
    Right,
    Symmetric
};

inline std::string_view to_string(Skew skew)
{
    switch (skew) {
    case Skew::Left: return "left";
    case Skew::Right: return "right";
    case Skew::Symmetric: return "symmetric";
    }
    return "symmetric";
}

struct BoxStats
{
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    std::size_t count = 0;
    /// Right when the median sits nearer the upper quartile, left when nearer
    /// the lower one.
    Skew skew = Skew::Symmetric;
};

/// Linear interpolation between order statistics at h = (n - 1) p.
inline double quantile(std::span<const double> sorted, double p)
{
    if (sorted.empty()) {
        throw Error(ErrorKind::EmptyInput, "quantile of no values");
    }
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) {
        return sorted.back();
    }
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline BoxStats box_stats(std::vector<double> values)
{
    if (values.empty()) {
        throw Error(ErrorKind::EmptyInput, "box statistics of no values");
    }
    std::sort(values.begin(), values.end());
    BoxStats s;
    s.count = values.size();
    s.min = values.front();
    s.max = values.back();
    s.q1 = quantile(values, 0.25);
    s.median = quantile(values, 0.5);
    s.q3 = quantile(values, 0.75);
    const double upper_gap = s.q3 - s.median;
    const double lower_gap = s.median - s.q1;
    if (upper_gap < lower_gap) {
        s.skew = Skew::Right;
    } else if (lower_gap < upper_gap) {
        s.skew = Skew::Left;
    }
    return s;
}

struct HistogramBin
{
    double edge = 0.0; ///< left edge
    std::size_t count = 0;
};

/// Equal-width bins over [min, max]; right-open except the last.
inline std::vector<HistogramBin> histogram(std::span<const double> values, std::size_t bins)
{
    if (bins < 1) {
        throw Error(ErrorKind::InvalidArgument, "bins must be at least 1");
    }
    if (values.empty()) {
        return {};
    }
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        return {{lo, values.size()}};
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<HistogramBin> out(bins);
    for (std::size_t i = 0; i < bins; ++i) {
        out[i].edge = lo + width * static_cast<double>(i);
    }
    for (double v : values) {
        auto i = static_cast<std::size_t>(std::floor((v - lo) / width));
        i = std::min(i, bins - 1);
        ++out[i].count;
    }
    return out;
}

// ---------------------------------------------------------------------------
// scenario reports

struct BusCritical
{
    double lci = 0.0;
    std::int64_t index = 0;
    double time = 0.0;
    std::set<std::string> flags;
    std::string scenario_id; ///< scenario of occurrence (aggregates only)
};

struct ScenarioReport
{
    std::string scenario_id;
    std::map<int, BusCritical> per_bus_critical;
    double system_critical = 0.0;
    int critical_location = 0;
    std::map<int, double> z_scores;
    std::set<int> critical_set;
    std::map<int, BoxStats> stats;

    double z_threshold = -2.0;
    StdKind std_kind = StdKind::Population;
    bool filtered = false;
    std::vector<std::string> scenarios; ///< members of an aggregate
    std::vector<std::string> warnings;
};

struct ReportOptions
{
    double z_threshold = -2.0;
    StdKind std_kind = StdKind::Population;
    std::vector<int> bus_filter; ///< empty: every PQ bus
    LciTolerances tolerances{};
};

inline std::vector<int> buses_of_interest(const GridCase& grid, const std::vector<int>& filter)
{
    if (!filter.empty()) {
        std::set<int> unique(filter.begin(), filter.end());
        return {unique.begin(), unique.end()};
    }
    std::vector<int> out;
    for (const auto& bus : grid.buses) {
        if (bus.kind == BusKind::PQ) {
            out.push_back(bus.id);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::string_view flag_name(LciFlag flag)
{
    switch (flag) {
    case LciFlag::Ok: return "ok";
    case LciFlag::ClampedTangent: return "clamped_tangent";
    case LciFlag::NoIntersection: return "no_intersection";
    }
    return "ok";
}

/// Index of one bus at every snapshot. Only the bus's admittance row and the
/// voltages of the bus and its neighbors are read.
inline BusSeries evaluate_bus(const NeighborView& view, std::span<const Snapshot> snapshots,
                              const LciTolerances& tol = default_tolerances)
{
    BusSeries series{view.bus, {}};
    series.values.reserve(snapshots.size());
    for (const auto& snap : snapshots) {
        series.values.emplace_back(snap.index, lci(view, snap, tol));
    }
    return series;
}

inline void finalize_selection(ScenarioReport& report)
{
    std::map<int, double> values;
    for (const auto& [bus, c] : report.per_bus_critical) {
        values[bus] = c.lci;
    }
    const auto sys = system_critical(values);
    report.system_critical = sys.value;
    report.critical_location = sys.bus;
    auto z = z_scores(values, report.std_kind);
    if (z.warning) {
        report.warnings.push_back(*z.warning);
    }
    report.z_scores = std::move(z.z);
    report.critical_set = select_critical(report.z_scores, report.z_threshold);
}

inline ScenarioReport analyze_scenario(const AdmittanceMatrix& y, const GridCase& grid, const SnapshotSeries& series,
                                       const ReportOptions& opts = {})
{
    if (series.snapshots.empty()) {
        throw Error(ErrorKind::EmptySeries, "scenario " + series.scenario_id + " has no snapshots");
    }
    ScenarioReport report;
    report.scenario_id = series.scenario_id;
    report.z_threshold = opts.z_threshold;
    report.std_kind = opts.std_kind;
    report.filtered = !opts.bus_filter.empty();

    const auto buses = buses_of_interest(grid, opts.bus_filter);
    if (buses.empty()) {
        throw Error(ErrorKind::EmptyInput, "no buses of interest");
    }
    std::map<std::int64_t, double> times;
    for (const auto& s : series.snapshots) {
        times[s.index] = s.time;
    }
    for (int bus : buses) {
        const NeighborView view = neighbor_view(y, bus);
        const BusSeries values = evaluate_bus(view, series.snapshots, opts.tolerances);
        const auto crit = bus_critical(values);
        BusCritical entry{crit.lci, crit.index, times[crit.index], {}, series.scenario_id};
        for (const auto& [index, v] : values.values) {
            if (v.flag != LciFlag::Ok) {
                entry.flags.insert(std::string(flag_name(v.flag)));
            }
            if (v.path == LocusPath::PLineMirror) {
                entry.flags.insert("p_line_mirror");
            } else if (v.path == LocusPath::QLineMirror) {
                entry.flags.insert("q_line_extension");
            }
        }
        report.per_bus_critical.emplace(bus, std::move(entry));
    }
    finalize_selection(report);
    if (report.filtered) {
        report.warnings.push_back("system critical value is over the filtered bus set only");
    }
    return report;
}

/// Union of the critical sets plus box statistics of each selected bus's
/// critical value across scenarios. Scenarios are folded in id order.
inline ScenarioReport aggregate_scenarios(std::vector<ScenarioReport> reports)
{
    if (reports.empty()) {
        throw Error(ErrorKind::EmptyInput, "no scenario reports");
    }
    std::stable_sort(reports.begin(), reports.end(),
                     [](const ScenarioReport& a, const ScenarioReport& b) { return a.scenario_id < b.scenario_id; });
    ScenarioReport agg;
    agg.scenario_id = "aggregate";
    agg.z_threshold = reports.front().z_threshold;
    agg.std_kind = reports.front().std_kind;
    for (const auto& r : reports) {
        agg.scenarios.push_back(r.scenario_id);
        agg.filtered = agg.filtered || r.filtered;
        agg.critical_set.insert(r.critical_set.begin(), r.critical_set.end());
        for (const auto& [bus, c] : r.per_bus_critical) {
            auto it = agg.per_bus_critical.find(bus);
            if (it == agg.per_bus_critical.end()) {
                agg.per_bus_critical.emplace(bus, c);
            } else {
                if (c.lci < it->second.lci) {
                    auto flags = std::move(it->second.flags);
                    it->second = c;
                    it->second.flags.insert(flags.begin(), flags.end());
                } else {
                    it->second.flags.insert(c.flags.begin(), c.flags.end());
                }
            }
        }
    }
    std::map<int, double> values;
    for (const auto& [bus, c] : agg.per_bus_critical) {
        values[bus] = c.lci;
    }
    const auto sys = system_critical(values);
    agg.system_critical = sys.value;
    agg.critical_location = sys.bus;
    for (int bus : agg.critical_set) {
        std::vector<double> samples;
        for (const auto& r : reports) {
            if (auto it = r.per_bus_critical.find(bus); it != r.per_bus_critical.end()) {
                samples.push_back(it->second.lci);
            }
        }
        if (!samples.empty()) {
            agg.stats[bus] = box_stats(std::move(samples));
        }
    }
    return agg;
}

// ---------------------------------------------------------------------------
// report files

/// JSON text with sorted keys and every double written with 17 significant
/// digits; non-finite doubles become null.
inline void write_canonical_json(const nlohmann::json& value, std::string& out)
{
    using nlohmann::json;
    switch (value.type()) {
    case json::value_t::object: {
        out += '{';
        bool first = true;
        for (const auto& [key, item] : value.items()) {
            if (!first) {
                out += ',';
            }
            first = false;
            out += json(key).dump();
            out += ':';
            write_canonical_json(item, out);
        }
        out += '}';
        break;
    }
    case json::value_t::array: {
        out += '[';
        for (std::size_t i = 0; i < value.size(); ++i) {
            if (i) {
                out += ',';
            }
            write_canonical_json(value[i], out);
        }
        out += ']';
        break;
    }
    case json::value_t::number_float: {
        const double v = value.get<double>();
        out += std::isfinite(v) ? format_double(v) : "null";
        break;
    }
    default:
        out += value.dump();
    }
}

inline std::string canonical_json(const nlohmann::json& value)
{
    std::string out;
    write_canonical_json(value, out);
    out += '\n';
    return out;
}

inline nlohmann::json stats_to_json(const BoxStats& s)
{
    return {{"min", s.min},
            {"q1", s.q1},
            {"median", s.median},
            {"q3", s.q3},
            {"max", s.max},
            {"count", s.count},
            {"skew", std::string(to_string(s.skew))}};
}

inline nlohmann::json report_to_json(const ScenarioReport& r)
{
    using nlohmann::json;
    json buses = json::array();
    for (const auto& [bus, c] : r.per_bus_critical) {
        json rec{{"bus", bus},
                 {"critical_lci", c.lci},
                 {"at_index", c.index},
                 {"at_time", c.time},
                 {"selected", r.critical_set.count(bus) != 0},
                 {"flags", json(std::vector<std::string>(c.flags.begin(), c.flags.end()))}};
        if (auto it = r.z_scores.find(bus); it != r.z_scores.end()) {
            rec["z"] = it->second;
        } else {
            rec["z"] = nullptr;
        }
        if (!r.scenarios.empty()) {
            rec["scenario_id"] = c.scenario_id;
        }
        buses.push_back(std::move(rec));
    }
    json stats = json::object();
    for (const auto& [bus, s] : r.stats) {
        stats[std::to_string(bus)] = stats_to_json(s);
    }
    json out{{"scenario_id", r.scenario_id},
             {"buses", std::move(buses)},
             {"system", {{"critical", r.system_critical}, {"location", r.critical_location}, {"filtered", r.filtered}}},
             {"critical_set", json(std::vector<int>(r.critical_set.begin(), r.critical_set.end()))},
             {"stats", std::move(stats)},
             {"z_threshold", r.z_threshold},
             {"std", r.std_kind == StdKind::Population ? "population" : "sample"},
             {"warnings", json(r.warnings)}};
    if (!r.scenarios.empty()) {
        out["scenarios"] = r.scenarios;
    }
    return out;
}

/// One per-bus row per scenario: scenario_id,bus,critical_lci,at_index,at_time,z,selected,flags
inline std::string reports_to_csv(std::span<const ScenarioReport> reports)
{
    std::string out = "scenario_id,bus,critical_lci,at_index,at_time,z,selected,flags\n";
    for (const auto& r : reports) {
        for (const auto& [bus, c] : r.per_bus_critical) {
            std::string flags;
            for (const auto& f : c.flags) {
                flags += (flags.empty() ? "" : ";") + f;
            }
            auto z = r.z_scores.find(bus);
            out += r.scenario_id + "," + std::to_string(bus) + "," + format_double(c.lci) + "," +
                   std::to_string(c.index) + "," + format_double(c.time) + "," +
                   (z == r.z_scores.end() ? std::string() : format_double(z->second)) + "," +
                   (r.critical_set.count(bus) ? "1" : "0") + "," + flags + "\n";
        }
    }
    return out;
}

inline std::string stats_to_csv(const ScenarioReport& r)
{
    std::string out = "bus,min,q1,median,q3,max,count,skew\n";
    for (const auto& [bus, s] : r.stats) {
        out += std::to_string(bus) + "," + format_double(s.min) + "," + format_double(s.q1) + "," +
               format_double(s.median) + "," + format_double(s.q3) + "," + format_double(s.max) + "," +
               std::to_string(s.count) + "," + std::string(to_string(s.skew)) + "\n";
    }
    return out;
}

inline std::string histogram_to_tsv(std::span<const HistogramBin> bins)
{
    std::string out = "edge\tcount\n";
    for (const auto& b : bins) {
        out += format_double(b.edge) + "\t" + std::to_string(b.count) + "\n";
    }
    return out;
}

} // namespace gridlci

#endif // GRIDLCI_VSLA_HPP
