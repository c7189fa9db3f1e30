#ifndef GRIDLCI_CASE_IO_HPP
#define GRIDLCI_CASE_IO_HPP

#include "gridlci/errors.hpp"
#include "gridlci/grid_model.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace gridlci
{

/// Shortest text that always reads back to the same double.
inline std::string format_double(double value)
{
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace detail
{

inline std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline std::optional<double> parse_number(std::string_view token)
{
    token = trim(token);
    if (token.empty()) {
        return std::nullopt;
    }
    if (token.front() == '+') {
        token.remove_prefix(1);
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
        if (token == "Inf" || token == "inf") {
            return std::numeric_limits<double>::infinity();
        }
        if (token == "-Inf" || token == "-inf") {
            return -std::numeric_limits<double>::infinity();
        }
        return std::nullopt;
    }
    return value;
}

struct Matrix
{
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> lines;
};

inline std::string_view strip_comment(std::string_view line)
{
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\'') {
            quoted = !quoted;
        } else if (line[i] == '%' && !quoted) {
            return line.substr(0, i);
        }
    }
    return line;
}

[[noreturn]] inline void syntax_error(std::size_t line, const std::string& what)
{
    throw Error(ErrorKind::SyntaxError, "line " + std::to_string(line) + ": " + what);
}

/// Field name of an assignment like `mpc.bus = ...`; empty if none.
inline std::string assignment_field(std::string_view lhs)
{
    lhs = trim(lhs);
    const auto dot = lhs.rfind('.');
    return std::string(dot == std::string_view::npos ? lhs : lhs.substr(dot + 1));
}

} // namespace detail

/// MATPOWER case text: `baseMVA` plus the `bus`, `gen` and `branch`
/// matrices, literals only. Other assignments and comments are skipped.
inline GridCase parse_matpower(std::string_view text)
{
    std::optional<double> base_mva;
    std::map<std::string, detail::Matrix> matrices;

    std::string current;   // name of the matrix being read, empty if none
    bool skipping = false; // inside a matrix we do not use (cell arrays, gencost, ...)
    detail::Matrix* target = nullptr;
    std::vector<double> row;
    std::size_t row_line = 0;

    auto flush_row = [&](std::size_t line) {
        if (!row.empty() && target) {
            target->rows.push_back(row);
            target->lines.push_back(row_line ? row_line : line);
        }
        row.clear();
        row_line = 0;
    };

    auto consume_matrix_text = [&](std::string_view body, std::size_t line) -> bool {
        // returns true when the closing bracket was seen
        std::size_t pos = 0;
        while (pos < body.size()) {
            const char c = body[pos];
            if (c == ']' || c == '}') {
                flush_row(line);
                return true;
            }
            if (c == ';') {
                flush_row(line);
                ++pos;
                continue;
            }
            if (c == ' ' || c == '\t' || c == ',' || c == '\r') {
                ++pos;
                continue;
            }
            const auto end = body.find_first_of(" \t,;]}\r", pos);
            const auto token = body.substr(pos, end == std::string_view::npos ? body.size() - pos : end - pos);
            if (!skipping) {
                auto value = detail::parse_number(token);
                if (!value) {
                    detail::syntax_error(line, "unexpected token '" + std::string(token) + "' in matrix " + current);
                }
                if (row.empty()) {
                    row_line = line;
                }
                row.push_back(*value);
            }
            pos = end == std::string_view::npos ? body.size() : end;
        }
        flush_row(line);
        return false;
    };

    std::size_t line_no = 0;
    std::size_t start = 0;
    bool in_matrix = false;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        ++line_no;
        std::string_view line = detail::trim(detail::strip_comment(text.substr(start, end - start)));
        start = end + 1;

        if (in_matrix) {
            if (consume_matrix_text(line, line_no)) {
                in_matrix = false;
                target = nullptr;
            }
            continue;
        }
        if (line.empty() || line.starts_with("function")) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            if (line == "end" || line == "return") {
                continue;
            }
            detail::syntax_error(line_no, "expected an assignment");
        }
        const std::string field = detail::assignment_field(line.substr(0, eq));
        std::string_view rhs = detail::trim(line.substr(eq + 1));
        if (!rhs.empty() && (rhs.front() == '[' || rhs.front() == '{')) {
            current = field;
            skipping = rhs.front() == '{' || !(field == "bus" || field == "gen" || field == "branch");
            if (!skipping && matrices.count(field)) {
                detail::syntax_error(line_no, "matrix " + field + " assigned twice");
            }
            target = skipping ? nullptr : &matrices[field];
            rhs.remove_prefix(1);
            in_matrix = !consume_matrix_text(rhs, line_no);
            if (!in_matrix) {
                target = nullptr;
            }
            continue;
        }
        if (field == "baseMVA") {
            if (!rhs.empty() && rhs.back() == ';') {
                rhs.remove_suffix(1);
            }
            base_mva = detail::parse_number(rhs);
            if (!base_mva) {
                detail::syntax_error(line_no, "baseMVA is not a number");
            }
        }
    }
    if (in_matrix) {
        detail::syntax_error(line_no, "unterminated matrix " + current);
    }
    if (!base_mva) {
        throw Error(ErrorKind::SemanticError, "missing baseMVA");
    }
    for (const char* name : {"bus", "gen", "branch"}) {
        if (!matrices.count(name)) {
            throw Error(ErrorKind::SemanticError, std::string("missing ") + name + " matrix");
        }
    }

    auto require_width = [&](const detail::Matrix& m, std::size_t width, const char* name) {
        for (std::size_t i = 0; i < m.rows.size(); ++i) {
            if (m.rows[i].size() < width) {
                detail::syntax_error(m.lines[i], std::string(name) + " row needs at least " + std::to_string(width) +
                                                     " columns, found " + std::to_string(m.rows[i].size()));
            }
        }
    };
    const auto& bus_m = matrices["bus"];
    const auto& gen_m = matrices["gen"];
    const auto& branch_m = matrices["branch"];
    require_width(bus_m, 10, "bus");
    require_width(gen_m, 8, "gen");
    require_width(branch_m, 11, "branch");

    constexpr double deg = std::numbers::pi / 180.0;
    const double base = *base_mva;
    if (!(base > 0.0)) {
        throw Error(ErrorKind::SemanticError, "baseMVA must be positive");
    }

    GridCase grid;
    grid.base_mva = base;
    std::set<int> seen;
    for (std::size_t i = 0; i < bus_m.rows.size(); ++i) {
        const auto& r = bus_m.rows[i];
        Bus bus;
        bus.id = static_cast<int>(r[0]);
        if (!seen.insert(bus.id).second) {
            throw Error(ErrorKind::SemanticError,
                        "line " + std::to_string(bus_m.lines[i]) + ": duplicate bus id " + std::to_string(bus.id));
        }
        switch (static_cast<int>(r[1])) {
        case 1: bus.kind = BusKind::PQ; break;
        case 2: bus.kind = BusKind::PV; break;
        case 3: bus.kind = BusKind::Slack; break;
        default:
            throw Error(ErrorKind::SemanticError, "line " + std::to_string(bus_m.lines[i]) + ": bad bus type " +
                                                      format_double(r[1]) + " at bus " + std::to_string(bus.id));
        }
        bus.p_load = r[2] / base;
        bus.q_load = r[3] / base;
        bus.g_shunt = r[4] / base;
        bus.b_shunt = r[5] / base;
        bus.v_init_mag = r[7];
        bus.v_init_ang = r[8] * deg;
        bus.base_kv = r[9];
        grid.buses.push_back(bus);
    }
    for (const auto& r : gen_m.rows) {
        Generator gen;
        gen.bus = static_cast<int>(r[0]);
        gen.p_gen = r[1] / base;
        gen.q_gen = r[2] / base;
        gen.q_max = r[3] / base;
        gen.q_min = r[4] / base;
        gen.v_setpoint = r[5];
        gen.in_service = r[7] > 0.0;
        grid.generators.push_back(gen);
    }
    for (const auto& r : branch_m.rows) {
        Branch br;
        br.from_bus = static_cast<int>(r[0]);
        br.to_bus = static_cast<int>(r[1]);
        br.r = r[2];
        br.x = r[3];
        br.b_charging = r[4];
        br.tap = r[8] == 0.0 ? 1.0 : r[8];
        br.shift = r[9] * deg;
        br.in_service = r[10] > 0.0;
        br.is_transformer = r[8] != 0.0 || r[9] != 0.0;
        grid.branches.push_back(br);
    }
    if (auto problems = diagnose(grid); !problems.empty()) {
        throw Error(ErrorKind::SemanticError, problems.front());
    }
    return grid;
}

// ---------------------------------------------------------------------------
// native JSON

namespace detail
{

using nlohmann::json;

inline json number_to_json(double v)
{
    if (std::isfinite(v)) {
        return v;
    }
    return std::isnan(v) ? json("NaN") : json(v > 0 ? "Infinity" : "-Infinity");
}

class JsonReader
{
public:
    [[noreturn]] static void fail(const std::string& path, const std::string& what)
    {
        throw Error(ErrorKind::SchemaError, path + ": " + what);
    }

    static const json& field(const json& obj, const std::string& path, const char* key)
    {
        auto it = obj.find(key);
        if (it == obj.end()) {
            fail(path + "." + key, "missing required key");
        }
        return *it;
    }

    static double number(const json& v, const std::string& path)
    {
        if (v.is_number()) {
            return v.get<double>();
        }
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            if (s == "Infinity") {
                return std::numeric_limits<double>::infinity();
            }
            if (s == "-Infinity") {
                return -std::numeric_limits<double>::infinity();
            }
            if (s == "NaN") {
                return std::numeric_limits<double>::quiet_NaN();
            }
        }
        fail(path, "expected a number");
    }

    static double number(const json& obj, const std::string& path, const char* key)
    {
        return number(field(obj, path, key), path + "." + key);
    }

    static double number_or(const json& obj, const std::string& path, const char* key, double fallback)
    {
        return obj.contains(key) ? number(obj.at(key), path + "." + key) : fallback;
    }

    static int integer(const json& obj, const std::string& path, const char* key)
    {
        const auto& v = field(obj, path, key);
        if (!v.is_number_integer()) {
            fail(path + "." + key, "expected an integer");
        }
        return v.get<int>();
    }

    static bool boolean_or(const json& obj, const std::string& path, const char* key, bool fallback)
    {
        if (!obj.contains(key)) {
            return fallback;
        }
        const auto& v = obj.at(key);
        if (!v.is_boolean()) {
            fail(path + "." + key, "expected a boolean");
        }
        return v.get<bool>();
    }

    static const json& array(const json& obj, const std::string& path, const char* key)
    {
        const auto& v = field(obj, path, key);
        if (!v.is_array()) {
            fail(path + "." + key, "expected an array");
        }
        return v;
    }
};

inline std::string_view kind_name(BusKind kind)
{
    switch (kind) {
    case BusKind::Slack: return "Slack";
    case BusKind::PV: return "PV";
    case BusKind::PQ: return "PQ";
    }
    return "PQ";
}

} // namespace detail

/// Keys mirror the GridCase field names. Non-finite numbers are written as
/// the strings "Infinity", "-Infinity" and "NaN".
inline std::string emit_native_json(const GridCase& grid)
{
    using detail::json;
    using detail::number_to_json;
    json root;
    root["base_mva"] = number_to_json(grid.base_mva);
    root["buses"] = json::array();
    for (const auto& b : grid.buses) {
        root["buses"].push_back({{"id", b.id},
                                 {"kind", detail::kind_name(b.kind)},
                                 {"p_load", number_to_json(b.p_load)},
                                 {"q_load", number_to_json(b.q_load)},
                                 {"g_shunt", number_to_json(b.g_shunt)},
                                 {"b_shunt", number_to_json(b.b_shunt)},
                                 {"v_init_mag", number_to_json(b.v_init_mag)},
                                 {"v_init_ang", number_to_json(b.v_init_ang)},
                                 {"base_kv", number_to_json(b.base_kv)}});
    }
    root["branches"] = json::array();
    for (const auto& br : grid.branches) {
        root["branches"].push_back({{"from_bus", br.from_bus},
                                    {"to_bus", br.to_bus},
                                    {"r", number_to_json(br.r)},
                                    {"x", number_to_json(br.x)},
                                    {"b_charging", number_to_json(br.b_charging)},
                                    {"tap", number_to_json(br.tap)},
                                    {"shift", number_to_json(br.shift)},
                                    {"in_service", br.in_service},
                                    {"is_transformer", br.is_transformer}});
    }
    root["generators"] = json::array();
    for (const auto& g : grid.generators) {
        root["generators"].push_back({{"bus", g.bus},
                                      {"p_gen", number_to_json(g.p_gen)},
                                      {"q_gen", number_to_json(g.q_gen)},
                                      {"v_setpoint", number_to_json(g.v_setpoint)},
                                      {"q_min", number_to_json(g.q_min)},
                                      {"q_max", number_to_json(g.q_max)},
                                      {"in_service", g.in_service}});
    }
    return root.dump(2) + "\n";
}

inline GridCase parse_native_json(std::string_view text)
{
    using detail::JsonReader;
    detail::json root;
    try {
        root = detail::json::parse(text);
    } catch (const detail::json::parse_error& e) {
        throw Error(ErrorKind::SyntaxError, e.what());
    }
    if (!root.is_object()) {
        JsonReader::fail("$", "expected an object");
    }
    GridCase grid;
    grid.base_mva = JsonReader::number(root, "$", "base_mva");

    const auto& buses = JsonReader::array(root, "$", "buses");
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const std::string path = "$.buses[" + std::to_string(i) + "]";
        const auto& o = buses[i];
        if (!o.is_object()) {
            JsonReader::fail(path, "expected an object");
        }
        Bus b;
        b.id = JsonReader::integer(o, path, "id");
        const auto& kind = JsonReader::field(o, path, "kind");
        const std::string k = kind.is_string() ? kind.get<std::string>() : "";
        if (k == "Slack") {
            b.kind = BusKind::Slack;
        } else if (k == "PV") {
            b.kind = BusKind::PV;
        } else if (k == "PQ") {
            b.kind = BusKind::PQ;
        } else {
            JsonReader::fail(path + ".kind", "expected one of Slack, PV, PQ");
        }
        b.p_load = JsonReader::number_or(o, path, "p_load", 0.0);
        b.q_load = JsonReader::number_or(o, path, "q_load", 0.0);
        b.g_shunt = JsonReader::number_or(o, path, "g_shunt", 0.0);
        b.b_shunt = JsonReader::number_or(o, path, "b_shunt", 0.0);
        b.v_init_mag = JsonReader::number_or(o, path, "v_init_mag", 1.0);
        b.v_init_ang = JsonReader::number_or(o, path, "v_init_ang", 0.0);
        b.base_kv = JsonReader::number_or(o, path, "base_kv", 0.0);
        grid.buses.push_back(b);
    }

    const auto& branches = JsonReader::array(root, "$", "branches");
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const std::string path = "$.branches[" + std::to_string(i) + "]";
        const auto& o = branches[i];
        if (!o.is_object()) {
            JsonReader::fail(path, "expected an object");
        }
        Branch br;
        br.from_bus = JsonReader::integer(o, path, "from_bus");
        br.to_bus = JsonReader::integer(o, path, "to_bus");
        br.r = JsonReader::number(o, path, "r");
        br.x = JsonReader::number(o, path, "x");
        br.b_charging = JsonReader::number_or(o, path, "b_charging", 0.0);
        br.tap = JsonReader::number_or(o, path, "tap", 1.0);
        br.shift = JsonReader::number_or(o, path, "shift", 0.0);
        br.in_service = JsonReader::boolean_or(o, path, "in_service", true);
        br.is_transformer = JsonReader::boolean_or(o, path, "is_transformer", false);
        grid.branches.push_back(br);
    }

    const auto& gens = JsonReader::array(root, "$", "generators");
    for (std::size_t i = 0; i < gens.size(); ++i) {
        const std::string path = "$.generators[" + std::to_string(i) + "]";
        const auto& o = gens[i];
        if (!o.is_object()) {
            JsonReader::fail(path, "expected an object");
        }
        Generator g;
        g.bus = JsonReader::integer(o, path, "bus");
        g.p_gen = JsonReader::number_or(o, path, "p_gen", 0.0);
        g.q_gen = JsonReader::number_or(o, path, "q_gen", 0.0);
        g.v_setpoint = JsonReader::number_or(o, path, "v_setpoint", 1.0);
        g.q_min = JsonReader::number_or(o, path, "q_min", -std::numeric_limits<double>::infinity());
        g.q_max = JsonReader::number_or(o, path, "q_max", std::numeric_limits<double>::infinity());
        g.in_service = JsonReader::boolean_or(o, path, "in_service", true);
        grid.generators.push_back(g);
    }
    return grid;
}

/// Picks the parser from the file extension (.json or MATPOWER .m).
inline GridCase load_case(const std::string& path)
{
    const std::string text = read_file(path);
    if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
        return parse_native_json(text);
    }
    return parse_matpower(text);
}

// ---------------------------------------------------------------------------
// snapshot CSV: time,bus,vr,vi[,p,q]

struct SnapshotSeries
{
    std::string case_ref;
    std::string scenario_id;
    std::vector<Snapshot> snapshots;
};

namespace detail
{

inline std::vector<std::string_view> split_csv(std::string_view line)
{
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.size() - start : comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return cells;
}

} // namespace detail

/// Rows must be grouped by time with times increasing; every case bus must
/// appear at every time. Without p,q columns the injections stay unset.
inline SnapshotSeries read_snapshot_csv(std::string_view text, const GridCase& grid, std::string case_ref = {},
                                        std::string scenario_id = {})
{
    auto index = make_bus_index(grid);
    SnapshotSeries series{std::move(case_ref), std::move(scenario_id), {}};

    std::size_t line_no = 0;
    std::size_t start = 0;
    bool has_pq = false;
    bool header_seen = false;
    std::vector<bool> present;

    auto finish = [&](Snapshot& snap) {
        for (std::size_t i = 0; i < present.size(); ++i) {
            if (!present[i]) {
                throw MissingBusError(snap.time, index->id(i));
            }
        }
    };

    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        ++line_no;
        const auto line = detail::trim(text.substr(start, end - start));
        start = end + 1;
        if (line.empty()) {
            continue;
        }
        const auto cells = detail::split_csv(line);
        if (!header_seen) {
            header_seen = true;
            const bool base = cells.size() >= 4 && cells[0] == "time" && cells[1] == "bus" && cells[2] == "vr" &&
                              cells[3] == "vi";
            has_pq = cells.size() == 6 && cells[4] == "p" && cells[5] == "q";
            if (!base || !(cells.size() == 4 || has_pq)) {
                detail::syntax_error(line_no, "expected header time,bus,vr,vi[,p,q]");
            }
            continue;
        }
        if (cells.size() != (has_pq ? 6u : 4u)) {
            detail::syntax_error(line_no, "expected " + std::to_string(has_pq ? 6 : 4) + " fields");
        }
        std::array<double, 6> values{};
        for (std::size_t c = 0; c < cells.size(); ++c) {
            auto v = detail::parse_number(cells[c]);
            if (!v) {
                detail::syntax_error(line_no, "bad number '" + std::string(cells[c]) + "'");
            }
            values[c] = *v;
        }
        const double time = values[0];
        const int bus = static_cast<int>(values[1]);
        if (static_cast<double>(bus) != values[1]) {
            detail::syntax_error(line_no, "bus id must be an integer");
        }

        if (series.snapshots.empty() || series.snapshots.back().time != time) {
            if (!series.snapshots.empty()) {
                if (time < series.snapshots.back().time) {
                    throw Error(ErrorKind::NonMonotoneTime, "line " + std::to_string(line_no) + ": time " +
                                                                format_double(time) + " after " +
                                                                format_double(series.snapshots.back().time));
                }
                finish(series.snapshots.back());
            }
            Snapshot snap;
            snap.index = static_cast<std::int64_t>(series.snapshots.size());
            snap.time = time;
            snap.buses = index;
            snap.voltages.assign(index->size(), Complex{});
            if (has_pq) {
                snap.injections = std::vector<Complex>(index->size());
            }
            series.snapshots.push_back(std::move(snap));
            present.assign(index->size(), false);
        }
        auto& snap = series.snapshots.back();
        const auto pos = index->find(bus);
        if (!pos) {
            throw Error(ErrorKind::UnknownBus, "line " + std::to_string(line_no) + ": bus " + std::to_string(bus));
        }
        if (present[*pos]) {
            throw Error(ErrorKind::SemanticError, "line " + std::to_string(line_no) + ": bus " + std::to_string(bus) +
                                                      " repeated at time " + format_double(time));
        }
        present[*pos] = true;
        snap.voltages[*pos] = Complex(values[2], values[3]);
        if (has_pq) {
            (*snap.injections)[*pos] = Complex(values[4], values[5]);
        }
    }
    if (!header_seen) {
        detail::syntax_error(1, "empty snapshot file");
    }
    if (!series.snapshots.empty()) {
        finish(series.snapshots.back());
    }
    return series;
}

/// Rows in time order, buses in case order, 17 significant digits. The p,q
/// columns are written only when every snapshot carries injections.
inline std::string write_snapshot_csv(const SnapshotSeries& series)
{
    bool has_pq = !series.snapshots.empty();
    for (const auto& s : series.snapshots) {
        has_pq = has_pq && s.injections.has_value();
    }
    std::string out = has_pq ? "time,bus,vr,vi,p,q\n" : "time,bus,vr,vi\n";
    for (const auto& s : series.snapshots) {
        for (std::size_t i = 0; i < s.voltages.size(); ++i) {
            out += format_double(s.time);
            out += ',';
            out += std::to_string(s.buses->id(i));
            out += ',';
            out += format_double(s.voltages[i].real());
            out += ',';
            out += format_double(s.voltages[i].imag());
            if (has_pq) {
                out += ',';
                out += format_double((*s.injections)[i].real());
                out += ',';
                out += format_double((*s.injections)[i].imag());
            }
            out += '\n';
        }
    }
    return out;
}

} // namespace gridlci

#endif // GRIDLCI_CASE_IO_HPP
