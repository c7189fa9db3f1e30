#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <numbers>

using namespace gridlci;
using Catch::Approx;

namespace
{

const char* minimal_case = R"(function mpc = tiny
% two buses, one line
mpc.version = '2';
mpc.baseMVA = 100;

%% bus data
%	bus_i	type	Pd	Qd	Gs	Bs	area	Vm	Va	baseKV	zone	Vmax	Vmin
mpc.bus = [
	1	3	0	0	0	0	1	1.02	0	135	1	1.1	0.9;
	2	1	50	20	0	5	1	1	-30	135	1	1.1	0.9;
];

mpc.gen = [
	1	10	0	100	-100	1.02	100	1	250	0;
];

mpc.branch = [
	1	2	0.1	0.2	0.02	0	0	0	0	0	1	-360	360;
];

mpc.gencost = [
	2	0	0	3	0.01	40	0;
];
)";

template <class F>
ErrorKind kind_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::InvalidArgument;
}

std::string replace(std::string text, const std::string& from, const std::string& to)
{
    const auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    return text.replace(pos, from.size(), to);
}

} // namespace

TEST_CASE("minimal MATPOWER text", "[matpower]")
{
    const GridCase c = parse_matpower(minimal_case);
    CHECK(c.base_mva == 100.0);
    REQUIRE(c.buses.size() == 2);
    CHECK(c.buses[0].kind == BusKind::Slack);
    CHECK(c.buses[1].kind == BusKind::PQ);
    CHECK(c.buses[1].p_load == Approx(0.5));
    CHECK(c.buses[1].q_load == Approx(0.2));
    CHECK(c.buses[1].b_shunt == Approx(0.05));
    CHECK(c.buses[1].v_init_ang == Approx(-std::numbers::pi / 6.0));
    CHECK(c.buses[0].v_init_mag == 1.02);
    CHECK(c.buses[0].base_kv == 135.0);
    REQUIRE(c.branches.size() == 1);
    CHECK(c.branches[0].tap == 1.0);
    CHECK_FALSE(c.branches[0].is_transformer);
    CHECK(c.branches[0].b_charging == 0.02);
    REQUIRE(c.generators.size() == 1);
    CHECK(c.generators[0].p_gen == Approx(0.1));
    CHECK(c.generators[0].q_max == Approx(1.0));
    CHECK(c.generators[0].q_min == Approx(-1.0));
    CHECK(c.generators[0].v_setpoint == 1.02);
    CHECK(c.generators[0].in_service);
}

TEST_CASE("transformer columns", "[matpower]")
{
    const auto text = replace(minimal_case, "0.02	0	0	0	0	0	1", "0.02	0	0	0	0.97	-2	1");
    const GridCase c = parse_matpower(text);
    CHECK(c.branches[0].tap == 0.97);
    CHECK(c.branches[0].shift == Approx(-2.0 * std::numbers::pi / 180.0));
    CHECK(c.branches[0].is_transformer);
}

TEST_CASE("MATPOWER semantic errors", "[matpower]")
{
    CHECK(kind_of([] { parse_matpower(replace(minimal_case, "	2	1	50", "	1	1	50")); }) ==
          ErrorKind::SemanticError);
    CHECK(kind_of([] { parse_matpower(replace(minimal_case, "	1	3	0", "	1	1	0")); }) ==
          ErrorKind::SemanticError);
    CHECK(kind_of([] { parse_matpower(replace(minimal_case, "	2	1	50", "	2	7	50")); }) ==
          ErrorKind::SemanticError);
    CHECK(kind_of([] { parse_matpower(replace(minimal_case, "mpc.baseMVA = 100;", "")); }) ==
          ErrorKind::SemanticError);
}

TEST_CASE("MATPOWER syntax errors carry the line number", "[matpower]")
{
    const auto text = replace(minimal_case, "	2	1	50	20", "	2	1	5x0	20");
    try {
        parse_matpower(text);
        FAIL("expected SyntaxError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SyntaxError);
        CHECK(std::string(e.what()).find("line 10") != std::string::npos);
    }
    CHECK(kind_of([] { parse_matpower(replace(minimal_case, "	1	2	0.1	0.2	0.02	0	0	0	0	0	1	-360	360;", "	1	2	0.1;")); }) ==
          ErrorKind::SyntaxError);
}

TEST_CASE("published case files parse", "[matpower]")
{
    const GridCase c30 = testing::ieee30();
    CHECK(c30.buses.size() == 30);
    CHECK(c30.branches.size() == 41);
    CHECK(c30.generators.size() == 6);
    CHECK(diagnose(c30).empty());

    const GridCase c300 = load_case(testing::data_path("case300.m"));
    CHECK(c300.buses.size() == 300);
    CHECK(c300.branches.size() == 411);
    CHECK(c300.generators.size() == 69);
    CHECK(diagnose(c300).empty());
}

TEST_CASE("native JSON round trip", "[json]")
{
    for (const auto& name : {"case_ieee30.m", "case300.m", "two_bus.m"}) {
        const GridCase original = load_case(testing::data_path(name));
        const std::string text = emit_native_json(original);
        const GridCase back = parse_native_json(text);
        CHECK(back == original);
        CHECK(emit_native_json(back) == text);
    }
}

TEST_CASE("native JSON keeps non-finite limits", "[json]")
{
    GridCase c = testing::two_bus();
    c.generators[0].q_max = std::numeric_limits<double>::infinity();
    c.generators[0].q_min = -std::numeric_limits<double>::infinity();
    const GridCase back = parse_native_json(emit_native_json(c));
    CHECK(back == c);
}

TEST_CASE("native JSON schema errors", "[json]")
{
    const std::string good = emit_native_json(testing::two_bus());
    auto doc = nlohmann::json::parse(good);

    auto missing_base = doc;
    missing_base.erase("base_mva");
    try {
        parse_native_json(missing_base.dump());
        FAIL("expected SchemaError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SchemaError);
        CHECK(std::string(e.what()).find("$.base_mva") != std::string::npos);
    }

    auto bad_id = doc;
    bad_id["buses"][1]["id"] = "two";
    try {
        parse_native_json(bad_id.dump());
        FAIL("expected SchemaError");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("$.buses[1].id") != std::string::npos);
    }

    auto extra = doc;
    extra["comment"] = "ignored";
    extra["buses"][0]["color"] = "red";
    CHECK(parse_native_json(extra.dump()) == testing::two_bus());

    CHECK(kind_of([] { parse_native_json("{not json"); }) == ErrorKind::SyntaxError);
}

TEST_CASE("snapshot CSV", "[csv]")
{
    const GridCase grid = testing::two_bus();
    const char* full = "time,bus,vr,vi,p,q\n"
                       "0,1,1,0,0.5,0.1\n0,2,0.95,-0.1,-0.5,0\n"
                       "1,1,1,0,0.6,0.1\n1,2,0.94,-0.12,-0.6,0\n"
                       "2,1,1,0,0.7,0.1\n2,2,0.93,-0.14,-0.7,0\n";
    const auto series = read_snapshot_csv(full, grid, "two_bus", "s1");
    REQUIRE(series.snapshots.size() == 3);
    CHECK(series.snapshots[2].time == 2.0);
    CHECK(series.snapshots[2].index == 2);
    CHECK(series.snapshots[1].voltage(2) == Complex(0.94, -0.12));
    CHECK(*series.snapshots[1].injection(2) == Complex(-0.6, 0.0));
    CHECK(series.scenario_id == "s1");

    const auto bare = read_snapshot_csv("time,bus,vr,vi\n0,1,1,0\n0,2,0.9,0\n", grid);
    REQUIRE(bare.snapshots.size() == 1);
    CHECK_FALSE(bare.snapshots[0].injections);
    CHECK_FALSE(bare.snapshots[0].injection(2));
}

TEST_CASE("snapshot CSV errors", "[csv]")
{
    const GridCase grid = testing::two_bus();
    try {
        read_snapshot_csv("time,bus,vr,vi\n0,1,1,0\n0,2,1,0\n1,1,1,0\n2,1,1,0\n2,2,1,0\n", grid);
        FAIL("expected MissingBus");
    } catch (const MissingBusError& e) {
        CHECK(e.kind() == ErrorKind::MissingBus);
        CHECK(e.time() == 1.0);
        CHECK(e.bus() == 2);
    }
    CHECK(kind_of([&] { read_snapshot_csv("time,bus,vr,vi\n1,1,1,0\n1,2,1,0\n0,1,1,0\n0,2,1,0\n", grid); }) ==
          ErrorKind::NonMonotoneTime);
    CHECK(kind_of([&] { read_snapshot_csv("time,bus,vr,vi\n0,1,1,0\n0,3,1,0\n", grid); }) == ErrorKind::UnknownBus);
    CHECK(kind_of([&] { read_snapshot_csv("t,bus,vr,vi\n", grid); }) == ErrorKind::SyntaxError);
    CHECK(kind_of([&] { read_snapshot_csv("time,bus,vr,vi\n0,1,1\n", grid); }) == ErrorKind::SyntaxError);
    CHECK(kind_of([&] { read_snapshot_csv("time,bus,vr,vi\n0,1,1,0\n0,1,1,0\n", grid); }) ==
          ErrorKind::SemanticError);
}

TEST_CASE("snapshot CSV round trip", "[csv][property]")
{
    const GridCase grid = testing::ieee30();
    const auto sweep = stress_sweep(grid, 1.0, 0.5, 0.1);
    SnapshotSeries series{"ieee30", "sweep", {}};
    for (const auto& p : sweep.points) {
        series.snapshots.push_back(p.snapshot);
    }
    const std::string text = write_snapshot_csv(series);
    const auto back = read_snapshot_csv(text, grid, "ieee30", "sweep");
    REQUIRE(back.snapshots.size() == series.snapshots.size());
    for (std::size_t i = 0; i < back.snapshots.size(); ++i) {
        CHECK(back.snapshots[i].voltages == series.snapshots[i].voltages);
        CHECK(*back.snapshots[i].injections == *series.snapshots[i].injections);
        CHECK(back.snapshots[i].time == series.snapshots[i].time);
    }
    CHECK(write_snapshot_csv(back) == text);

    // voltages only
    for (auto& s : series.snapshots) {
        s.injections.reset();
    }
    const std::string bare = write_snapshot_csv(series);
    CHECK(bare.rfind("time,bus,vr,vi\n", 0) == 0);
    CHECK(write_snapshot_csv(read_snapshot_csv(bare, grid)) == bare);
}

TEST_CASE("canonical float text", "[csv]")
{
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int i = 0; i < 1000; ++i) {
        const double x = u(rng);
        REQUIRE(*detail::parse_number(format_double(x)) == x);
    }
}
