#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace gridlci;
using Catch::Approx;
using testing::bus;
using testing::line;

namespace
{

bool near(Complex a, Complex b, double tol) { return std::abs(a - b) <= tol; }

GridCase star(int spokes)
{
    GridCase c;
    c.base_mva = 100.0;
    c.buses.push_back(bus(1, BusKind::Slack));
    c.generators.push_back(testing::generator(1));
    for (int k = 2; k <= spokes + 1; ++k) {
        c.buses.push_back(bus(k, BusKind::PQ, 0.1));
        c.branches.push_back(line(1, k, 0.01 * k, 0.1));
    }
    return c;
}

// Sub-case holding bus d, its neighbors and only the branches touching d,
// with buses kept in their original relative order.
GridCase restricted(const GridCase& grid, int d)
{
    std::set<int> keep{d};
    for (const auto& br : grid.branches) {
        if (br.from_bus == d) {
            keep.insert(br.to_bus);
        }
        if (br.to_bus == d) {
            keep.insert(br.from_bus);
        }
    }
    GridCase sub;
    sub.base_mva = grid.base_mva;
    for (const auto& b : grid.buses) {
        if (keep.count(b.id)) {
            sub.buses.push_back(b);
        }
    }
    for (const auto& br : grid.branches) {
        if (br.from_bus == d || br.to_bus == d) {
            sub.branches.push_back(br);
        }
    }
    return sub;
}

} // namespace

TEST_CASE("two-bus admittance matrix", "[ybus]")
{
    const auto y = build_ybus(testing::two_bus());
    REQUIRE(y.dimension() == 2);
    CHECK(near(y.entry(1, 1), {2.0, -4.0}, 1e-12));
    CHECK(near(y.entry(2, 2), {2.0, -4.0}, 1e-12));
    CHECK(near(y.entry(1, 2), {-2.0, 4.0}, 1e-12));
    CHECK(near(y.entry(2, 1), {-2.0, 4.0}, 1e-12));
    // the series admittance times the impedance gives one back
    CHECK(near(-y.entry(1, 2) * Complex(0.1, 0.2), {1.0, 0.0}, 1e-12));
}

TEST_CASE("shunt-only bus", "[ybus]")
{
    GridCase c;
    c.base_mva = 100.0;
    auto b = bus(1, BusKind::Slack);
    b.g_shunt = 0.5;
    c.buses = {b};
    const auto y = build_ybus(c);
    REQUIRE(y.dimension() == 1);
    CHECK(y.entry(1, 1) == Complex(0.5, 0.0));
    CHECK(y.nonzeros() == 1);
}

TEST_CASE("shift-free cases give a symmetric matrix", "[ybus]")
{
    const auto grid = testing::ieee30();
    const auto y = build_ybus(grid);
    for (const auto& a : grid.buses) {
        for (const auto& b : grid.buses) {
            REQUIRE(y.entry(a.id, b.id) == y.entry(b.id, a.id));
        }
    }
}

TEST_CASE("off-diagonal entries only where branches exist", "[ybus]")
{
    const auto grid = testing::ieee30();
    const auto y = build_ybus(grid);
    std::set<std::pair<int, int>> joined;
    for (const auto& br : grid.branches) {
        joined.insert({br.from_bus, br.to_bus});
        joined.insert({br.to_bus, br.from_bus});
    }
    for (const auto& a : grid.buses) {
        for (const auto& b : grid.buses) {
            if (a.id != b.id && y.entry(a.id, b.id) != Complex{}) {
                CHECK(joined.count({a.id, b.id}) == 1);
            }
        }
    }
}

TEST_CASE("transformer tap and phase shift", "[ybus]")
{
    GridCase c = testing::two_bus();
    c.branches[0].tap = 0.95;
    c.branches[0].shift = 0.1;
    c.branches[0].b_charging = 0.04;
    const auto y = build_ybus(c);
    const Complex ys = 1.0 / Complex(0.1, 0.2);
    const Complex half(0.0, 0.02);
    CHECK(near(y.entry(1, 1), (ys + half) / (0.95 * 0.95), 1e-12));
    CHECK(near(y.entry(2, 2), ys + half, 1e-12));
    CHECK(near(y.entry(1, 2), -ys / std::polar(0.95, -0.1), 1e-12));
    CHECK(near(y.entry(2, 1), -ys / std::polar(0.95, 0.1), 1e-12));
    CHECK_FALSE(near(y.entry(1, 2), y.entry(2, 1), 1e-6));
}

TEST_CASE("out-of-service branches are skipped", "[ybus]")
{
    GridCase c = testing::two_bus();
    c.branches.push_back(line(1, 2, 0.0, 0.5));
    c.branches.back().in_service = false;
    const auto y = build_ybus(c);
    CHECK(near(y.entry(1, 2), {-2.0, 4.0}, 1e-12));
}

TEST_CASE("parallel branches accumulate", "[ybus]")
{
    GridCase c = testing::two_bus();
    c.branches.push_back(line(1, 2, 0.1, 0.2));
    const auto y = build_ybus(c);
    CHECK(near(y.entry(1, 2), {-4.0, 8.0}, 1e-12));
    CHECK(y.row(0).size() == 1);
}

TEST_CASE("branch errors", "[ybus]")
{
    GridCase c = testing::two_bus();
    c.branches[0].r = 0.0;
    c.branches[0].x = 0.0;
    try {
        build_ybus(c);
        FAIL("expected ZeroImpedanceBranch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ZeroImpedanceBranch);
    }

    GridCase d = testing::two_bus();
    d.branches[0].to_bus = 7;
    try {
        build_ybus(d);
        FAIL("expected DanglingBranch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DanglingBranch);
    }
}

TEST_CASE("neighbor views", "[neighbors]")
{
    const auto y = build_ybus(testing::two_bus());
    const auto v = neighbor_view(y, 1);
    CHECK(v.bus == 1);
    CHECK(near(v.diagonal, {2.0, -4.0}, 1e-12));
    REQUIRE(v.neighbors.size() == 1);
    CHECK(v.neighbors[0].bus == 2);
    CHECK(near(v.neighbors[0].admittance, {-2.0, 4.0}, 1e-12));

    GridCase iso = testing::two_bus();
    iso.buses.push_back(bus(3, BusKind::PQ));
    const auto yi = build_ybus(iso);
    const auto vi = neighbor_view(yi, 3);
    CHECK(vi.diagonal == Complex{});
    CHECK(vi.neighbors.empty());

    const auto ys = build_ybus(star(3));
    CHECK(neighbor_view(ys, 1).neighbors.size() == 3);
    CHECK(neighbor_view(ys, 3).neighbors.size() == 1);

    try {
        neighbor_view(y, 42);
        FAIL("expected UnknownBus");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UnknownBus);
    }
}

TEST_CASE("neighbor view is the same from a restricted case", "[neighbors][property]")
{
    for (const auto& grid : {testing::ieee30(), load_case(testing::data_path("case300.m"))}) {
        const auto y = build_ybus(grid);
        for (const auto& b : grid.buses) {
            const auto sub = build_ybus(restricted(grid, b.id));
            const auto full_view = neighbor_view(y, b.id);
            const auto local_view = neighbor_view(sub, b.id);
            REQUIRE(full_view == local_view);
        }
    }
}

TEST_CASE("diagonal is minus the off-diagonal sum without shunts, charging or taps", "[ybus][property]")
{
    GridCase grid = testing::ieee30();
    for (auto& b : grid.buses) {
        b.g_shunt = 0.0;
        b.b_shunt = 0.0;
    }
    for (auto& br : grid.branches) {
        br.b_charging = 0.0;
        br.tap = 1.0;
        br.shift = 0.0;
    }
    const auto y = build_ybus(grid);
    for (const auto& b : grid.buses) {
        const auto view = neighbor_view(y, b.id);
        Complex sum{};
        for (const auto& nb : view.neighbors) {
            sum += nb.admittance;
        }
        REQUIRE(std::abs(view.diagonal + sum) <= 1e-12);
    }
}

TEST_CASE("injections", "[injections]")
{
    const GridCase grid = testing::two_bus();
    const auto y = build_ybus(grid);
    const double vr = 0.5 + std::sqrt(0.19);
    const auto s = compute_injections(y, testing::snapshot_of(grid, {{1.0, 0.0}, {vr, -0.1}}));
    REQUIRE(s.injections);
    CHECK(s.injection(2)->real() == Approx(-0.5).margin(1e-12));
    CHECK(s.injection(2)->imag() == Approx(0.0).margin(1e-12));

    // idempotent
    const auto again = compute_injections(y, s);
    CHECK(*again.injections == *s.injections);

    const GridCase ieee = testing::ieee30();
    GridCase flat = ieee;
    for (auto& b : flat.buses) {
        b.g_shunt = b.b_shunt = 0.0;
    }
    for (auto& br : flat.branches) {
        br.b_charging = 0.0;
        br.tap = 1.0;
    }
    const auto yf = build_ybus(flat);
    const auto equal =
        compute_injections(yf, testing::snapshot_of(flat, std::vector<Complex>(flat.buses.size(), {1.02, -0.05})));
    for (const auto& p : *equal.injections) {
        CHECK(std::abs(p) <= 1e-12);
    }
}

TEST_CASE("shunt injection sign follows S = V conj(Y V)", "[injections]")
{
    GridCase c;
    c.base_mva = 100.0;
    auto b = bus(1, BusKind::Slack);
    b.g_shunt = 0.5;
    c.buses = {b};
    const auto s = compute_injections(build_ybus(c), testing::snapshot_of(c, {{1.0, 0.0}}));
    // the source at the bus must deliver what the shunt consumes
    CHECK(s.injection(1)->real() == Approx(0.5).margin(1e-15));
    CHECK(s.injection(1)->imag() == Approx(0.0).margin(1e-15));
}

TEST_CASE("injection dimension mismatch", "[injections]")
{
    const auto y = build_ybus(testing::two_bus());
    GridCase three = testing::two_bus();
    three.buses.push_back(bus(3, BusKind::PQ));
    try {
        compute_injections(y, testing::snapshot_of(three, {{1, 0}, {1, 0}, {1, 0}}));
        FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DimensionMismatch);
    }
}

TEST_CASE("lossless networks conserve active power", "[injections][property]")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> x(0.05, 0.5), bc(0.0, 0.1), mag(0.9, 1.1), ang(-0.4, 0.4);
    for (int trial = 0; trial < 50; ++trial) {
        GridCase c;
        c.base_mva = 100.0;
        const int n = 3 + trial % 10;
        for (int k = 1; k <= n; ++k) {
            auto b = bus(k, k == 1 ? BusKind::Slack : BusKind::PQ);
            b.b_shunt = bc(rng);
            c.buses.push_back(b);
        }
        for (int k = 2; k <= n; ++k) {
            std::uniform_int_distribution<int> parent(1, k - 1);
            auto br = line(parent(rng), k, 0.0, x(rng), bc(rng));
            br.tap = 0.9 + 0.2 * mag(rng) - 0.18;
            c.branches.push_back(br);
        }
        c.branches.push_back(line(1, n, 0.0, x(rng)));
        std::vector<Complex> v;
        for (int k = 0; k < n; ++k) {
            v.push_back(std::polar(mag(rng), ang(rng)));
        }
        const auto s = compute_injections(build_ybus(c), testing::snapshot_of(c, v));
        double total = 0.0;
        for (const auto& inj : *s.injections) {
            total += inj.real();
        }
        REQUIRE(std::abs(total) <= 1e-9);
    }
}

TEST_CASE("case diagnostics", "[validate]")
{
    CHECK(diagnose(testing::ieee30()).empty());
    CHECK_NOTHROW(validate(testing::two_bus()));

    GridCase no_slack = testing::two_bus();
    no_slack.buses[0].kind = BusKind::PV;
    CHECK_THROWS_AS(validate(no_slack), Error);

    GridCase two_slack = testing::two_bus();
    two_slack.buses[1].kind = BusKind::Slack;
    CHECK(diagnose(two_slack).size() == 1);

    GridCase bad = testing::two_bus();
    bad.buses[1].v_init_mag = 0.0;
    bad.generators[0].q_min = 1.0;
    bad.generators[0].q_max = -1.0;
    bad.branches[0].tap = -1.0;
    bad.branches.push_back(line(2, 2, 0.1, 0.1));
    bad.generators.push_back(testing::generator(9));
    CHECK(diagnose(bad).size() == 5);

    try {
        validate(bad);
        FAIL("expected InvalidCase");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidCase);
    }
}

TEST_CASE("bus index", "[validate]")
{
    BusIndex idx({10, 3, 7});
    CHECK(idx.at(3) == 1);
    CHECK_FALSE(idx.find(4));
    CHECK(idx.id(2) == 7);
    CHECK_THROWS_AS(BusIndex({1, 2, 1}), Error);
}
