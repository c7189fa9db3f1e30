#pragma once

#include "gridlci/gridlci.hpp"

#include <random>
#include <string>

namespace testing
{

inline std::string data_path(const std::string& name) { return std::string(GRIDLCI_DATA_DIR) + "/" + name; }

inline gridlci::Bus bus(int id, gridlci::BusKind kind, double p_load = 0.0, double q_load = 0.0)
{
    gridlci::Bus b;
    b.id = id;
    b.kind = kind;
    b.p_load = p_load;
    b.q_load = q_load;
    return b;
}

inline gridlci::Branch line(int from, int to, double r, double x, double b_charging = 0.0)
{
    gridlci::Branch br;
    br.from_bus = from;
    br.to_bus = to;
    br.r = r;
    br.x = x;
    br.b_charging = b_charging;
    return br;
}

inline gridlci::Generator generator(int at, double p = 0.0, double v = 1.0)
{
    gridlci::Generator g;
    g.bus = at;
    g.p_gen = p;
    g.v_setpoint = v;
    g.q_min = -9.99;
    g.q_max = 9.99;
    return g;
}

/// Slack 1 at 1+j0 feeding a PQ load at bus 2 through r + jx.
inline gridlci::GridCase two_bus(double load = 0.5, double r = 0.1, double x = 0.2)
{
    gridlci::GridCase c;
    c.base_mva = 100.0;
    c.buses = {bus(1, gridlci::BusKind::Slack), bus(2, gridlci::BusKind::PQ, load)};
    c.branches = {line(1, 2, r, x)};
    c.generators = {generator(1)};
    return c;
}

/// Snapshot with the given voltages in case order and no injections.
inline gridlci::Snapshot snapshot_of(const gridlci::GridCase& grid, std::vector<gridlci::Complex> v)
{
    gridlci::Snapshot s;
    s.buses = gridlci::make_bus_index(grid);
    s.voltages = std::move(v);
    return s;
}

inline gridlci::GridCase ieee30() { return gridlci::load_case(data_path("case_ieee30.m")); }

} // namespace testing
