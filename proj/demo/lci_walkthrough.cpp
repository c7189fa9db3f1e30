// Walks through the library on the bundled cases: the index of a single load
// bus as its demand grows, then a stress sweep of the IEEE 30-bus system.

#include "gridlci/gridlci.hpp"

#include <cstdio>
#include <string>

using namespace gridlci;

int main(int argc, char** argv)
{
    const std::string dir = argc > 1 ? argv[1] : GRIDLCI_DATA_DIR;

    const GridCase two = load_case(dir + "/two_bus.m");
    const auto y2 = build_ybus(two);
    const auto view = neighbor_view(y2, 2);
    const double pmax = two_bus_pmax(2.0, -4.0);
    std::printf("two-bus system, maximum transfer %.5f pu\n", pmax);
    std::printf("%8s %10s %10s %10s\n", "load", "|V2|", "lci", "closed");
    for (double frac : {0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99}) {
        const auto solved = solve(scale_case(two, frac * pmax)).snapshot;
        const auto value = lci(view, solved);
        std::printf("%8.4f %10.5f %10.5f %10.5f\n", frac * pmax, std::abs(solved.voltage(2)), value.lci,
                    two_bus_lci(2.0, -4.0, frac * pmax));
    }

    const GridCase grid = load_case(dir + "/case_ieee30.m");
    const auto y = build_ybus(grid);
    const auto sweep = stress_sweep(grid, 1.0, 0.05, 1e-4);
    const auto& last = sweep.points.back().snapshot;
    std::printf("\nIEEE 30-bus: lambda_max %.4f, total load %.1f MW\n", sweep.lambda_max,
                total_load(scale_case(grid, sweep.lambda_max)) * grid.base_mva);

    std::map<int, double> at_max;
    for (const auto& bus : grid.buses) {
        if (bus.kind == BusKind::PQ) {
            at_max[bus.id] = lci(neighbor_view(y, bus.id), last).lci;
        }
    }
    const auto weakest = system_critical(at_max);
    const auto z = z_scores(at_max);
    std::printf("weakest bus %d with lci %.4f\n", weakest.bus, weakest.value);
    std::printf("buses with z <= -2:");
    for (int bus : select_critical(z)) {
        std::printf(" %d", bus);
    }
    std::printf("\n");
    return 0;
}
